// Copyright 2026 The GDB Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "gdb/cli.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "gdb/synthetic.hpp"

namespace gdb {
namespace {

namespace fs = std::filesystem;

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "gdbin");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int count_lines(const std::string& s) { return static_cast<int>(std::count(s.begin(), s.end(), '\n')); }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("gdb_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // One synthetic pair plus a config small enough to train in seconds.
  fs::path toy_dataset() {
    const fs::path root = path("data");
    fs::create_directories(root / "originals");
    fs::create_directories(root / "gt");
    const SyntheticDocument d = synthetic_document(64, 64, 21);
    save_image(d.image, root / "originals" / "page.png");
    save_image(d.gt, root / "gt" / "page.png");
    std::ofstream(path("toy.cfg")) << "# tiny model\ncoarse_base = 4\nrefine_base = 4\ndisc_base = 4\nn_res = 1\n"
                                      "patch = 32\nglobal_size = 32\nbatch = 1\nlr_g = 1e-3\nlr_d = 1e-3\n";
    return root;
  }

  std::string toy_checkpoint() {
    const fs::path data = toy_dataset();
    const CliResult r = cli({"train", "--data-dir", data.string(), "--out-checkpoint", path("m.ckpt").string(), "--steps",
                       "5", "--seed", "3", "--config", path("toy.cfg").string()});
    EXPECT_EQ(r.code, 0) << r.err;
    return path("m.ckpt").string();
  }

  fs::path dir_;
};

TEST_F(CliTest, UsageErrors) {
  CliResult r = cli({});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  r = cli({"baseline", "--method", "foo", "--input", "a.png", "--output", "b.png"});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("--method"), std::string::npos);
  EXPECT_NE(r.err.find("Usage"), std::string::npos);
  EXPECT_TRUE(r.out.empty());
  EXPECT_EQ(cli({"frobnicate"}).code, kExitUsage);
  EXPECT_EQ(cli({"binarize", "--input", "x"}).code, kExitUsage);
  EXPECT_EQ(cli({"--help"}).code, kExitOk);
}

TEST_F(CliTest, OtsuBaseline) {
  RasterImage img(20, 10, 1);
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) img.at(y, x) = x < 6 ? 0.1f : 0.9f;
  save_image(img, path("two.pgm"));
  const CliResult r = cli({"baseline", "--method", "otsu", "--input", path("two.pgm").string(), "--output",
                     path("two_out.png").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out.rfind("threshold=", 0), 0u);
  const BinaryMap out = load_binary(path("two_out.png"));
  for (int y = 0; y < 10; ++y)
    for (int x = 0; x < 20; ++x) EXPECT_EQ(out.at(y, x), x < 6 ? 1 : 0);
}

TEST_F(CliTest, LocalBaselinesEchoParameters) {
  const SyntheticDocument d = synthetic_document(48, 48, 1);
  save_image(d.image, path("doc.png"));
  CliResult r = cli({"baseline", "--method", "sauvola", "--input", path("doc.png").string(), "--output",
               path("s.png").string(), "--window", "15", "--k", "0.3"});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("window 15 k 0.3"), std::string::npos) << r.err;
  EXPECT_TRUE(fs::exists(path("s.png")));
  r = cli({"baseline", "--method", "niblack", "--input", path("doc.png").string(), "--output",
           path("n.png").string()});
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.err.find("k -0.2"), std::string::npos) << r.err;
  r = cli({"baseline", "--method", "sauvola", "--input", path("doc.png").string(), "--output",
           path("s.png").string(), "--window", "14"});
  EXPECT_EQ(r.code, kExitUsage);
  r = cli({"baseline", "--method", "otsu", "--input", path("missing.png").string(), "--output",
           path("o.png").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  r = cli({"baseline", "--method", "otsu", "--input", path("doc.png").string(), "--output",
           path("nodir/o.png").string()});
  EXPECT_EQ(r.code, kExitRuntime);
}

TEST_F(CliTest, TrainWritesCheckpointAndLog) {
  const fs::path data = toy_dataset();
  auto train = [&](const std::string& ckpt, const std::string& steps, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"train", "--data-dir", data.string(), "--out-checkpoint", path(ckpt).string(),
                                     "--steps", steps, "--seed", "7", "--config", path("toy.cfg").string()};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  CliResult r = train("a.ckpt", "50");
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "step=50\n");
  EXPECT_TRUE(fs::exists(path("a.ckpt")));
  EXPECT_TRUE(fs::exists(path("a.ckpt.manifest.csv")));
  const std::string log = slurp(path("a.ckpt.log.csv"));
  EXPECT_EQ(count_lines(log), 51);
  EXPECT_EQ(log.rfind(log_header() + "\n", 0), 0u);

  ASSERT_EQ(train("b.ckpt", "50").code, 0);
  EXPECT_EQ(slurp(path("b.ckpt.log.csv")), log);
  EXPECT_EQ(slurp(path("b.ckpt")), slurp(path("a.ckpt")));

  // resume continues numbering and appends to the log
  r = train("c.ckpt", "5", {"--resume", path("a.ckpt").string(), "--log", path("a.ckpt.log.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "step=55\n");
  const std::string resumed = slurp(path("a.ckpt.log.csv"));
  EXPECT_EQ(count_lines(resumed), 56);
  EXPECT_NE(resumed.find("\n51,"), std::string::npos);
  EXPECT_NE(resumed.find("\n55,"), std::string::npos);
}

TEST_F(CliTest, TrainFailures) {
  const fs::path data = toy_dataset();
  std::ofstream(path("bad.cfg")) << "patch = 32\nlearning_rate = 1\n";
  CliResult r = cli({"train", "--data-dir", data.string(), "--out-checkpoint", path("x.ckpt").string(), "--config",
               path("bad.cfg").string()});
  EXPECT_EQ(r.code, kExitUsage);
  EXPECT_NE(r.err.find("learning_rate"), std::string::npos);

  fs::create_directories(path("empty/originals"));
  fs::create_directories(path("empty/gt"));
  r = cli({"train", "--data-dir", path("empty").string(), "--out-checkpoint", path("x.ckpt").string()});
  EXPECT_EQ(r.code, kExitRuntime);

  // absurd learning rates blow the weights up within a few steps
  std::ofstream(path("nan.cfg")) << "coarse_base = 4\nrefine_base = 4\ndisc_base = 4\nn_res = 1\npatch = 32\n"
                                    "global_size = 32\nbatch = 1\nlr_g = 1e30\nlr_d = 1e30\n";
  r = cli({"train", "--data-dir", data.string(), "--out-checkpoint", path("nan.ckpt").string(), "--steps", "20",
           "--config", path("nan.cfg").string()});
  EXPECT_EQ(r.code, kExitNumerical) << r.err;
  EXPECT_NE(r.err.find("non-finite"), std::string::npos) << r.err;
}

TEST_F(CliTest, BinarizeWithCheckpoint) {
  const std::string ckpt = toy_checkpoint();
  const SyntheticDocument d = synthetic_document(70, 45, 2);
  save_image(d.image, path("in.png"));
  auto bin = [&](const std::string& out, std::vector<std::string> extra = {}) {
    std::vector<std::string> args = {"binarize", "--checkpoint", ckpt, "--input", path("in.png").string(),
                                     "--output", path(out).string(), "--patch", "32", "--stride", "16"};
    args.insert(args.end(), extra.begin(), extra.end());
    return cli(args);
  };
  ASSERT_EQ(bin("a.png").code, 0);
  const BinaryMap a = load_binary(path("a.png"));
  EXPECT_EQ(a.width(), 70);
  EXPECT_EQ(a.height(), 45);
  ASSERT_EQ(bin("b.png", {"--iterate", "0"}).code, 0);
  EXPECT_EQ(slurp(path("a.png")), slurp(path("b.png")));
  ASSERT_EQ(bin("c.png", {"--no-multiscale", "--iterate", "1", "--threads", "2"}).code, 0);
  ASSERT_EQ(bin("d.png", {"--no-multiscale", "--iterate", "1", "--threads", "1"}).code, 0);
  EXPECT_EQ(slurp(path("c.png")), slurp(path("d.png")));
  EXPECT_EQ(bin("e.png", {"--iterate", "-1"}).code, kExitUsage);
}

TEST_F(CliTest, BinarizeCheckpointFailures) {
  const std::string ckpt = toy_checkpoint();
  const SyntheticDocument d = synthetic_document(32, 32, 2);
  save_image(d.image, path("in.png"));
  std::string bytes = slurp(ckpt);
  bytes[bytes.size() / 2] ^= 1;
  std::ofstream(path("corrupt.ckpt"), std::ios::binary) << bytes;
  CliResult r = cli({"binarize", "--checkpoint", path("corrupt.ckpt").string(), "--input", path("in.png").string(),
               "--output", path("o.png").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("corrupt checkpoint"), std::string::npos) << r.err;
  r = cli({"binarize", "--checkpoint", path("none.ckpt").string(), "--input", path("in.png").string(), "--output",
           path("o.png").string()});
  EXPECT_EQ(r.code, kExitRuntime);
  EXPECT_NE(r.err.find("missing checkpoint"), std::string::npos) << r.err;
}

TEST_F(CliTest, EvaluateDirectories) {
  fs::create_directories(path("gt"));
  fs::create_directories(path("pred"));
  for (int i = 0; i < 3; ++i) {
    const SyntheticDocument d = synthetic_document(40, 30, 30 + i);
    save_image(d.gt, path("gt") / ("p" + std::to_string(i) + ".png"));
    save_image(d.gt, path("pred") / ("p" + std::to_string(i) + ".png"));
  }
  CliResult r = cli({"evaluate", "--pred-dir", path("gt").string(), "--gt-dir", path("gt").string(), "--report",
               path("self.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_EQ(r.out, "MEAN,100.0000,100.0000,inf,0.0000\n");

  save_image(BinaryMap(41, 30), path("pred") / "p1.png");
  r = cli({"evaluate", "--pred-dir", path("pred").string(), "--gt-dir", path("gt").string(), "--report",
           path("r.csv").string()});
  ASSERT_EQ(r.code, 0) << r.err;
  EXPECT_NE(r.err.find("warning: skipped p1: size mismatch"), std::string::npos) << r.err;
  const std::string csv = slurp(path("r.csv"));
  EXPECT_NE(csv.find("# skipped p1: size mismatch"), std::string::npos);
  EXPECT_EQ(csv.find("\np1,"), std::string::npos);

  fs::create_directories(path("nothing"));
  r = cli({"evaluate", "--pred-dir", path("nothing").string(), "--gt-dir", path("gt").string(), "--report",
           path("n.csv").string()});
  EXPECT_EQ(r.code, kExitRuntime);
}

}  // namespace
}  // namespace gdb
