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

// Portable checkpoint files.
//
//   "GDBCKPT1"  u32 version  u32 entry count
//   per entry:  u32 name length, name bytes, u32 rank, u32 dims[rank],
//               f32 values[prod(dims)]
//   u64 FNV-1a of every preceding byte
//
// All integers and floats are little-endian. Besides the parameters a file
// holds the model configuration (meta.*), spectral-norm vectors (*.sn.u/v)
// and, for training checkpoints, the Adam moments (opt.*).

#pragma once

#include <bit>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <memory>
#include <optional>
#include <tuple>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "gdb/error.hpp"
#include "gdb/gdbnet.hpp"
#include "gdb/pipeline.hpp"

namespace gdb {

inline constexpr char kCheckpointMagic[8] = {'G', 'D', 'B', 'C', 'K', 'P', 'T', '1'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointEntry {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;
};

class CheckpointTable {
 public:
  std::uint32_t version = kCheckpointVersion;

  void add(std::string name, std::vector<std::uint32_t> dims, std::vector<float> values) {
    std::size_t n = 1;
    for (auto d : dims) n *= d;
    if (n != values.size()) throw ArgumentError("checkpoint entry " + name + " has inconsistent dims");
    if (index_.count(name)) throw CheckpointError(name, "duplicate checkpoint entry '" + name + "'");
    index_[name] = entries_.size();
    entries_.push_back({std::move(name), std::move(dims), std::move(values)});
  }

  const CheckpointEntry* find(const std::string& name) const {
    auto it = index_.find(name);
    return it == index_.end() ? nullptr : &entries_[it->second];
  }

  const std::vector<CheckpointEntry>& entries() const { return entries_; }

 private:
  std::vector<CheckpointEntry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

namespace detail {

inline std::uint64_t fnv1a(const unsigned char* p, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

class ByteWriter {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) bytes.push_back(static_cast<unsigned char>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    bytes.insert(bytes.end(), c, c + n);
  }
  std::vector<unsigned char> bytes;
};

class ByteReader {
 public:
  ByteReader(const unsigned char* p, std::size_t n) : p_(p), n_(n) {}
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(p_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(p_ + pos_), n);
    pos_ += n;
    return s;
  }
  bool done() const { return pos_ == n_; }

 private:
  void need(std::size_t k) const {
    if (n_ - pos_ < k) throw ChecksumError("corrupt checkpoint: entry table runs past the end of the file");
  }
  const unsigned char* p_;
  std::size_t n_;
  std::size_t pos_ = 0;
};

// Integers above 2^24 do not survive f32, so counters are split in 16-bit halves.
inline std::vector<float> encode_count(long v) {
  const auto u = static_cast<std::uint64_t>(v);
  return {static_cast<float>(u & 0xffff), static_cast<float>((u >> 16) & 0xffff), static_cast<float>(u >> 32)};
}

inline long decode_count(const CheckpointEntry& e) {
  if (e.values.size() != 3) throw CheckpointError(e.name, "malformed counter entry '" + e.name + "'");
  return static_cast<long>(static_cast<std::uint64_t>(e.values[0]) | static_cast<std::uint64_t>(e.values[1]) << 16 |
                           static_cast<std::uint64_t>(e.values[2]) << 32);
}

inline std::vector<std::uint32_t> dims_of(const Shape& s, int rank) {
  const std::uint32_t all[4] = {static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c),
                                static_cast<std::uint32_t>(s.h), static_cast<std::uint32_t>(s.w)};
  return std::vector<std::uint32_t>(all + 4 - rank, all + 4);
}

// Parameters are stored with their natural rank: 4 for kernels, 1 for biases.
inline std::vector<std::uint32_t> param_dims(const Tensor& t) {
  const Shape& s = t.shape();
  if (s.c == 1 && s.h == 1 && s.w == 1) return {static_cast<std::uint32_t>(s.n)};
  return dims_of(s, 4);
}

template <class Values>
std::vector<float> to_f32(const Values& v) {
  return std::vector<float>(v.begin(), v.end());
}

inline void add_sn(CheckpointTable& t, const std::string& prefix, const Discriminator& d) {
  const auto& states = d.sn_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string base = prefix + ".conv" + std::to_string(i) + ".sn.";
    t.add(base + "u", {static_cast<std::uint32_t>(states[i].u.size())}, to_f32(states[i].u));
    t.add(base + "v", {static_cast<std::uint32_t>(states[i].v.size())}, to_f32(states[i].v));
  }
}

inline void add_adam(CheckpointTable& t, const std::string& prefix, const AdamState& s, const ParameterSet& params) {
  t.add(prefix + ".step", {3}, encode_count(s.step));
  if (s.m.empty()) return;
  const auto& entries = params.entries();
  if (s.m.size() != entries.size()) throw StateError("optimizer state does not match parameter set " + prefix);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto dims = param_dims(entries[i].second);
    t.add(prefix + ".m." + entries[i].first, dims, to_f32(s.m[i]));
    t.add(prefix + ".v." + entries[i].first, dims, to_f32(s.v[i]));
  }
}

inline std::string block_of(const std::string& name) {
  // coarse.res4.conv0.gating.weight -> coarse.res4; d_refine.conv2.weight -> d_refine.conv2
  const auto a = name.find('.');
  if (a == std::string::npos) return name;
  const auto b = name.find('.', a + 1);
  return b == std::string::npos ? name : name.substr(0, b);
}

inline bool is_parameter_entry(const std::string& name) {
  auto ends_with = [&](const char* s) {
    const std::string suffix(s);
    return name.size() >= suffix.size() && name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  return name.rfind("meta.", 0) != 0 && name.rfind("opt.", 0) != 0 && !ends_with(".sn.u") && !ends_with(".sn.v");
}

inline void load_sn(const CheckpointTable& t, const std::string& prefix, Discriminator& d) {
  auto& states = d.sn_states();
  for (std::size_t i = 0; i < states.size(); ++i) {
    const std::string base = prefix + ".conv" + std::to_string(i) + ".sn.";
    const CheckpointEntry* u = t.find(base + "u");
    const CheckpointEntry* v = t.find(base + "v");
    if (!u || !v) throw CheckpointError(base + (u ? "v" : "u"), "checkpoint lacks spectral-norm state " + base + (u ? "v" : "u"));
    states[i].u.assign(u->values.begin(), u->values.end());
    states[i].v.assign(v->values.begin(), v->values.end());
  }
}

inline void load_adam(const CheckpointTable& t, const std::string& prefix, AdamState& s, const ParameterSet& params) {
  const CheckpointEntry* step = t.find(prefix + ".step");
  if (!step) throw CheckpointError(prefix + ".step", "checkpoint lacks optimizer state " + prefix);
  s.step = decode_count(*step);
  s.m.clear();
  s.v.clear();
  if (s.step == 0) return;
  for (const auto& [name, tensor] : params.entries()) {
    const CheckpointEntry* m = t.find(prefix + ".m." + name);
    const CheckpointEntry* v = t.find(prefix + ".v." + name);
    if (!m || !v) throw CheckpointError(prefix + ".m." + name, "checkpoint lacks optimizer moments for " + name);
    if (m->values.size() != tensor.numel() || v->values.size() != tensor.numel())
      throw CheckpointError(m->name, "optimizer moments for " + name + " have the wrong size");
    s.m.emplace_back(m->values.begin(), m->values.end());
    s.v.emplace_back(v->values.begin(), v->values.end());
  }
}

}  // namespace detail

inline std::vector<unsigned char> encode_checkpoint(const CheckpointTable& table) {
  detail::ByteWriter w;
  w.raw(kCheckpointMagic, sizeof kCheckpointMagic);
  w.u32(table.version);
  w.u32(static_cast<std::uint32_t>(table.entries().size()));
  for (const CheckpointEntry& e : table.entries()) {
    w.u32(static_cast<std::uint32_t>(e.name.size()));
    w.raw(e.name.data(), e.name.size());
    w.u32(static_cast<std::uint32_t>(e.dims.size()));
    for (auto d : e.dims) w.u32(d);
    for (float v : e.values) w.f32(v);
  }
  w.u64(detail::fnv1a(w.bytes.data(), w.bytes.size()));
  return std::move(w.bytes);
}

inline CheckpointTable decode_checkpoint(const std::vector<unsigned char>& bytes) {
  constexpr std::size_t kHeader = sizeof kCheckpointMagic + 8;
  if (bytes.size() < kHeader + 8) throw ChecksumError("corrupt checkpoint: file is truncated");
  if (!std::equal(kCheckpointMagic, kCheckpointMagic + 8, bytes.begin()))
    throw FormatError("not a checkpoint file (bad magic)");
  const std::size_t body = bytes.size() - 8;
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != detail::fnv1a(bytes.data(), body)) throw ChecksumError("corrupt checkpoint: checksum mismatch");

  detail::ByteReader r(bytes.data() + sizeof kCheckpointMagic, body - sizeof kCheckpointMagic);
  CheckpointTable t;
  t.version = r.u32();
  if (t.version != kCheckpointVersion)
    throw FormatError("unsupported checkpoint version " + std::to_string(t.version));
  const std::uint32_t count = r.u32();
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str(r.u32());
    const std::uint32_t rank = r.u32();
    if (rank > 8) throw FormatError("checkpoint entry " + name + " has rank " + std::to_string(rank));
    std::vector<std::uint32_t> dims(rank);
    std::size_t n = 1;
    for (auto& d : dims) n *= (d = r.u32());
    std::vector<float> values(n);
    for (float& v : values) v = r.f32();
    t.add(std::move(name), std::move(dims), std::move(values));
  }
  if (!r.done()) throw FormatError("checkpoint has trailing bytes after the entry table");
  return t;
}

inline void write_checkpoint(const CheckpointTable& table, const std::filesystem::path& path) {
  const auto bytes = encode_checkpoint(table);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("failed writing checkpoint " + path.string());
}

inline CheckpointTable read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw StateError("missing checkpoint " + path.string());
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

// ---------------------------------------------------------------------------
// model <-> table

inline CheckpointTable model_table(const GdbModel& model, long step = 0) {
  const ModelConfig& c = model.config();
  CheckpointTable t;
  std::vector<float> cfg = {static_cast<float>(c.coarse_base), static_cast<float>(c.n_res),
                            static_cast<float>(c.refine_base), static_cast<float>(c.disc_base)};
  for (int d : c.dilations) cfg.push_back(static_cast<float>(d));
  t.add("meta.model", {static_cast<std::uint32_t>(cfg.size())}, cfg);
  t.add("meta.step", {3}, detail::encode_count(step));
  const ParameterSet params = model.all_params();
  for (const auto& [name, tensor] : params.entries())
    t.add(name, detail::param_dims(tensor), detail::to_f32(tensor.data()));
  detail::add_sn(t, "d_coarse", model.d_coarse());
  detail::add_sn(t, "d_refine", model.d_refine());
  return t;
}

inline CheckpointTable train_table(TrainState& s) {
  CheckpointTable t = model_table(s.model, s.step);
  t.add("meta.geometry", {2}, {static_cast<float>(s.patch), static_cast<float>(s.global_size)});
  detail::add_adam(t, "opt.g", s.opt_g, s.model.generator_params());
  detail::add_adam(t, "opt.dc", s.opt_dc, s.model.d_coarse_params());
  detail::add_adam(t, "opt.dr", s.opt_dr, s.model.d_refine_params());
  return t;
}

inline ModelConfig model_config(const CheckpointTable& t) {
  const CheckpointEntry* e = t.find("meta.model");
  if (!e || e->values.size() < 4) throw CheckpointError("meta.model", "checkpoint lacks the model configuration");
  ModelConfig c;
  c.coarse_base = static_cast<int>(e->values[0]);
  c.n_res = static_cast<int>(e->values[1]);
  c.refine_base = static_cast<int>(e->values[2]);
  c.disc_base = static_cast<int>(e->values[3]);
  c.dilations.assign(e->values.begin() + 4, e->values.end());
  return c;
}

// (patch, global size) the checkpoint was trained at, if recorded.
inline std::optional<std::pair<int, int>> checkpoint_geometry(const CheckpointTable& t) {
  const CheckpointEntry* e = t.find("meta.geometry");
  if (!e || e->values.size() != 2) return std::nullopt;
  return std::pair{static_cast<int>(e->values[0]), static_cast<int>(e->values[1])};
}

inline long checkpoint_step(const CheckpointTable& t) {
  const CheckpointEntry* e = t.find("meta.step");
  return e ? detail::decode_count(*e) : 0;
}

// Copies every model parameter and spectral-norm vector from `t` into
// `model`, matching by name and dims. Missing or surplus parameters fail with
// the blocks involved.
inline void load_parameters(const CheckpointTable& t, GdbModel& model) {
  const ParameterSet all = model.all_params();
  std::set<std::string> missing_blocks;
  std::string first_missing;
  for (const auto& [name, tensor] : all.entries()) {
    const CheckpointEntry* e = t.find(name);
    if (!e) {
      if (first_missing.empty()) first_missing = name;
      missing_blocks.insert(detail::block_of(name));
      continue;
    }
    if (e->dims != detail::param_dims(tensor))
      throw CheckpointError(name, "checkpoint tensor '" + name + "' has dims incompatible with the model");
  }
  if (!first_missing.empty()) {
    std::string blocks;
    for (const std::string& b : missing_blocks) blocks += (blocks.empty() ? "" : ", ") + b;
    throw CheckpointError(first_missing, "checkpoint lacks tensor '" + first_missing + "'; absent blocks: " + blocks);
  }
  for (const CheckpointEntry& e : t.entries())
    if (detail::is_parameter_entry(e.name) && !all.contains(e.name))
      throw CheckpointError(e.name, "checkpoint tensor '" + e.name + "' (block " + detail::block_of(e.name) +
                                        ") has no counterpart in the model");
  for (const auto& [name, tensor] : all.entries()) {
    Tensor dst = tensor;
    const CheckpointEntry* e = t.find(name);
    std::copy(e->values.begin(), e->values.end(), dst.data().begin());
  }
  detail::load_sn(t, "d_coarse", model.d_coarse());
  detail::load_sn(t, "d_refine", model.d_refine());
}

inline void save_model(const GdbModel& model, const std::filesystem::path& path) {
  write_checkpoint(model_table(model), path);
}

inline GdbModel load_model(const CheckpointTable& t) {
  GdbModel model(model_config(t), 0);
  load_parameters(t, model);
  return model;
}

inline GdbModel load_model(const std::filesystem::path& path) { return load_model(read_checkpoint(path)); }

inline void save_train_state(TrainState& s, const std::filesystem::path& path) {
  write_checkpoint(train_table(s), path);
}

// Rebuilds the training state saved at `path`. The model configuration is
// taken from the file and written into `cfg`; optimizer hyper-parameters
// stay those of `cfg`.
inline std::unique_ptr<TrainState> load_train_state(const std::filesystem::path& path, TrainConfig& cfg) {
  const CheckpointTable t = read_checkpoint(path);
  cfg.model = model_config(t);
  if (const auto g = checkpoint_geometry(t)) std::tie(cfg.patch, cfg.global_size) = *g;
  auto s = std::make_unique<TrainState>(cfg);
  load_parameters(t, s->model);
  s->step = checkpoint_step(t);
  detail::load_adam(t, "opt.g", s->opt_g, s->model.generator_params());
  detail::load_adam(t, "opt.dc", s->opt_dc, s->model.d_coarse_params());
  detail::load_adam(t, "opt.dr", s->opt_dr, s->model.d_refine_params());
  return s;
}

}  // namespace gdb
