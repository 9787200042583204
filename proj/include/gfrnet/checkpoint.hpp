#pragma once

// Checkpoint persistence: little-endian binary container with an explicit
// magic/version header, a config snapshot, named parameter and buffer blobs,
// and the optimizer state. Raw float bytes are stored untouched, so a
// save/load/save cycle is byte-identical.

#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "gfrnet/blocks.hpp"
#include "gfrnet/train.hpp"

namespace gfrnet {

namespace ckpt_detail {

constexpr char kMagic[8] = {'G', 'F', 'R', 'N', 'C', 'K', 'P', '1'};

template <class S, class V>
void write_pod(S& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class S, class V>
void read_pod(S& in, V& v, const std::string& path) {
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw DataError(path + ": truncated checkpoint");
}

template <class S>
void write_string(S& out, const std::string& s) {
  write_pod(out, std::uint64_t(s.size()));
  out.write(s.data(), std::streamsize(s.size()));
}

template <class S>
std::string read_string(S& in, const std::string& path) {
  std::uint64_t n = 0;
  read_pod(in, n, path);
  if (n > (1ull << 30)) throw DataError(path + ": implausible string length in checkpoint");
  std::string s(n, '\0');
  in.read(s.data(), std::streamsize(n));
  if (!in) throw DataError(path + ": truncated checkpoint");
  return s;
}

template <class S>
void write_floats(S& out, const std::vector<float>& v) {
  write_pod(out, std::uint64_t(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), std::streamsize(v.size() * sizeof(float)));
}

template <class S>
std::vector<float> read_floats(S& in, const std::string& path) {
  std::uint64_t n = 0;
  read_pod(in, n, path);
  if (n > (1ull << 32)) throw DataError(path + ": implausible blob length in checkpoint");
  std::vector<float> v(n);
  in.read(reinterpret_cast<char*>(v.data()), std::streamsize(n * sizeof(float)));
  if (!in) throw DataError(path + ": truncated checkpoint");
  return v;
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::string& path, ParamRegistry<float>& reg,
                            const Adam<float>* opt, int epoch, const std::string& config_json) {
  namespace d = ckpt_detail;
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open checkpoint for writing");
  out.write(d::kMagic, sizeof(d::kMagic));
  d::write_pod(out, std::uint32_t(1));  // version
  d::write_string(out, config_json);
  d::write_pod(out, std::int32_t(epoch));

  d::write_pod(out, std::uint64_t(reg.params.size()));
  for (auto& p : reg.params) {
    d::write_string(out, p.name);
    const Shape s = p.tensor.shape();
    d::write_pod(out, std::int32_t(s.n));
    d::write_pod(out, std::int32_t(s.c));
    d::write_pod(out, std::int32_t(s.h));
    d::write_pod(out, std::int32_t(s.w));
    d::write_floats(out, p.tensor.data());
  }
  d::write_pod(out, std::uint64_t(reg.buffers.size()));
  for (auto& b : reg.buffers) {
    d::write_string(out, b.name);
    d::write_floats(out, *b.values);
  }

  Adam<float> empty;
  const Adam<float>* o = opt ? opt : &empty;
  d::write_pod(out, std::int32_t(o->t()));
  d::write_pod(out, std::uint64_t(const_cast<Adam<float>*>(o)->m().size()));
  for (const auto& m : const_cast<Adam<float>*>(o)->m()) d::write_floats(out, m);
  for (const auto& v : const_cast<Adam<float>*>(o)->v()) d::write_floats(out, v);
  if (!out) throw DataError(path + ": checkpoint write failed");
}

// Reads only the stored config snapshot (to build a compatible model before
// restoring parameters).
inline std::string read_checkpoint_config(const std::string& path) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open checkpoint");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, d::kMagic, 8) != 0)
    throw DataError(path + ": not a checkpoint file (bad magic)");
  std::uint32_t version = 0;
  d::read_pod(in, version, path);
  if (version != 1)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  return d::read_string(in, path);
}

// Restores parameters/buffers by name into an already-built model registry
// and the optimizer state; returns the epoch counter. The stored config JSON
// is returned through config_json when non-null.
inline int load_checkpoint(const std::string& path, ParamRegistry<float>& reg, Adam<float>* opt,
                           std::string* config_json = nullptr) {
  namespace d = ckpt_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open checkpoint");
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, d::kMagic, 8) != 0)
    throw DataError(path + ": not a checkpoint file (bad magic)");
  std::uint32_t version = 0;
  d::read_pod(in, version, path);
  if (version != 1)
    throw DataError(path + ": unsupported checkpoint version " + std::to_string(version));
  std::string cfg = d::read_string(in, path);
  if (config_json) *config_json = cfg;
  std::int32_t epoch = 0;
  d::read_pod(in, epoch, path);

  std::uint64_t n_params = 0;
  d::read_pod(in, n_params, path);
  if (n_params != reg.params.size())
    throw DataError(path + ": checkpoint has " + std::to_string(n_params) +
                    " parameters, model has " + std::to_string(reg.params.size()));
  for (auto& p : reg.params) {
    const std::string name = d::read_string(in, path);
    std::int32_t sn, sc, sh, sw;
    d::read_pod(in, sn, path);
    d::read_pod(in, sc, path);
    d::read_pod(in, sh, path);
    d::read_pod(in, sw, path);
    if (name != p.name || !(Shape{sn, sc, sh, sw} == p.tensor.shape()))
      throw DataError(path + ": shape-incompatible checkpoint at parameter '" + name +
                      "' (model expects '" + p.name + "' " + p.tensor.shape().str() + ")");
    p.tensor.data() = d::read_floats(in, path);
  }
  std::uint64_t n_buffers = 0;
  d::read_pod(in, n_buffers, path);
  if (n_buffers != reg.buffers.size())
    throw DataError(path + ": checkpoint buffer count mismatch");
  for (auto& b : reg.buffers) {
    const std::string name = d::read_string(in, path);
    auto values = d::read_floats(in, path);
    if (name != b.name || values.size() != b.values->size())
      throw DataError(path + ": shape-incompatible checkpoint at buffer '" + name + "'");
    *b.values = std::move(values);
  }

  std::int32_t adam_t = 0;
  d::read_pod(in, adam_t, path);
  std::uint64_t n_state = 0;
  d::read_pod(in, n_state, path);
  if (opt) {
    opt->set_t(adam_t);
    opt->m().resize(n_state);
    opt->v().resize(n_state);
    for (auto& m : opt->m()) m = d::read_floats(in, path);
    for (auto& v : opt->v()) v = d::read_floats(in, path);
  }
  return epoch;
}

}  // namespace gfrnet
