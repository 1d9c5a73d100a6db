#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "vtf/binary_io.hpp"
#include "vtf/tensor.hpp"

namespace vtf {

template <class T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  bool trainable = true;
};

/// Named parameters of a model, iterated in sorted name order.
template <class T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> value, bool trainable) {
    if (params_.count(name)) throw ContractError("duplicate parameter name '" + name + "'");
    params_.emplace(name, Parameter<T>{name, std::move(value), trainable});
  }

  bool contains(const std::string& name) const { return params_.count(name) != 0; }

  const Parameter<T>& at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    return it->second;
  }

  void set_value(const std::string& name, Tensor<T> value) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ContractError("unknown parameter '" + name + "'");
    if (it->second.value.shape() != value.shape()) {
      throw DimensionError("parameter '" + name + "' has shape " + to_string(it->second.value.shape()) +
                           ", got " + to_string(value.shape()));
    }
    it->second.value = value.detach();
  }

  /// Marks every parameter whose name starts with `prefix`.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [name, p] : params_) {
      if (name.rfind(prefix, 0) == 0) p.trainable = trainable;
    }
  }

  std::vector<std::string> names() const {
    std::vector<std::string> out;
    for (const auto& [name, p] : params_) out.push_back(name);
    return out;
  }

  std::size_t size() const { return params_.size(); }

  std::size_t element_count() const {
    std::size_t n = 0;
    for (const auto& [name, p] : params_) n += p.value.numel();
    return n;
  }

  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

 private:
  std::map<std::string, Parameter<T>> params_;
};

/// Hands parameters to one forward pass. Trainable parameters become tape
/// leaves when a tape is given; frozen ones stay constants, so no gradient
/// can ever reach them.
template <class T>
class Binder {
 public:
  explicit Binder(const ParamStore<T>& store, Tape<T>* tape = nullptr) : store_(store), tape_(tape) {}

  const Tensor<T>& operator()(const std::string& name) {
    auto it = bound_.find(name);
    if (it != bound_.end()) return it->second;
    const auto& p = store_.at(name);
    Tensor<T> t = (tape_ && p.trainable) ? tape_->leaf(p.value) : p.value;
    return bound_.emplace(name, std::move(t)).first->second;
  }

  Tape<T>* tape() const { return tape_; }

  /// Gradients of the last backward pass for every bound trainable parameter that was reached.
  std::map<std::string, Tensor<T>> gradients() const {
    std::map<std::string, Tensor<T>> out;
    if (!tape_) return out;
    for (const auto& [name, t] : bound_) {
      if (!t.tracked()) continue;
      if (auto g = tape_->grad(t)) out.emplace(name, *g);
    }
    return out;
  }

 private:
  const ParamStore<T>& store_;
  Tape<T>* tape_;
  std::map<std::string, Tensor<T>> bound_;
};

/// Seeded initializer for parameter tensors.
template <class T>
class Initializer {
 public:
  explicit Initializer(std::uint64_t seed) : rng_(seed) {}

  Tensor<T> normal(Shape shape, double stddev) {
    std::normal_distribution<double> dist(0.0, stddev);
    std::vector<T> v(numel(shape));
    for (auto& x : v) x = static_cast<T>(dist(rng_));
    return Tensor<T>(std::move(shape), std::move(v));
  }

  Tensor<T> zeros(Shape shape) { return Tensor<T>::zeros(std::move(shape)); }
  Tensor<T> ones(Shape shape) { return Tensor<T>::full(std::move(shape), T(1)); }

 private:
  std::mt19937_64 rng_;
};

// Checkpoint: "VTFPAR01", u32 count, then per parameter in sorted name order
// u32 name length, name bytes, u32 rank, u32 dims, f32 values; trailing CRC32
// of everything before it. All integers and floats little-endian.

inline constexpr std::string_view kCheckpointMagic = "VTFPAR01";

using StateDict = std::map<std::string, Tensor<float>>;

template <class T>
std::vector<char> encode_checkpoint(const ParamStore<T>& store) {
  io::ByteWriter w;
  w.raw(kCheckpointMagic);
  w.u32(static_cast<std::uint32_t>(store.size()));
  for (const auto& [name, p] : store) {
    w.u32(static_cast<std::uint32_t>(name.size()));
    w.raw(name);
    w.u32(static_cast<std::uint32_t>(p.value.rank()));
    for (auto d : p.value.shape()) w.u32(static_cast<std::uint32_t>(d));
    for (T v : p.value.data()) w.f32(static_cast<float>(v));
  }
  auto bytes = w.bytes();
  io::ByteWriter tail;
  tail.u32(w.crc32());
  bytes.insert(bytes.end(), tail.bytes().begin(), tail.bytes().end());
  return bytes;
}

template <class T>
void save_checkpoint(const ParamStore<T>& store, const std::filesystem::path& path) {
  io::write_file(path, encode_checkpoint(store));
}

inline StateDict decode_checkpoint(const std::vector<char>& bytes, const std::string& name) {
  if (bytes.size() < kCheckpointMagic.size() + 8) throw CorruptFileError(name + ": truncated checkpoint");
  io::ByteReader r(bytes, name);
  if (r.raw(kCheckpointMagic.size()) != kCheckpointMagic) throw CorruptFileError(name + ": bad checkpoint magic");
  const std::uint32_t stored_crc = [&] {
    std::vector<char> tail(bytes.end() - 4, bytes.end());
    io::ByteReader t(tail, name);
    return t.u32();
  }();
  if (io::crc32_of(bytes.data(), bytes.size() - 4) != stored_crc) {
    throw CorruptFileError(name + ": checkpoint CRC mismatch");
  }
  StateDict out;
  const std::uint32_t count = r.u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string pname(r.raw(r.u32()));
    Shape shape(r.u32());
    for (auto& d : shape) d = r.u32();
    std::vector<float> values(numel(shape));
    for (auto& v : values) v = r.f32();
    try {
      out.emplace(pname, Tensor<float>(shape, std::move(values)));
    } catch (const DimensionError& e) {
      throw CorruptFileError(name + ": parameter '" + pname + "': " + e.what());
    }
  }
  if (r.remaining() != 4) throw CorruptFileError(name + ": trailing bytes in checkpoint");
  return out;
}

inline StateDict load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(io::read_file(path), path.string());
}

/// Copies checkpoint values into `store`; the name sets and shapes must agree exactly.
template <class T>
void load_state(ParamStore<T>& store, const StateDict& state) {
  for (const auto& [name, t] : state) {
    if (!store.contains(name)) throw SchemaMismatchError("checkpoint parameter '" + name + "' not in model");
    if (store.at(name).value.shape() != t.shape()) {
      throw SchemaMismatchError("checkpoint parameter '" + name + "' has shape " + to_string(t.shape()) +
                                ", model expects " + to_string(store.at(name).value.shape()));
    }
  }
  for (const auto& name : store.names()) {
    if (!state.count(name)) throw SchemaMismatchError("checkpoint lacks parameter '" + name + "'");
  }
  for (const auto& [name, t] : state) store.set_value(name, t.template cast<T>());
}

}  // namespace vtf
