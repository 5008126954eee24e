#pragma once

#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <unordered_map>

#include "crossmodal/tensor.hpp"

namespace crossmodal {

// Ordered, named parameter and buffer container. Buffers (batchnorm running
// statistics, counters) are saved with the parameters but never optimized.
template <class T>
class ParamStore {
 public:
  Tensor<T>& create(const std::string& name, Shape shape, std::vector<T> values,
                    bool trainable = true, bool decay = true) {
    CM_CHECK(!map_.count(name), "duplicate parameter name: " << name);
    Tensor<T> t(std::move(shape), std::move(values));
    t.set_requires_grad(trainable);
    names_.push_back(name);
    map_.emplace(name, Entry{t, trainable, decay});
    return map_.at(name).tensor;
  }

  Tensor<T>& get(const std::string& name) {
    auto it = map_.find(name);
    CM_CHECK(it != map_.end(), "unknown parameter: " << name);
    return it->second.tensor;
  }
  const Tensor<T>& get(const std::string& name) const {
    auto it = map_.find(name);
    CM_CHECK(it != map_.end(), "unknown parameter: " << name);
    return it->second.tensor;
  }
  bool has(const std::string& name) const { return map_.count(name) != 0; }
  bool trainable(const std::string& name) const { return map_.at(name).trainable; }
  bool decays(const std::string& name) const { return map_.at(name).decay; }

  const std::vector<std::string>& names() const { return names_; }

  std::vector<std::string> trainable_names(const std::string& prefix = "") const {
    std::vector<std::string> out;
    for (const auto& n : names_)
      if (map_.at(n).trainable && n.rfind(prefix, 0) == 0) out.push_back(n);
    return out;
  }

  void zero_grad() {
    for (auto& n : names_) map_.at(n).tensor.zero_grad();
  }

  // Freezes or thaws every parameter under a name prefix. Buffers that were
  // never trainable stay frozen.
  void set_trainable(const std::string& prefix, bool trainable) {
    for (auto& [name, e] : map_) {
      if (name.rfind(prefix, 0) != 0 || !e.ever_trainable) continue;
      e.trainable = trainable;
      e.tensor.set_requires_grad(trainable);
    }
  }

  bool all_finite() const {
    for (const auto& n : names_)
      for (T v : map_.at(n).tensor.values())
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  // Checkpoint container: magic "CKPT1", uint32 count, then per tensor:
  // uint32 name length, name bytes, uint32 rank, uint32 extents, float32 payload.
  void save(const std::string& path) const {
    std::ofstream f(path, std::ios::binary);
    CM_CHECK(f.good(), "cannot open checkpoint for writing: " << path);
    f.write("CKPT1", 5);
    write_u32(f, static_cast<uint32_t>(names_.size()));
    for (const auto& n : names_) {
      const auto& t = map_.at(n).tensor;
      write_u32(f, static_cast<uint32_t>(n.size()));
      f.write(n.data(), static_cast<std::streamsize>(n.size()));
      write_u32(f, static_cast<uint32_t>(t.shape().size()));
      for (int64_t e : t.shape()) write_u32(f, static_cast<uint32_t>(e));
      for (T v : t.values()) {
        float fv = static_cast<float>(v);
        f.write(reinterpret_cast<const char*>(&fv), 4);
      }
    }
    CM_CHECK(f.good(), "checkpoint write failed: " << path);
  }

  // Loads values into an already-initialized store; shapes must match.
  void load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    CM_CHECK(f.good(), "cannot open checkpoint: " << path);
    char magic[5];
    f.read(magic, 5);
    CM_CHECK(f.good() && std::memcmp(magic, "CKPT1", 5) == 0,
             "bad checkpoint magic in " << path);
    uint32_t count = read_u32(f);
    for (uint32_t i = 0; i < count; ++i) {
      uint32_t nlen = read_u32(f);
      std::string name(nlen, '\0');
      f.read(name.data(), nlen);
      uint32_t rank = read_u32(f);
      Shape shape;
      for (uint32_t r = 0; r < rank; ++r) shape.push_back(read_u32(f));
      CM_CHECK(has(name), "checkpoint tensor '" << name
                                                << "' missing from model");
      auto& t = get(name);
      CM_CHECK(t.shape() == shape,
               "checkpoint/config width mismatch for tensor '"
                   << name << "': file " << shape_str(shape) << " vs model "
                   << shape_str(t.shape()));
      for (int64_t j = 0; j < t.size(); ++j) {
        float fv;
        f.read(reinterpret_cast<char*>(&fv), 4);
        t.data()[j] = static_cast<T>(fv);
      }
      CM_CHECK(f.good(), "truncated checkpoint: " << path);
    }
  }

  // Convenient scalar buffers (iteration counter, seed).
  void set_scalar(const std::string& name, T v) {
    if (!has(name)) create(name, Shape{1}, {v}, /*trainable=*/false, false);
    else get(name).data()[0] = v;
  }
  T scalar(const std::string& name) const { return get(name).data()[0]; }

 private:
  struct Entry {
    Tensor<T> tensor;
    bool trainable;
    bool decay;
    bool ever_trainable = true;
    Entry(Tensor<T> t, bool tr, bool d)
        : tensor(std::move(t)), trainable(tr), decay(d), ever_trainable(tr) {}
  };

  static void write_u32(std::ofstream& f, uint32_t v) {
    f.write(reinterpret_cast<const char*>(&v), 4);
  }
  static uint32_t read_u32(std::ifstream& f) {
    uint32_t v = 0;
    f.read(reinterpret_cast<char*>(&v), 4);
    return v;
  }

  std::vector<std::string> names_;
  std::unordered_map<std::string, Entry> map_;
};

// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), +1/sqrt(fan_in)).
template <class T>
std::vector<T> uniform_init(int64_t count, int64_t fan_in, std::mt19937& rng) {
  T bound = T(1) / std::sqrt(static_cast<T>(std::max<int64_t>(fan_in, 1)));
  std::uniform_real_distribution<double> dist(-static_cast<double>(bound),
                                              static_cast<double>(bound));
  std::vector<T> out(static_cast<size_t>(count));
  for (auto& v : out) v = static_cast<T>(dist(rng));
  return out;
}

}  // namespace crossmodal
