#pragma once

#include <cmath>
#include <cstring>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "gateslab/errors.hpp"
#include "gateslab/rng.hpp"
#include "gateslab/tape.hpp"
#include "gateslab/tensor.hpp"

namespace gateslab {

// Named trainable tensors with a stable iteration order, so checkpoints,
// gradient maps and optimizer state all line up deterministically.
class ParamStore {
 public:
  Tensor& add(const std::string& name, Tensor t) {
    if (tensors_.count(name)) throw Error("param '" + name + "' already exists");
    order_.push_back(name);
    return tensors_.emplace(name, std::move(t)).first->second;
  }

  bool has(const std::string& name) const { return tensors_.count(name) != 0; }

  Tensor& get(const std::string& name) {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown param '" + name + "'");
    return it->second;
  }

  const Tensor& get(const std::string& name) const {
    auto it = tensors_.find(name);
    if (it == tensors_.end()) throw Error("unknown param '" + name + "'");
    return it->second;
  }

  const std::vector<std::string>& names() const { return order_; }

  std::size_t total_size() const {
    std::size_t n = 0;
    for (const auto& name : order_) n += tensors_.at(name).size();
    return n;
  }

  // FNV over the raw bytes; used to assert that inference never mutates.
  std::uint64_t checksum() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& name : order_) {
      h ^= fnv1a64(name);
      h *= 0x100000001b3ULL;
      for (double v : tensors_.at(name).data) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h ^= bits;
        h *= 0x100000001b3ULL;
      }
    }
    return h;
  }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> tensors_;
};

// Weight matrices: uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
inline Tensor init_weight(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  Tensor t(Shape{fan_in, fan_out});
  for (double& v : t.data) v = rng.uniform(-bound, bound);
  return t;
}

// Embedding tables: uniform(-0.1, 0.1).
inline Tensor init_embedding(std::size_t rows, std::size_t cols, Rng& rng) {
  Tensor t(Shape{rows, cols});
  for (double& v : t.data) v = rng.uniform(-0.1, 0.1);
  return t;
}

// Binds a ParamStore onto a tape as leaves; lookup by name returns node ids.
class BoundParams {
 public:
  BoundParams(Tape& tape, const ParamStore& store) : store_(&store) {
    for (const auto& name : store.names()) ids_.emplace(name, tape.leaf(store.get(name)));
  }

  int operator()(const std::string& name) const {
    auto it = ids_.find(name);
    if (it == ids_.end()) throw Error("unbound param '" + name + "'");
    return it->second;
  }

  // Translates leaf-node gradients back to parameter names.
  std::unordered_map<std::string, Tensor> named_grads(const BackwardResult& bw) const {
    std::unordered_map<std::string, Tensor> out;
    for (const auto& [name, id] : ids_) {
      auto it = bw.leaf_grads.find(id);
      if (it == bw.leaf_grads.end())
        out.emplace(name, Tensor(store_->get(name).shape, 0.0));
      else
        out.emplace(name, it->second);
    }
    return out;
  }

 private:
  const ParamStore* store_;
  std::unordered_map<std::string, int> ids_;
};

}  // namespace gateslab
