#pragma once

#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "pcvae/autodiff.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

/// Named trainable tensors in a stable (insertion) order. The order fixes
/// optimizer-state layout and makes checkpoints reproducible.
class ParamStore {
 public:
  std::size_t add(std::string name, Tensor value) {
    if (index_.count(name))
      throw ContractError("duplicate parameter: " + name);
    index_[name] = names_.size();
    names_.push_back(std::move(name));
    values_.push_back(std::move(value));
    return names_.size() - 1;
  }

  std::size_t count() const { return names_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  Tensor& value(std::size_t i) { return values_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }

  bool has(std::string_view name) const {
    return index_.count(std::string(name)) != 0;
  }

  std::size_t index_of(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end())
      throw ContractError("unknown parameter: " + std::string(name));
    return it->second;
  }

  Tensor& at(std::string_view name) { return values_[index_of(name)]; }
  const Tensor& at(std::string_view name) const {
    return values_[index_of(name)];
  }

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
  std::unordered_map<std::string, std::size_t> index_;
};

/// Binds a ParamStore to a tape for one forward/backward pass. Each
/// parameter becomes at most one leaf, so gradients for a parameter land in
/// a single place; parameters never pulled onto the tape report zero
/// gradients.
class Bound {
 public:
  Bound(Tape& tape, const ParamStore& store)
      : tape_(&tape), store_(&store), vars_(store.count()) {}

  Var operator()(std::string_view name) {
    return by_index(store_->index_of(name));
  }

  Var by_index(std::size_t i) {
    if (!vars_[i].valid()) vars_[i] = tape_->leaf(store_->value(i));
    return vars_[i];
  }

  bool bound(std::size_t i) const { return vars_[i].valid(); }

  /// Gradient for parameter i after backward(); zeros if the parameter was
  /// never used.
  Tensor grad_of(std::size_t i) const {
    if (!vars_[i].valid()) {
      Tensor z = store_->value(i);
      z.v.assign(z.size(), 0.0);
      return z;
    }
    return tape_->grad(vars_[i]);
  }

  const ParamStore& store() const { return *store_; }
  Tape& tape() { return *tape_; }

 private:
  Tape* tape_;
  const ParamStore* store_;
  std::vector<Var> vars_;
};

}  // namespace pcvae
