#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "affmatch/checkpoint.hpp"
#include "affmatch/errors.hpp"
#include "affmatch/tensor.hpp"

namespace affmatch {

// Named registry of trainable leaf tensors. Iteration is in name order, so
// gradient clipping, SGD updates, and serialization are all deterministic.
class ParamStore {
 public:
  Tensor create(const std::string& name, std::size_t rows, std::size_t cols,
                std::vector<double> values) {
    if (params_.count(name)) throw ConfigError("parameter already registered: " + name);
    Tensor t = Tensor::parameter(rows, cols, std::move(values));
    params_.emplace(name, t);
    return t;
  }

  Tensor at(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("unknown parameter: " + name);
    return it->second;
  }

  const std::map<std::string, Tensor>& all() const { return params_; }

  // Marks every parameter whose name starts with `prefix` as frozen: it keeps
  // its value through sgd_step and its gradient stays out of the clipping
  // norm, so the clip budget is spent entirely on the parameters that move.
  // Frozen parameters still participate in save/load/snapshot.
  void freeze_prefix(const std::string& prefix) { frozen_prefixes_.push_back(prefix); }

  bool frozen(const std::string& name) const {
    for (const std::string& p : frozen_prefixes_)
      if (name.rfind(p, 0) == 0) return true;
    return false;
  }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& [name, t] : params_) n += t.size();
    return n;
  }

  void zero_grads() {
    for (auto& [name, t] : params_) t.mutable_grad().assign(t.size(), 0.0);
  }

  double grad_norm() const {
    double s = 0.0;
    for (const auto& [name, t] : params_)
      if (t.has_grad() && !frozen(name))
        for (double g : t.grad()) s += g * g;
    return std::sqrt(s);
  }

  // One SGD step over every parameter. Gradients above clip_norm (global L2)
  // are rescaled; *clipped reports whether that happened. With momentum > 0 a
  // per-parameter velocity buffer (classic heavy-ball) is kept in `velocity`.
  void sgd_step(double lr, double clip_norm, bool* clipped,
                std::map<std::string, std::vector<double>>* velocity = nullptr,
                double momentum = 0.0) {
    double factor = 1.0;
    if (clip_norm > 0.0) {
      const double norm = grad_norm();
      if (norm > clip_norm) factor = clip_norm / norm;
    }
    if (clipped) *clipped = factor != 1.0;
    for (auto& [name, t] : params_) {
      if (!t.has_grad() || frozen(name)) continue;
      auto& data = t.mutable_data();
      const auto& grad = t.grad();
      if (momentum > 0.0 && velocity) {
        auto& v = (*velocity)[name];
        if (v.size() != data.size()) v.assign(data.size(), 0.0);
        for (std::size_t i = 0; i < data.size(); ++i) {
          v[i] = momentum * v[i] + factor * grad[i];
          data[i] -= lr * v[i];
        }
      } else {
        for (std::size_t i = 0; i < data.size(); ++i) data[i] -= lr * factor * grad[i];
      }
    }
  }

  // Plain value snapshot (for divergence rollback).
  std::map<std::string, std::vector<double>> snapshot() const {
    std::map<std::string, std::vector<double>> s;
    for (const auto& [name, t] : params_) s.emplace(name, t.data());
    return s;
  }

  void restore(const std::map<std::string, std::vector<double>>& s) {
    for (auto& [name, t] : params_) {
      auto it = s.find(name);
      if (it == s.end()) throw ConfigError("snapshot missing parameter: " + name);
      t.mutable_data() = it->second;
    }
  }

  void save(const std::string& path, const std::map<std::string, Tensor>& extra = {}) const {
    std::map<std::string, Tensor> entries = params_;
    for (const auto& [name, t] : extra) entries.emplace(name, t);
    save_checkpoint(path, entries);
  }

  // Copy values from checkpoint entries into registered parameters,
  // shape-checked. Entries that match no parameter are ignored (metadata).
  void load_values(const std::map<std::string, Tensor>& entries) {
    for (auto& [name, t] : params_) {
      auto it = entries.find(name);
      if (it == entries.end()) throw ConfigError("checkpoint missing parameter: " + name);
      if (it->second.rows() != t.rows() || it->second.cols() != t.cols())
        throw ShapeError("checkpoint shape mismatch for " + name);
      t.mutable_data() = it->second.data();
    }
  }

 private:
  std::map<std::string, Tensor> params_;
  std::vector<std::string> frozen_prefixes_;
};

}  // namespace affmatch
