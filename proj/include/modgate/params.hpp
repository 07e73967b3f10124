#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "modgate/tensor.hpp"

namespace modgate {

struct Parameter {
  Tensor tensor;
  std::string name;
  bool frozen = false;
};

/// Ordered, name-unique collection of model parameters.
class ParameterStore {
 public:
  /// Registers a trainable (or frozen) leaf. Throws on a duplicate name.
  Tensor add(std::string name, Tensor tensor, bool frozen = false);

  std::vector<Parameter>& all() { return params_; }
  const std::vector<Parameter>& all() const { return params_; }
  std::size_t size() const { return params_.size(); }

  const Parameter* find(const std::string& name) const;
  Parameter* find(const std::string& name);
  void set_frozen_prefix(const std::string& prefix, bool frozen);
  std::size_t trainable_count() const;

 private:
  std::vector<Parameter> params_;
  std::map<std::string, std::size_t> index_;
};

struct SgdConfig {
  double learning_rate = 0.005;
  double weight_decay = 1e-4;

  void validate() const;
};

/// p <- p - lr * (grad + wd * p) for every non-frozen parameter, then clears
/// all gradients. A non-frozen parameter without a gradient is an error.
void sgd_step(std::vector<Parameter>& params, const SgdConfig& config);

/// Seeded random source used for initialization and data generation.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);
  /// Independent stream derived from (seed, stream).
  static Rng substream(std::uint64_t seed, std::uint64_t stream);

  double uniform() { return uniform_(engine_); }
  double normal() { return normal_(engine_); }
  /// Normal(0, stddev) resampled until within two standard deviations.
  double trunc_normal(double stddev);
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }
  template <typename T>
  void shuffle(std::vector<T>& v) {
    std::shuffle(v.begin(), v.end(), engine_);
  }

 private:
  std::mt19937_64 engine_;
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace modgate
