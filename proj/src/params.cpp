#include "modgate/params.hpp"

#include <cmath>

namespace modgate {

Tensor ParameterStore::add(std::string name, Tensor tensor, bool frozen) {
  if (index_.count(name)) throw std::invalid_argument("duplicate parameter name: " + name);
  if (!tensor.is_leaf()) throw GraphError("parameter must be a leaf tensor: " + name);
  index_.emplace(name, params_.size());
  params_.push_back({tensor, std::move(name), frozen});
  return tensor;
}

const Parameter* ParameterStore::find(const std::string& name) const {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

Parameter* ParameterStore::find(const std::string& name) {
  auto it = index_.find(name);
  return it == index_.end() ? nullptr : &params_[it->second];
}

void ParameterStore::set_frozen_prefix(const std::string& prefix, bool frozen) {
  for (auto& p : params_) {
    if (p.name.rfind(prefix, 0) == 0) p.frozen = frozen;
  }
}

std::size_t ParameterStore::trainable_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    if (!p.frozen) n += p.tensor.size();
  }
  return n;
}

void SgdConfig::validate() const {
  // lr == 0 is accepted as an explicit no-op update.
  if (!std::isfinite(learning_rate) || learning_rate < 0.0) {
    throw ConfigError("learning rate must be a finite non-negative value");
  }
  if (!std::isfinite(weight_decay) || weight_decay < 0.0) {
    throw ConfigError("weight decay must be a finite non-negative value");
  }
}

void sgd_step(std::vector<Parameter>& params, const SgdConfig& config) {
  config.validate();
  for (const auto& p : params) {
    if (!p.frozen && !p.tensor.has_grad()) throw GraphError("missing gradient for parameter " + p.name);
  }
  for (auto& p : params) {
    if (!p.frozen) {
      auto values = p.tensor.mutable_data();
      auto grad = p.tensor.grad();
      for (std::size_t i = 0; i < values.size(); ++i) {
        values[i] -= config.learning_rate * (grad[i] + config.weight_decay * values[i]);
      }
    }
    p.tensor.clear_grad();
  }
}

Rng::Rng(std::uint64_t seed) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
  engine_.seed(seq);
}

Rng Rng::substream(std::uint64_t seed, std::uint64_t stream) {
  Rng r(0);
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    0x6d6f6467u};
  r.engine_.seed(seq);
  return r;
}

double Rng::trunc_normal(double stddev) {
  for (;;) {
    const double z = normal();
    if (std::abs(z) <= 2.0) return z * stddev;
  }
}

std::size_t Rng::below(std::size_t n) {
  if (n == 0) throw std::invalid_argument("Rng::below(0)");
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
}

}  // namespace modgate
