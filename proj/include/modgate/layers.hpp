#pragma once

// Small parameterized building blocks shared by the model modules.

#include <string>

#include "modgate/params.hpp"

namespace modgate {

enum class Init {
  kTruncNormal02,  // truncated normal, std 0.02
  kHe,             // normal, std sqrt(2 / fan_in)
  kZero,
};

class Linear {
 public:
  Linear() = default;
  Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out, Init init,
         Rng& rng);

  Tensor forward(const Tensor& x) const { return linear(x, weight_, bias_); }
  std::size_t in_features() const { return weight_.dim(0); }
  std::size_t out_features() const { return weight_.dim(1); }
  Tensor& weight() { return weight_; }
  Tensor& bias() { return bias_; }
  /// Zeros weight and bias in place.
  void zero();

 private:
  Tensor weight_;
  Tensor bias_;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParameterStore& store, const std::string& name, std::size_t width);

  /// Normalizes over the last axis.
  Tensor forward(const Tensor& x) const { return layer_norm(x, x.rank() - 1, gamma_, beta_); }

 private:
  Tensor gamma_;
  Tensor beta_;
};

/// fc2(relu(fc1(x))).
class Mlp {
 public:
  Mlp() = default;
  Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
      std::size_t out, Init init, Rng& rng);

  Tensor forward(const Tensor& x) const { return fc2_.forward(relu(fc1_.forward(x))); }
  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  Linear fc1_;
  Linear fc2_;
};

/// Fills a fresh leaf tensor of `shape` according to `init`.
Tensor init_tensor(Shape shape, Init init, Rng& rng);

}  // namespace modgate
