#include "modgate/layers.hpp"

#include <cmath>

namespace modgate {

Tensor init_tensor(Shape shape, Init init, Rng& rng) {
  std::vector<double> v(shape_size(shape), 0.0);
  switch (init) {
    case Init::kTruncNormal02:
      for (auto& x : v) x = rng.trunc_normal(0.02);
      break;
    case Init::kHe: {
      const double fan_in = static_cast<double>(shape.front());
      const double sd = std::sqrt(2.0 / fan_in);
      for (auto& x : v) x = rng.normal() * sd;
      break;
    }
    case Init::kZero:
      break;
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

Linear::Linear(ParameterStore& store, const std::string& name, std::size_t in, std::size_t out,
               Init init, Rng& rng) {
  weight_ = store.add(name + ".weight", init_tensor({in, out}, init, rng));
  bias_ = store.add(name + ".bias", Tensor::zeros({out}, true));
}

void Linear::zero() {
  for (auto& x : weight_.mutable_data()) x = 0.0;
  for (auto& x : bias_.mutable_data()) x = 0.0;
}

LayerNorm::LayerNorm(ParameterStore& store, const std::string& name, std::size_t width) {
  gamma_ = store.add(name + ".gamma", Tensor::from({width}, std::vector<double>(width, 1.0), true));
  beta_ = store.add(name + ".beta", Tensor::zeros({width}, true));
}

Mlp::Mlp(ParameterStore& store, const std::string& name, std::size_t in, std::size_t hidden,
         std::size_t out, Init init, Rng& rng)
    : fc1_(store, name + ".fc1", in, hidden, init, rng),
      fc2_(store, name + ".fc2", hidden, out, init, rng) {}

}  // namespace modgate
