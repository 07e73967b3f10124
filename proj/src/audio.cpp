#include "modgate/audio.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace modgate {

SyntheticAudioBackbone::SyntheticAudioBackbone(ParameterStore& store, const std::string& name,
                                               const EmbeddingTable& prototypes, std::size_t embed_dim,
                                               double sharpness, std::uint64_t seed)
    : input_dim_(prototypes.dim()), embed_dim_(embed_dim), labels_(prototypes.labels()) {
  if (prototypes.size() == 0) throw ConfigError("audio backbone needs at least one label");
  if (embed_dim == 0) throw ConfigError("audio embedding width must be positive");
  std::vector<double> protos;
  for (std::size_t i = 0; i < prototypes.size(); ++i) {
    auto v = prototypes.vector(i);
    protos.insert(protos.end(), v.begin(), v.end());
  }
  Rng rng(seed);
  std::vector<double> mix(input_dim_ * embed_dim_);
  const double sd = 1.0 / std::sqrt(static_cast<double>(input_dim_));
  for (auto& m : mix) m = rng.normal() * sd;
  prototypes_ = store.add(name + ".prototypes", Tensor::from({labels_.size(), input_dim_}, std::move(protos)), true);
  mixing_ = store.add(name + ".mixing", Tensor::from({input_dim_, embed_dim_}, std::move(mix)), true);
  sharpness_ = store.add(name + ".sharpness", Tensor::from({1}, {sharpness}), true);
}

std::span<const double> SyntheticAudioBackbone::prototype(std::size_t label) const {
  if (label >= labels_.size()) throw std::out_of_range("audio label out of range");
  return prototypes_.data().subspan(label * input_dim_, input_dim_);
}

std::vector<double> SyntheticAudioBackbone::sample(std::size_t label, double noise, Rng& rng) const {
  auto p = prototype(label);
  std::vector<double> s(p.begin(), p.end());
  for (auto& x : s) x += noise * rng.normal();
  return s;
}

AudioOutput SyntheticAudioBackbone::forward(std::span<const double> sample) const {
  if (sample.size() != input_dim_) {
    throw ShapeError("audio_forward: sample width " + std::to_string(sample.size()) + ", expected " +
                     std::to_string(input_dim_));
  }
  AudioOutput out;
  out.embedding.assign(embed_dim_, 0.0);
  const auto mix = mixing_.data();
  for (std::size_t i = 0; i < input_dim_; ++i) {
    for (std::size_t j = 0; j < embed_dim_; ++j) out.embedding[j] += sample[i] * mix[i * embed_dim_ + j];
  }
  for (auto& e : out.embedding) e = std::tanh(e);
  const double sharp = sharpness_.data()[0];
  out.predictions.resize(labels_.size());
  for (std::size_t u = 0; u < labels_.size(); ++u) {
    const double cos = 1.0 - distance(sample, prototype(u), Metric::kCosine);
    out.predictions[u] = 1.0 / (1.0 + std::exp(-sharp * (cos - 0.5)));
  }
  return out;
}

std::vector<std::size_t> top_ya(std::span<const double> predictions, std::size_t ya) {
  if (ya == 0 || ya > predictions.size()) {
    throw std::out_of_range("top_ya: ya=" + std::to_string(ya) + " outside [1, " +
                            std::to_string(predictions.size()) + "]");
  }
  std::vector<std::size_t> idx(predictions.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(ya), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return predictions[a] > predictions[b] || (predictions[a] == predictions[b] && a < b);
                    });
  idx.resize(ya);
  return idx;
}

AudioBottleneck::AudioBottleneck(ParameterStore& store, const std::string& name, std::size_t in_dim,
                                 std::size_t out_dim, Rng& rng)
    : in_dim_(in_dim),
      ln_(store, name + ".ln", in_dim),
      fc1_(store, name + ".fc1", in_dim, out_dim, Init::kHe, rng),
      fc2_(store, name + ".fc2", out_dim, out_dim, Init::kHe, rng) {}

Tensor AudioBottleneck::forward(const Tensor& embedding) const {
  if (embedding.shape().back() != in_dim_) {
    throw ShapeError("bottleneck: input width " + std::to_string(embedding.shape().back()) + ", expected " +
                     std::to_string(in_dim_));
  }
  return relu(fc2_.forward(relu(fc1_.forward(ln_.forward(embedding)))));
}

}  // namespace modgate
