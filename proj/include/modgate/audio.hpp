#pragma once

// Frozen audio backbone interface and the trainable audio bottleneck.

#include <memory>
#include <span>
#include <string>
#include <vector>

#include "modgate/layers.hpp"
#include "modgate/savld.hpp"

namespace modgate {

struct AudioOutput {
  std::vector<double> embedding;    // [embed_dim]
  std::vector<double> predictions;  // [label_count], independent sigmoids
};

/// A pretrained audio model whose parameters are never updated.
class AudioBackbone {
 public:
  virtual ~AudioBackbone() = default;

  virtual std::size_t input_dim() const = 0;
  virtual std::size_t embed_dim() const = 0;
  virtual const std::vector<std::string>& labels() const = 0;
  std::size_t label_count() const { return labels().size(); }

  virtual AudioOutput forward(std::span<const double> sample) const = 0;
};

/// Stand-in backbone built from one prototype vector per audio label.
///   embedding   = tanh(sample * mixing)
///   predictions = sigmoid(sharpness * (cos(sample, prototype_u) - 0.5))
/// Its state is registered as frozen parameters so it is checkpointed with
/// the model.
class SyntheticAudioBackbone : public AudioBackbone {
 public:
  SyntheticAudioBackbone(ParameterStore& store, const std::string& name, const EmbeddingTable& prototypes,
                         std::size_t embed_dim, double sharpness, std::uint64_t seed);

  std::size_t input_dim() const override { return input_dim_; }
  std::size_t embed_dim() const override { return embed_dim_; }
  const std::vector<std::string>& labels() const override { return labels_; }
  AudioOutput forward(std::span<const double> sample) const override;

  std::span<const double> prototype(std::size_t label) const;
  /// Sample drawn around a label's prototype with isotropic noise.
  std::vector<double> sample(std::size_t label, double noise, Rng& rng) const;

 private:
  std::size_t input_dim_;
  std::size_t embed_dim_;
  std::vector<std::string> labels_;
  Tensor prototypes_;  // [labels, input_dim]
  Tensor mixing_;      // [input_dim, embed_dim]
  Tensor sharpness_;   // [1]
};

/// Indices of the `ya` largest scores, descending; ties go to the lower index.
std::vector<std::size_t> top_ya(std::span<const double> predictions, std::size_t ya);

/// relu(fc2(relu(fc1(LN(e))))).
class AudioBottleneck {
 public:
  AudioBottleneck(ParameterStore& store, const std::string& name, std::size_t in_dim, std::size_t out_dim, Rng& rng);

  Tensor forward(const Tensor& embedding) const;
  std::size_t in_dim() const { return in_dim_; }
  Linear& fc1() { return fc1_; }
  Linear& fc2() { return fc2_; }

 private:
  std::size_t in_dim_;
  LayerNorm ln_;
  Linear fc1_;
  Linear fc2_;
};

}  // namespace modgate
