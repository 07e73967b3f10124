#pragma once

// Irrelevant modality dropout: a relevance network scores how well the audio
// embedding matches the visual one, a threshold gate turns the score into a
// multiplier for the audio embedding, and the gated pair is fused and
// classified. Training combines classification cross-entropy with a binary
// cross-entropy on the relevance score.

#include <span>
#include <string_view>
#include <vector>

#include "modgate/layers.hpp"

namespace modgate {

enum class GateScheme { kMask, kWeight };

GateScheme parse_scheme(std::string_view name);
std::string_view scheme_name(GateScheme scheme);

struct GateConfig {
  double alpha = 0.25;
  GateScheme scheme = GateScheme::kMask;

  void validate() const;
};

struct GateDecision {
  double rev = 0.0;
  double delta = 0.0;
  bool dropped = false;
};

/// Mask: delta = 0 below alpha, rev otherwise. Weight: delta = rev.
GateDecision gate(double rev, const GateConfig& config);

struct LossConfig {
  double lambda_rn = 1.0;

  void validate() const;
};

/// rev = sigmoid(w . (MLP(LN(z)) + z) + b), z = concat(audio, visual).
class RelevanceNetwork {
 public:
  RelevanceNetwork(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng);

  /// audio, visual: [B, dim] -> rev [B].
  Tensor forward(const Tensor& audio, const Tensor& visual) const;
  Mlp& mlp() { return mlp_; }
  Linear& head() { return head_; }

 private:
  std::size_t dim_;
  LayerNorm ln_;
  Mlp mlp_;
  Linear head_;
};

/// z_av = MLP(LN(concat(audio * delta, visual))); delta is a per-row
/// constant (no gradient flows through the gate decision).
class GatedFusion {
 public:
  GatedFusion(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng);

  Tensor forward(const Tensor& audio, const Tensor& visual, std::span<const double> deltas) const;
  Mlp& mlp() { return mlp_; }

 private:
  std::size_t dim_;
  LayerNorm ln_;
  Mlp mlp_;
};

/// softmax(MLP(LN(z_av))).
class Classifier {
 public:
  Classifier(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng);

  Tensor logits(const Tensor& fused) const;
  Tensor probabilities(const Tensor& fused) const { return softmax(logits(fused), logits_axis(fused)); }
  Mlp& mlp() { return mlp_; }

 private:
  static std::size_t logits_axis(const Tensor& fused) { return fused.rank() - 1; }
  std::size_t dim_;
  LayerNorm ln_;
  Mlp mlp_;
};

struct ImdLoss {
  Tensor total;
  Tensor classification;
  Tensor relevance;  // undefined when lambda_rn == 0
};

/// CE(logits, labels) + lambda_rn * BCE(rev, targets). Cross-entropy is taken
/// on logits, which equals -ln of the softmax probability of the label.
ImdLoss imd_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& rev,
                 std::span<const double> targets, const LossConfig& config);

}  // namespace modgate
