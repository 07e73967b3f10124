#include "modgate/imd.hpp"

#include <cmath>

namespace modgate {

GateScheme parse_scheme(std::string_view name) {
  if (name == "mask") return GateScheme::kMask;
  if (name == "weight") return GateScheme::kWeight;
  throw ConfigError("unknown gate scheme: " + std::string(name));
}

std::string_view scheme_name(GateScheme scheme) { return scheme == GateScheme::kMask ? "mask" : "weight"; }

void GateConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("gate: alpha must lie in [0, 1]");
}

GateDecision gate(double rev, const GateConfig& config) {
  GateDecision d{rev, rev, false};
  if (config.scheme == GateScheme::kMask && rev < config.alpha) {
    d.delta = 0.0;
    d.dropped = true;
  }
  return d;
}

void LossConfig::validate() const {
  if (!std::isfinite(lambda_rn) || lambda_rn < 0.0) throw ConfigError("lambda_rn must be >= 0");
}

RelevanceNetwork::RelevanceNetwork(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng)
    : dim_(dim),
      ln_(store, name + ".ln", 2 * dim),
      mlp_(store, name + ".mlp", 2 * dim, 2 * dim, 2 * dim, Init::kHe, rng),
      head_(store, name + ".head", 2 * dim, 1, Init::kTruncNormal02, rng) {}

Tensor RelevanceNetwork::forward(const Tensor& audio, const Tensor& visual) const {
  if (audio.shape() != visual.shape() || audio.rank() != 2 || audio.dim(1) != dim_) {
    throw ShapeError("relevance: expected two [B, " + std::to_string(dim_) + "] inputs, got " +
                     shape_str(audio.shape()) + " and " + shape_str(visual.shape()));
  }
  const Tensor parts[] = {audio, visual};
  Tensor z = concat(parts, 1);
  Tensor h = add(mlp_.forward(ln_.forward(z)), z);
  return reshape(sigmoid(head_.forward(h)), {audio.dim(0)});
}

GatedFusion::GatedFusion(ParameterStore& store, const std::string& name, std::size_t dim, Rng& rng)
    : dim_(dim), ln_(store, name + ".ln", 2 * dim), mlp_(store, name + ".mlp", 2 * dim, dim, dim, Init::kHe, rng) {}

Tensor GatedFusion::forward(const Tensor& audio, const Tensor& visual, std::span<const double> deltas) const {
  if (audio.shape() != visual.shape() || audio.rank() != 2 || audio.dim(1) != dim_) {
    throw ShapeError("fuse: expected two [B, " + std::to_string(dim_) + "] inputs, got " +
                     shape_str(audio.shape()) + " and " + shape_str(visual.shape()));
  }
  const Tensor parts[] = {scale_rows(audio, deltas), visual};
  return mlp_.forward(ln_.forward(concat(parts, 1)));
}

Classifier::Classifier(ParameterStore& store, const std::string& name, std::size_t dim, std::size_t classes, Rng& rng)
    : dim_(dim), ln_(store, name + ".ln", dim), mlp_(store, name + ".mlp", dim, dim, classes, Init::kHe, rng) {
  if (classes < 2) throw ConfigError("classifier needs at least two classes");
}

Tensor Classifier::logits(const Tensor& fused) const {
  if (fused.shape().back() != dim_) throw ShapeError("classify: input width mismatch");
  return mlp_.forward(ln_.forward(fused));
}

ImdLoss imd_loss(const Tensor& logits, std::span<const std::size_t> labels, const Tensor& rev,
                 std::span<const double> targets, const LossConfig& config) {
  config.validate();
  for (double t : targets) {
    if (!(t >= 0.0 && t <= 1.0)) throw std::invalid_argument("imd_loss: relevance target outside [0,1]");
  }
  ImdLoss out;
  out.classification = ce_loss(logits, labels);
  if (config.lambda_rn == 0.0) {
    out.total = out.classification;
    return out;
  }
  out.relevance = bce_loss(rev, targets);
  out.total = add(out.classification, scale(out.relevance, config.lambda_rn));
  return out;
}

}  // namespace modgate
