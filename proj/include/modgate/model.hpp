#pragma once

// Full audio-visual model: two-stream visual encoder, frozen audio backbone,
// audio bottleneck, relevance network, gate, gated fusion and classifier.

#include <filesystem>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "modgate/audio.hpp"
#include "modgate/imd.hpp"
#include "modgate/synth.hpp"
#include "modgate/visual.hpp"

namespace modgate {

/// How the audio embedding reaches the fusion step.
enum class FusionMode {
  kImd,         // gated by the relevance network
  kLateConcat,  // always fused (delta = 1), relevance network frozen
  kVisualOnly,  // never fused (delta = 0), relevance network frozen
};

FusionMode parse_fusion(std::string_view name);
std::string_view fusion_name(FusionMode mode);

struct ModelConfig {
  ClipSpec clip;  // RGB stream; the flow stream uses 2 channels
  EncoderConfig encoder;
  std::size_t audio_embed_dim = 32;
  std::size_t fusion_dim = 64;
  std::size_t video_classes = 10;
  std::vector<std::string> audio_labels;
  std::size_t audio_input_dim = 32;
  double backbone_sharpness = 10.0;
  std::uint64_t backbone_seed = 99;
  GateConfig gate;
  FusionMode fusion = FusionMode::kImd;
  std::uint64_t seed = 1;

  void validate() const;
  std::map<std::string, std::string> to_map() const;
  static ModelConfig from_map(const std::map<std::string, std::string>& kv);
};

struct ForwardResult {
  Tensor visual;    // [B, fusion_dim]
  Tensor audio;     // bottleneck output [B, fusion_dim]
  Tensor rev;       // [B]
  Tensor logits;    // [B, classes]
  std::vector<GateDecision> gates;
  std::vector<AudioOutput> audio_raw;
};

class MultimodalModel {
 public:
  MultimodalModel(const ModelConfig& config, const EmbeddingTable& audio_prototypes);
  MultimodalModel(const MultimodalModel&) = delete;
  MultimodalModel& operator=(const MultimodalModel&) = delete;

  const ModelConfig& config() const { return config_; }
  ParameterStore& params() { return store_; }
  const ParameterStore& params() const { return store_; }
  const SyntheticAudioBackbone& backbone() const { return *backbone_; }

  /// Forward pass over parallel per-sample inputs. A non-empty
  /// `fixed_deltas` replaces the gate's multipliers (rev is still reported).
  ForwardResult forward(std::span<const NdArray* const> rgb, std::span<const NdArray* const> flow,
                        std::span<const std::vector<double>* const> audio,
                        std::span<const double> fixed_deltas = {}) const;
  ForwardResult forward(std::span<const MultimodalSample* const> batch) const;

  /// Delta per sample under the model's fusion mode.
  GateDecision decide(double rev) const;

  TwoStreamEncoder& visual() { return visual_; }
  AudioBottleneck& bottleneck() { return bottleneck_; }
  RelevanceNetwork& relevance() { return relevance_; }
  GatedFusion& fusion() { return fusion_; }
  Classifier& classifier() { return classifier_; }

 private:
  ModelConfig config_;
  ParameterStore store_;
  Rng init_rng_;
  std::unique_ptr<SyntheticAudioBackbone> backbone_;
  TwoStreamEncoder visual_;
  AudioBottleneck bottleneck_;
  RelevanceNetwork relevance_;
  GatedFusion fusion_;
  Classifier classifier_;
};

/// Binary checkpoint: "MODGATE1" magic, u32 version, config text, then each
/// named parameter (frozen flag, shape, raw little-endian doubles).
void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& path);
std::unique_ptr<MultimodalModel> load_checkpoint(const std::filesystem::path& path);

}  // namespace modgate
