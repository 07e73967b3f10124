#pragma once

// Synthetic modality-specific data: video classes with visual prototypes,
// audio drawn from a dictionary-relevant class with probability rho and
// from an unrelated class otherwise.

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "modgate/savld.hpp"
#include "modgate/tensor.hpp"

namespace modgate {

struct LabelSpaceConfig {
  std::size_t video_classes = 10;
  std::size_t audio_classes = 30;
  std::size_t dim = 32;
  double spread = 0.15;  // per-label jitter around the cluster centre
  std::uint64_t seed = 7;
};

/// Label embeddings with one cluster per video class; audio label u belongs
/// to cluster u mod video_classes.
struct LabelSpace {
  EmbeddingTable video;
  EmbeddingTable audio;
};

LabelSpace gen_label_space(const LabelSpaceConfig& config);

struct SynthConfig {
  std::size_t samples_per_class = 200;
  std::size_t frames = 4;
  std::size_t height = 32;
  std::size_t width = 32;
  std::size_t patch = 8;
  double relevance_rate = 0.5;
  /// Visual classes come in groups sharing a pattern component; only the
  /// smaller class-specific component separates members of a group.
  std::size_t visual_group = 2;
  double visual_shared = 1.0;
  double visual_specific = 0.35;
  double visual_noise = 1.0;
  double audio_noise = 0.1;
  std::uint64_t seed = 1;

  void validate() const;
};

struct MultimodalSample {
  NdArray rgb;                // [T, 3, H, W]
  NdArray flow;               // [T, 2, H, W]
  std::vector<double> audio;  // backbone input
  std::size_t label = 0;
  // Evaluation-only ground truth; never used by training losses.
  bool is_relevant = false;
  std::size_t audio_class = 0;

  bool operator==(const MultimodalSample&) const = default;
};

using Dataset = std::vector<MultimodalSample>;

/// Class index = position in the dictionary. Audio samples are the
/// prototype of the drawn audio class plus isotropic noise.
Dataset gen_dataset(const SynthConfig& config, const Savld& savld, const EmbeddingTable& audio_prototypes);

/// Permutes audio (with its hidden flags) among samples of the same class.
Dataset intra_class_pairing(const Dataset& data, std::uint64_t seed);

/// Stratified, deterministic split; both halves keep dataset order.
std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed);

/// Directory of per-sample arrays plus manifest.txt.
void save_dataset(const Dataset& data, const std::filesystem::path& dir);
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace modgate
