#pragma once

// Training, evaluation and ablation driver.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "modgate/model.hpp"

namespace modgate {

struct ViewConfig {
  std::size_t spatial = 1;
  std::size_t temporal = 1;
  std::uint64_t seed = 0;

  static ViewConfig parse(std::string_view text);  // "SxT"
};

struct RunConfig {
  ModelConfig model;  // audio_labels / audio_input_dim / video_classes filled from the label space
  OverlapConfig overlap{10, 20, OverlapMethod::kIou};
  LossConfig loss;
  SgdConfig sgd;
  std::size_t epochs = 15;
  std::size_t batch_size = 64;
  std::uint64_t seed = 1;
  bool augment = false;
  ViewConfig views;
  double train_fraction = 0.8;

  SynthConfig synth;
  LabelSpaceConfig labels;
  Metric metric = Metric::kCosine;
  std::filesystem::path video_emb;  // empty: generated label space
  std::filesystem::path audio_emb;

  // Ablation grid (empty: the full default grid).
  std::vector<double> ablate_alpha;
  std::vector<GateScheme> ablate_scheme;
  std::vector<OverlapMethod> ablate_overlap;
  std::vector<std::pair<std::size_t, std::size_t>> ablate_k_ya;

  /// Keys assigned through set(), in any order.
  std::set<std::string> explicit_keys;

  void validate() const;
  /// Applies one `key=value` setting; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
  std::string describe() const;
};

/// Flat key=value file; `#` comments. Relative embedding paths resolve
/// against the file's directory. MODALITY_GATE_SEED overrides `seed`.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir = {});
void apply_seed_env(RunConfig& config);

LabelSpace load_label_space(const RunConfig& config);

struct Experiment {
  Dataset train;
  Dataset val;
};

/// Generates and splits the synthetic dataset for `dictionary`.
Experiment prepare_experiment(const RunConfig& config, const Savld& dictionary, const EmbeddingTable& audio);

/// Fills the label-dependent model fields from the dictionary and audio table.
ModelConfig resolve_model_config(const RunConfig& config, const Savld& dictionary, const EmbeddingTable& audio);

struct EpochStats {
  std::size_t epoch = 0;
  double cls_loss = 0.0;
  double rn_loss = 0.0;
  double train_top1 = 0.0;
  double train_top5 = 0.0;
  double val_top1 = 0.0;
  double val_top5 = 0.0;
  double drop_rate = 0.0;
};

struct GateStats {
  double drop_rate = 0.0;
  std::vector<std::size_t> rev_histogram = std::vector<std::size_t>(10, 0);
  double auc = 0.5;
  double mean_rev = 0.0;
};

struct TrainReport {
  std::vector<EpochStats> epochs;
  GateStats gate;
  double wall_seconds = 0.0;  // not part of to_text()

  /// Deterministic rendering (excludes wall-clock time).
  std::string to_text() const;
};

struct TrainResult {
  std::unique_ptr<MultimodalModel> model;
  TrainReport report;
};

/// `dictionary` supplies the relevance targets; `audio` supplies the frozen
/// backbone prototypes.
TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const Savld& dictionary, const EmbeddingTable& audio);

struct Accuracy {
  double top1 = 0.0;
  double top5 = 0.0;
};

/// Class probabilities per sample, averaged over views.
std::vector<std::vector<double>> predict_probabilities(const MultimodalModel& model, const Dataset& data,
                                                       const ViewConfig& views, std::size_t batch_size = 32);
/// Top-1 / top-min(5, classes) hit rates; ties rank the lower class first.
Accuracy topk_accuracy(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels);
Accuracy evaluate(const MultimodalModel& model, const Dataset& data, const ViewConfig& views = {});

/// Shifts a clip circularly by whole patches and frames.
NdArray apply_view(const NdArray& clip, std::size_t patch, std::size_t shift_y, std::size_t shift_x,
                   std::size_t shift_t);

/// Area under the ROC curve of `scores` against binary `positive` flags
/// (ties count one half). 0.5 when either class is absent.
double roc_auc(std::span<const double> scores, const std::vector<bool>& positive);
GateStats gate_stats(const MultimodalModel& model, const Dataset& data);

struct AblationRow {
  OverlapMethod overlap = OverlapMethod::kIou;
  std::size_t k = 0;
  std::size_t ya = 0;
  double alpha = 0.0;
  GateScheme scheme = GateScheme::kMask;
  TrainReport report;
};

/// Trains one model per grid cell over a shared dataset (generated from a
/// dictionary with the base k); each cell's k rebuilds the dictionary used
/// for relevance targets.
std::vector<AblationRow> run_ablation(const RunConfig& base);
std::string ablation_table(const std::vector<AblationRow>& rows);
std::string ablation_csv(const std::vector<AblationRow>& rows);

}  // namespace modgate
