#pragma once

// Semantic audio-video label dictionary: for every video label, the k audio
// labels whose text embeddings are nearest, plus the normalized overlap
// scores used as relevance targets.

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace modgate {

enum class Metric { kEuclidean, kManhattan, kCosine };
enum class OverlapMethod { kIou, kDice };

Metric parse_metric(std::string_view name);
std::string_view metric_name(Metric metric);
OverlapMethod parse_overlap(std::string_view name);
std::string_view overlap_name(OverlapMethod method);

/// Distance under `metric`. Cosine distance is 1 - cos(a, b); a zero vector
/// has cosine similarity 0 with everything.
double distance(std::span<const double> a, std::span<const double> b, Metric metric);

/// Label text embeddings. Labels are lowercased on insertion and unique.
class EmbeddingTable {
 public:
  explicit EmbeddingTable(std::size_t dim);

  void add(std::string label, std::vector<double> vector);

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }
  const std::string& label(std::size_t i) const { return labels_.at(i); }
  std::span<const double> vector(std::size_t i) const;
  const std::vector<std::string>& labels() const { return labels_; }
  std::optional<std::size_t> index_of(std::string_view label) const;

  bool operator==(const EmbeddingTable& other) const = default;

 private:
  std::size_t dim_;
  std::vector<std::string> labels_;
  std::vector<double> values_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// `dim=<D>` header, then `label<TAB>v1,...,vD` rows; `#` lines ignored.
EmbeddingTable parse_embeddings(std::istream& in);
EmbeddingTable load_embeddings(const std::filesystem::path& path);
void write_embeddings(const EmbeddingTable& table, std::ostream& out);
void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path);

struct SavldEntry {
  std::string video_label;
  std::vector<std::string> audio_labels;  // nearest first

  bool operator==(const SavldEntry&) const = default;
};

class Savld {
 public:
  /// Validates: every entry has exactly k distinct audio labels and video
  /// labels are unique.
  Savld(std::size_t k, std::vector<SavldEntry> entries, std::optional<Metric> metric = std::nullopt);

  std::size_t k() const { return k_; }
  /// Metric used to build the dictionary; unknown for parsed files.
  std::optional<Metric> metric() const { return metric_; }
  const std::vector<SavldEntry>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }
  const SavldEntry& entry(std::size_t video_class) const { return entries_.at(video_class); }
  const SavldEntry* find(std::string_view video_label) const;

  /// Structural equality (k and ordered entries); the metric is provenance.
  bool operator==(const Savld& other) const { return k_ == other.k_ && entries_ == other.entries_; }

 private:
  std::size_t k_;
  std::vector<SavldEntry> entries_;
  std::optional<Metric> metric_;
  std::map<std::string, std::size_t, std::less<>> index_;
};

/// For each video label, the k audio labels with the smallest distance,
/// ascending, ties broken by audio-table order.
Savld build_savld(const EmbeddingTable& video, const EmbeddingTable& audio, std::size_t k, Metric metric);

void write_savld(const Savld& savld, std::ostream& out);
void serialize_savld(const Savld& savld, const std::filesystem::path& path);
Savld parse_savld(std::istream& in);
Savld parse_savld(const std::filesystem::path& path);

/// Full video x audio distance matrix as CSV (header row of audio labels).
void write_distance_csv(const EmbeddingTable& video, const EmbeddingTable& audio, Metric metric,
                        std::ostream& out);

/// Maps every entry's audio labels to indices into `audio_labels`.
std::vector<std::vector<std::size_t>> savld_audio_indices(const Savld& savld,
                                                          const std::vector<std::string>& audio_labels);

struct OverlapConfig {
  std::size_t k = 10;
  std::size_t ya = 20;
  OverlapMethod method = OverlapMethod::kIou;

  void validate() const;
};

/// Raw IOU or Dice score for sets of sizes k and ya sharing `intersection`
/// elements.
double raw_overlap(std::size_t intersection, std::size_t k, std::size_t ya, OverlapMethod method);

/// Overlap between the top-ya predicted audio labels and the k dictionary
/// labels, divided by the largest score reachable for these set sizes so a
/// fully covered smaller set maps to 1 and disjoint sets map to 0.
double relevance_target(std::span<const std::size_t> predicted, std::span<const std::size_t> relevant,
                        const OverlapConfig& config);

}  // namespace modgate
