#include "modgate/savld.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "modgate/errors.hpp"

namespace modgate {

namespace {

std::string lowercase(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

std::string trim(std::string_view s) {
  const auto ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_on(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& token, std::size_t line) {
  const std::string t = trim(token);
  if (t.empty()) throw FormatError("line " + std::to_string(line) + ": empty numeric token");
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (end != t.c_str() + t.size()) {
    throw FormatError("line " + std::to_string(line) + ": non-numeric token '" + t + "'");
  }
  if (!std::isfinite(v)) throw FormatError("line " + std::to_string(line) + ": non-finite value");
  return v;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

}  // namespace

Metric parse_metric(std::string_view name) {
  if (name == "euclidean") return Metric::kEuclidean;
  if (name == "manhattan") return Metric::kManhattan;
  if (name == "cosine") return Metric::kCosine;
  throw ConfigError("unknown metric: " + std::string(name));
}

std::string_view metric_name(Metric metric) {
  switch (metric) {
    case Metric::kEuclidean: return "euclidean";
    case Metric::kManhattan: return "manhattan";
    case Metric::kCosine: return "cosine";
  }
  return "?";
}

OverlapMethod parse_overlap(std::string_view name) {
  if (name == "iou") return OverlapMethod::kIou;
  if (name == "dice") return OverlapMethod::kDice;
  throw ConfigError("unknown overlap method: " + std::string(name));
}

std::string_view overlap_name(OverlapMethod method) {
  return method == OverlapMethod::kIou ? "iou" : "dice";
}

double distance(std::span<const double> a, std::span<const double> b, Metric metric) {
  if (a.size() != b.size()) throw ShapeError("distance: dimension mismatch");
  switch (metric) {
    case Metric::kEuclidean: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
      return std::sqrt(s);
    }
    case Metric::kManhattan: {
      double s = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
      return s;
    }
    case Metric::kCosine: {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
      }
      if (na == 0.0 || nb == 0.0) return 1.0;
      return 1.0 - dot / (std::sqrt(na) * std::sqrt(nb));
    }
  }
  return 0.0;
}

// ---------------------------------------------------------------------------
// EmbeddingTable

EmbeddingTable::EmbeddingTable(std::size_t dim) : dim_(dim) {
  if (dim == 0) throw FormatError("embedding dimension must be positive");
}

void EmbeddingTable::add(std::string label, std::vector<double> vector) {
  label = lowercase(trim(label));
  if (label.empty()) throw FormatError("empty label");
  if (vector.size() != dim_) {
    throw FormatError("label '" + label + "' has " + std::to_string(vector.size()) +
                      " values, expected " + std::to_string(dim_));
  }
  for (double v : vector) {
    if (!std::isfinite(v)) throw FormatError("label '" + label + "' has a non-finite value");
  }
  if (index_.count(label)) throw FormatError("duplicate label '" + label + "'");
  index_.emplace(label, labels_.size());
  labels_.push_back(std::move(label));
  values_.insert(values_.end(), vector.begin(), vector.end());
}

std::span<const double> EmbeddingTable::vector(std::size_t i) const {
  if (i >= labels_.size()) throw std::out_of_range("embedding index out of range");
  return std::span<const double>(values_).subspan(i * dim_, dim_);
}

std::optional<std::size_t> EmbeddingTable::index_of(std::string_view label) const {
  auto it = index_.find(lowercase(std::string(label)));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

EmbeddingTable parse_embeddings(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  std::optional<EmbeddingTable> table;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const std::string t = trim(line);
    if (t.empty() || t.front() == '#') continue;
    if (!table) {
      if (t.rfind("dim=", 0) != 0) throw FormatError("line " + std::to_string(lineno) + ": expected dim=<D>");
      const double d = parse_double(t.substr(4), lineno);
      if (d < 1 || d != std::floor(d)) throw FormatError("invalid embedding dimension");
      table.emplace(static_cast<std::size_t>(d));
      continue;
    }
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("line " + std::to_string(lineno) + ": missing tab");
    std::vector<double> values;
    for (const auto& tok : split_on(std::string_view(line).substr(tab + 1), ',')) {
      values.push_back(parse_double(tok, lineno));
    }
    try {
      table->add(line.substr(0, tab), std::move(values));
    } catch (const FormatError& e) {
      throw FormatError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!table) throw FormatError("missing dim=<D> header");
  return std::move(*table);
}

EmbeddingTable load_embeddings(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_embeddings(in);
}

void write_embeddings(const EmbeddingTable& table, std::ostream& out) {
  out << "dim=" << table.dim() << '\n';
  out << std::setprecision(17);
  for (std::size_t i = 0; i < table.size(); ++i) {
    out << table.label(i) << '\t';
    const auto v = table.vector(i);
    for (std::size_t j = 0; j < v.size(); ++j) out << (j ? "," : "") << v[j];
    out << '\n';
  }
}

void save_embeddings(const EmbeddingTable& table, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_embeddings(table, out);
  if (!out) throw IoError("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Savld

Savld::Savld(std::size_t k, std::vector<SavldEntry> entries, std::optional<Metric> metric)
    : k_(k), entries_(std::move(entries)), metric_(metric) {
  if (k_ == 0) throw FormatError("savld: k must be positive");
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    const auto& e = entries_[i];
    if (e.audio_labels.size() != k_) {
      throw FormatError("savld: entry '" + e.video_label + "' has " + std::to_string(e.audio_labels.size()) +
                        " audio labels, expected " + std::to_string(k_));
    }
    std::set<std::string_view> seen(e.audio_labels.begin(), e.audio_labels.end());
    if (seen.size() != e.audio_labels.size()) {
      throw FormatError("savld: duplicate audio label in entry '" + e.video_label + "'");
    }
    if (!index_.emplace(e.video_label, i).second) {
      throw FormatError("savld: duplicate video label '" + e.video_label + "'");
    }
  }
}

const SavldEntry* Savld::find(std::string_view video_label) const {
  auto it = index_.find(video_label);
  return it == index_.end() ? nullptr : &entries_[it->second];
}

Savld build_savld(const EmbeddingTable& video, const EmbeddingTable& audio, std::size_t k, Metric metric) {
  if (video.dim() != audio.dim()) {
    throw ShapeError("build_savld: video dim " + std::to_string(video.dim()) + " != audio dim " +
                     std::to_string(audio.dim()));
  }
  if (k == 0 || k > audio.size()) {
    throw std::invalid_argument("build_savld: k=" + std::to_string(k) + " must be in [1, " +
                                std::to_string(audio.size()) + "]");
  }
  std::vector<SavldEntry> entries;
  entries.reserve(video.size());
  std::vector<double> dist(audio.size());
  std::vector<std::size_t> order(audio.size());
  for (std::size_t v = 0; v < video.size(); ++v) {
    for (std::size_t a = 0; a < audio.size(); ++a) dist[a] = distance(video.vector(v), audio.vector(a), metric);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](std::size_t x, std::size_t y) { return dist[x] < dist[y] || (dist[x] == dist[y] && x < y); });
    SavldEntry e{video.label(v), {}};
    for (std::size_t i = 0; i < k; ++i) e.audio_labels.push_back(audio.label(order[i]));
    entries.push_back(std::move(e));
  }
  return Savld(k, std::move(entries), metric);
}

void write_savld(const Savld& savld, std::ostream& out) {
  for (const auto& e : savld.entries()) {
    out << e.video_label << '\t';
    for (std::size_t i = 0; i < e.audio_labels.size(); ++i) out << (i ? ";" : "") << e.audio_labels[i];
    out << '\n';
  }
}

void serialize_savld(const Savld& savld, const std::filesystem::path& path) {
  auto out = open_out(path);
  write_savld(savld, out);
  if (!out) throw IoError("write failed: " + path.string());
}

Savld parse_savld(std::istream& in) {
  std::vector<SavldEntry> entries;
  std::string line;
  std::size_t lineno = 0;
  std::optional<std::size_t> k;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) throw FormatError("savld line " + std::to_string(lineno) + ": missing tab");
    SavldEntry e{trim(line.substr(0, tab)), split_on(std::string_view(line).substr(tab + 1), ';')};
    if (e.video_label.empty()) throw FormatError("savld line " + std::to_string(lineno) + ": empty video label");
    for (auto& a : e.audio_labels) {
      a = trim(a);
      if (a.empty()) throw FormatError("savld line " + std::to_string(lineno) + ": empty audio label");
    }
    if (!k) k = e.audio_labels.size();
    if (*k != e.audio_labels.size()) {
      throw FormatError("savld line " + std::to_string(lineno) + ": inconsistent k (" +
                        std::to_string(e.audio_labels.size()) + " vs " + std::to_string(*k) + ")");
    }
    entries.push_back(std::move(e));
  }
  if (!k) throw FormatError("savld: empty file");
  return Savld(*k, std::move(entries));
}

Savld parse_savld(const std::filesystem::path& path) {
  auto in = open_in(path);
  return parse_savld(in);
}

void write_distance_csv(const EmbeddingTable& video, const EmbeddingTable& audio, Metric metric,
                        std::ostream& out) {
  if (video.dim() != audio.dim()) throw ShapeError("write_distance_csv: dimension mismatch");
  out << "video";
  for (const auto& a : audio.labels()) out << ',' << a;
  out << '\n' << std::setprecision(10);
  for (std::size_t v = 0; v < video.size(); ++v) {
    out << video.label(v);
    for (std::size_t a = 0; a < audio.size(); ++a) out << ',' << distance(video.vector(v), audio.vector(a), metric);
    out << '\n';
  }
}

std::vector<std::vector<std::size_t>> savld_audio_indices(const Savld& savld,
                                                          const std::vector<std::string>& audio_labels) {
  std::map<std::string_view, std::size_t> idx;
  for (std::size_t i = 0; i < audio_labels.size(); ++i) idx.emplace(audio_labels[i], i);
  std::vector<std::vector<std::size_t>> out;
  for (const auto& e : savld.entries()) {
    std::vector<std::size_t> row;
    for (const auto& a : e.audio_labels) {
      auto it = idx.find(a);
      if (it == idx.end()) throw FormatError("savld audio label '" + a + "' is not a backbone label");
      row.push_back(it->second);
    }
    out.push_back(std::move(row));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Overlap targets

void OverlapConfig::validate() const {
  if (k == 0 || ya == 0) throw ConfigError("overlap: k and ya must be >= 1");
}

double raw_overlap(std::size_t intersection, std::size_t k, std::size_t ya, OverlapMethod method) {
  const double inter = static_cast<double>(intersection);
  if (method == OverlapMethod::kIou) return inter / static_cast<double>(k + ya - intersection);
  return 2.0 * inter / static_cast<double>(k + ya);
}

double relevance_target(std::span<const std::size_t> predicted, std::span<const std::size_t> relevant,
                        const OverlapConfig& config) {
  config.validate();
  if (predicted.empty() || relevant.empty()) throw std::invalid_argument("relevance_target: empty set");
  if (predicted.size() != config.ya) throw std::invalid_argument("relevance_target: |predicted| != ya");
  if (relevant.size() != config.k) throw std::invalid_argument("relevance_target: |relevant| != k");
  std::vector<std::size_t> p(predicted.begin(), predicted.end());
  std::vector<std::size_t> r(relevant.begin(), relevant.end());
  std::sort(p.begin(), p.end());
  std::sort(r.begin(), r.end());
  if (std::adjacent_find(p.begin(), p.end()) != p.end() || std::adjacent_find(r.begin(), r.end()) != r.end()) {
    throw std::invalid_argument("relevance_target: sets must not contain duplicates");
  }
  std::vector<std::size_t> common;
  std::set_intersection(p.begin(), p.end(), r.begin(), r.end(), std::back_inserter(common));
  const std::size_t best = std::min(config.k, config.ya);
  if (common.size() == best) return 1.0;
  return raw_overlap(common.size(), config.k, config.ya, config.method) /
         raw_overlap(best, config.k, config.ya, config.method);
}

}  // namespace modgate
