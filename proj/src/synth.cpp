#include "modgate/synth.hpp"

#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>

#include "modgate/array_io.hpp"
#include "modgate/params.hpp"

namespace modgate {

namespace {

std::string indexed(const char* prefix, std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%03zu", prefix, i);
  return buf;
}

std::vector<double> unit_normal(std::size_t dim, Rng& rng) {
  std::vector<double> v(dim);
  double n = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    n += x * x;
  }
  n = std::sqrt(n);
  for (auto& x : v) x /= n;
  return v;
}

std::vector<double> normals(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

}  // namespace

LabelSpace gen_label_space(const LabelSpaceConfig& config) {
  if (config.video_classes < 2 || config.audio_classes < 1 || config.dim < 1) {
    throw ConfigError("label space: need >= 2 video classes, >= 1 audio class, dim >= 1");
  }
  Rng rng(config.seed);
  std::vector<std::vector<double>> centres;
  for (std::size_t v = 0; v < config.video_classes; ++v) centres.push_back(unit_normal(config.dim, rng));
  auto jitter = [&](const std::vector<double>& c) {
    std::vector<double> out = c;
    const double s = config.spread / std::sqrt(static_cast<double>(config.dim));
    for (auto& x : out) x += s * rng.normal();
    return out;
  };
  LabelSpace space{EmbeddingTable(config.dim), EmbeddingTable(config.dim)};
  for (std::size_t v = 0; v < config.video_classes; ++v) space.video.add(indexed("video", v), jitter(centres[v]));
  for (std::size_t u = 0; u < config.audio_classes; ++u) {
    space.audio.add(indexed("audio", u), jitter(centres[u % config.video_classes]));
  }
  return space;
}

void SynthConfig::validate() const {
  if (!(relevance_rate >= 0.0 && relevance_rate <= 1.0)) throw ConfigError("relevance rate must lie in [0, 1]");
  if (samples_per_class == 0) throw ConfigError("samples_per_class must be positive");
  if (frames == 0 || patch == 0 || height % patch || width % patch || height == 0 || width == 0) {
    throw ConfigError("synthetic clip geometry is invalid");
  }
  if (visual_group == 0) throw ConfigError("visual_group must be positive");
  if (visual_noise < 0.0 || audio_noise < 0.0) throw ConfigError("noise scales must be non-negative");
}

Dataset gen_dataset(const SynthConfig& config, const Savld& savld, const EmbeddingTable& audio_prototypes) {
  config.validate();
  const std::size_t classes = savld.size();
  if (classes == 0) throw ConfigError("gen_dataset: empty dictionary");
  const auto entries = savld_audio_indices(savld, audio_prototypes.labels());
  const std::size_t n_audio = audio_prototypes.size();

  std::vector<std::vector<std::size_t>> outside(classes);
  for (std::size_t v = 0; v < classes; ++v) {
    std::vector<bool> in(n_audio, false);
    for (auto a : entries[v]) in[a] = true;
    for (std::size_t a = 0; a < n_audio; ++a) {
      if (!in[a]) outside[v].push_back(a);
    }
    if (config.relevance_rate < 1.0 && outside[v].empty()) {
      throw ConfigError("gen_dataset: class '" + savld.entry(v).video_label +
                        "' has no audio class outside its dictionary entry");
    }
  }

  // Per-class visual patterns over one patch: shared group part + specific part.
  const std::size_t P = config.patch;
  Rng pattern_rng = Rng::substream(config.seed, 0x7061747465726eULL);
  auto make_patterns = [&](std::size_t channels) {
    const std::size_t pd = channels * P * P;
    const std::size_t groups = (classes + config.visual_group - 1) / config.visual_group;
    std::vector<std::vector<double>> shared;
    for (std::size_t g = 0; g < groups; ++g) shared.push_back(normals(pd, pattern_rng));
    std::vector<std::vector<double>> out;
    for (std::size_t v = 0; v < classes; ++v) {
      auto spec = normals(pd, pattern_rng);
      std::vector<double> p(pd);
      for (std::size_t i = 0; i < pd; ++i) {
        p[i] = config.visual_shared * shared[v / config.visual_group][i] + config.visual_specific * spec[i];
      }
      out.push_back(std::move(p));
    }
    return out;
  };
  const auto rgb_patterns = make_patterns(3);
  const auto flow_patterns = make_patterns(2);

  auto render = [&](const std::vector<double>& pattern, std::size_t channels, Rng& rng) {
    NdArray clip({config.frames, channels, config.height, config.width});
    std::size_t idx = 0;
    for (std::size_t j = 0; j < config.frames; ++j) {
      for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < config.height; ++y) {
          for (std::size_t x = 0; x < config.width; ++x) {
            clip.data[idx++] = pattern[(c * P + y % P) * P + x % P] + config.visual_noise * rng.normal();
          }
        }
      }
    }
    return clip;
  };

  Dataset data;
  data.reserve(classes * config.samples_per_class);
  for (std::size_t v = 0; v < classes; ++v) {
    for (std::size_t s = 0; s < config.samples_per_class; ++s) {
      Rng rng = Rng::substream(config.seed, v * config.samples_per_class + s + 1);
      MultimodalSample m;
      m.label = v;
      m.is_relevant = rng.bernoulli(config.relevance_rate);
      const auto& pool = m.is_relevant ? entries[v] : outside[v];
      m.audio_class = pool[rng.below(pool.size())];
      auto proto = audio_prototypes.vector(m.audio_class);
      m.audio.assign(proto.begin(), proto.end());
      for (auto& x : m.audio) x += config.audio_noise * rng.normal();
      m.rgb = render(rgb_patterns[v], 3, rng);
      m.flow = render(flow_patterns[v], 2, rng);
      data.push_back(std::move(m));
    }
  }
  return data;
}

Dataset intra_class_pairing(const Dataset& data, std::uint64_t seed) {
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].label].push_back(i);
  Dataset out = data;
  for (const auto& [label, members] : groups) {
    if (members.size() < 2) {
      std::clog << "intra_class_pairing: class " << label << " has a single sample; left unpermuted\n";
      continue;
    }
    std::vector<std::size_t> perm = members;
    Rng rng = Rng::substream(seed, label);
    rng.shuffle(perm);
    for (std::size_t i = 0; i < members.size(); ++i) {
      const auto& src = data[perm[i]];
      auto& dst = out[members[i]];
      dst.audio = src.audio;
      dst.audio_class = src.audio_class;
      dst.is_relevant = src.is_relevant;
    }
  }
  return out;
}

std::pair<Dataset, Dataset> split_dataset(const Dataset& data, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train fraction must lie in (0, 1)");
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.size(); ++i) groups[data[i].label].push_back(i);
  std::vector<bool> to_train(data.size(), false);
  for (auto& [label, members] : groups) {
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
    if (n_train == 0 || n_train == members.size()) {
      throw ConfigError("split leaves class " + std::to_string(label) + " empty on one side");
    }
    Rng rng = Rng::substream(seed, label);
    rng.shuffle(members);
    for (std::size_t i = 0; i < n_train; ++i) to_train[members[i]] = true;
  }
  std::pair<Dataset, Dataset> out;
  for (std::size_t i = 0; i < data.size(); ++i) (to_train[i] ? out.first : out.second).push_back(data[i]);
  return out;
}

void save_dataset(const Dataset& data, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write manifest in " + dir.string());
  manifest << "# label\tis_relevant\taudio_class\trgb\tflow\taudio\n";
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto& s = data[i];
    char stem[32];
    std::snprintf(stem, sizeof stem, "%06zu", i);
    const std::string rgb = std::string(stem) + ".rgb.bin";
    const std::string flow = std::string(stem) + ".flow.bin";
    const std::string audio = std::string(stem) + ".audio.bin";
    io::save_array(dir / rgb, s.rgb);
    io::save_array(dir / flow, s.flow);
    io::save_array(dir / audio, NdArray({s.audio.size()}, s.audio));
    manifest << s.label << '\t' << (s.is_relevant ? 1 : 0) << '\t' << s.audio_class << '\t' << rgb << '\t' << flow
             << '\t' << audio << '\n';
  }
  if (!manifest) throw IoError("write failed: manifest in " + dir.string());
}

Dataset load_dataset(const std::filesystem::path& dir) {
  std::ifstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot open manifest in " + dir.string());
  Dataset data;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(manifest, line)) {
    ++lineno;
    if (line.empty() || line.front() == '#') continue;
    std::istringstream row(line);
    MultimodalSample s;
    int rel = 0;
    std::string rgb, flow, audio;
    if (!(row >> s.label >> rel >> s.audio_class >> rgb >> flow >> audio) || (rel != 0 && rel != 1)) {
      throw FormatError("manifest line " + std::to_string(lineno) + " is malformed");
    }
    s.is_relevant = rel == 1;
    s.rgb = io::load_array(dir / rgb);
    s.flow = io::load_array(dir / flow);
    s.audio = io::load_array(dir / audio).data;
    data.push_back(std::move(s));
  }
  if (data.empty()) throw FormatError("dataset in " + dir.string() + " is empty");
  return data;
}

}  // namespace modgate
