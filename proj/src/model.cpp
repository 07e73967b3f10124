#include "modgate/model.hpp"

#include <charconv>
#include <cstring>
#include <fstream>
#include <sstream>

#include "modgate/array_io.hpp"

namespace modgate {

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

const std::string& need(const std::map<std::string, std::string>& kv, const std::string& key) {
  auto it = kv.find(key);
  if (it == kv.end()) throw FormatError("model config is missing '" + key + "'");
  return it->second;
}

std::size_t need_size(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& s = need(kv, key);
  std::size_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw FormatError("model config '" + key + "' is not an integer");
  return v;
}

double need_double(const std::map<std::string, std::string>& kv, const std::string& key) {
  const auto& s = need(kv, key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size()) throw FormatError("model config '" + key + "' is not a number");
  return v;
}

std::unique_ptr<SyntheticAudioBackbone> make_backbone(ParameterStore& store, const ModelConfig& cfg,
                                                      const EmbeddingTable& prototypes) {
  if (prototypes.labels() != cfg.audio_labels) throw ConfigError("audio prototypes do not match the configured labels");
  if (prototypes.dim() != cfg.audio_input_dim) throw ConfigError("audio prototype width does not match audio_input_dim");
  return std::make_unique<SyntheticAudioBackbone>(store, "audio.backbone", prototypes, cfg.audio_embed_dim,
                                                  cfg.backbone_sharpness, cfg.backbone_seed);
}

constexpr char kCheckpointMagic[8] = {'M', 'O', 'D', 'G', 'A', 'T', 'E', '1'};
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

FusionMode parse_fusion(std::string_view name) {
  if (name == "imd") return FusionMode::kImd;
  if (name == "late-concat") return FusionMode::kLateConcat;
  if (name == "visual-only") return FusionMode::kVisualOnly;
  throw ConfigError("unknown fusion mode: " + std::string(name));
}

std::string_view fusion_name(FusionMode mode) {
  switch (mode) {
    case FusionMode::kImd: return "imd";
    case FusionMode::kLateConcat: return "late-concat";
    case FusionMode::kVisualOnly: return "visual-only";
  }
  return "?";
}

void ModelConfig::validate() const {
  clip.validate();
  if (clip.channels != 3) throw ConfigError("model clip spec must describe the 3-channel RGB stream");
  encoder.validate(clip.dim);
  gate.validate();
  if (audio_embed_dim == 0 || fusion_dim == 0 || audio_input_dim == 0) throw ConfigError("model widths must be positive");
  if (video_classes < 2) throw ConfigError("need at least two video classes");
  if (audio_labels.empty()) throw ConfigError("need at least one audio label");
}

std::map<std::string, std::string> ModelConfig::to_map() const {
  std::string labels;
  for (std::size_t i = 0; i < audio_labels.size(); ++i) labels += (i ? ";" : "") + audio_labels[i];
  return {
      {"frames", std::to_string(clip.frames)},
      {"height", std::to_string(clip.height)},
      {"width", std::to_string(clip.width)},
      {"patch", std::to_string(clip.patch)},
      {"dim", std::to_string(clip.dim)},
      {"layers", std::to_string(encoder.layers)},
      {"st_blocks", std::to_string(encoder.st_blocks)},
      {"heads", std::to_string(encoder.heads)},
      {"mlp_ratio", std::to_string(encoder.mlp_ratio)},
      {"audio_embed_dim", std::to_string(audio_embed_dim)},
      {"fusion_dim", std::to_string(fusion_dim)},
      {"video_classes", std::to_string(video_classes)},
      {"audio_labels", labels},
      {"audio_input_dim", std::to_string(audio_input_dim)},
      {"backbone_sharpness", fmt_double(backbone_sharpness)},
      {"backbone_seed", std::to_string(backbone_seed)},
      {"alpha", fmt_double(gate.alpha)},
      {"scheme", std::string(scheme_name(gate.scheme))},
      {"fusion", std::string(fusion_name(fusion))},
      {"seed", std::to_string(seed)},
  };
}

ModelConfig ModelConfig::from_map(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.clip.frames = need_size(kv, "frames");
  c.clip.height = need_size(kv, "height");
  c.clip.width = need_size(kv, "width");
  c.clip.patch = need_size(kv, "patch");
  c.clip.dim = need_size(kv, "dim");
  c.clip.channels = 3;
  c.encoder.layers = need_size(kv, "layers");
  c.encoder.st_blocks = need_size(kv, "st_blocks");
  c.encoder.heads = need_size(kv, "heads");
  c.encoder.mlp_ratio = need_size(kv, "mlp_ratio");
  c.audio_embed_dim = need_size(kv, "audio_embed_dim");
  c.fusion_dim = need_size(kv, "fusion_dim");
  c.video_classes = need_size(kv, "video_classes");
  c.audio_labels.clear();
  std::string labels = need(kv, "audio_labels");
  std::size_t start = 0;
  for (;;) {
    const auto pos = labels.find(';', start);
    c.audio_labels.push_back(labels.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  c.audio_input_dim = need_size(kv, "audio_input_dim");
  c.backbone_sharpness = need_double(kv, "backbone_sharpness");
  c.backbone_seed = need_size(kv, "backbone_seed");
  c.gate.alpha = need_double(kv, "alpha");
  c.gate.scheme = parse_scheme(need(kv, "scheme"));
  c.fusion = parse_fusion(need(kv, "fusion"));
  c.seed = need_size(kv, "seed");
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------

MultimodalModel::MultimodalModel(const ModelConfig& config, const EmbeddingTable& audio_prototypes)
    : config_((config.validate(), config)),
      init_rng_(config.seed),
      backbone_(make_backbone(store_, config_, audio_prototypes)),
      visual_(store_, "visual", config_.clip, config_.encoder, config_.fusion_dim, init_rng_),
      bottleneck_(store_, "audio.bottleneck", config_.audio_embed_dim, config_.fusion_dim, init_rng_),
      relevance_(store_, "imd.relevance", config_.fusion_dim, init_rng_),
      fusion_(store_, "imd.fusion", config_.fusion_dim, init_rng_),
      classifier_(store_, "head.classifier", config_.fusion_dim, config_.video_classes, init_rng_) {
  if (config_.fusion != FusionMode::kImd) store_.set_frozen_prefix("imd.relevance", true);
}

GateDecision MultimodalModel::decide(double rev) const {
  switch (config_.fusion) {
    case FusionMode::kImd: return gate(rev, config_.gate);
    case FusionMode::kLateConcat: return {rev, 1.0, false};
    case FusionMode::kVisualOnly: return {rev, 0.0, true};
  }
  return {};
}

ForwardResult MultimodalModel::forward(std::span<const NdArray* const> rgb, std::span<const NdArray* const> flow,
                                       std::span<const std::vector<double>* const> audio,
                                       std::span<const double> fixed_deltas) const {
  const std::size_t B = rgb.size();
  if (B == 0 || flow.size() != B || audio.size() != B) throw ShapeError("forward: inconsistent batch");
  if (!fixed_deltas.empty() && fixed_deltas.size() != B) throw ShapeError("forward: fixed_deltas size");
  ForwardResult r;
  r.visual = visual_.forward(rgb, flow);
  std::vector<double> emb;
  emb.reserve(B * config_.audio_embed_dim);
  r.audio_raw.reserve(B);
  for (std::size_t b = 0; b < B; ++b) {
    r.audio_raw.push_back(backbone_->forward(*audio[b]));
    const auto& e = r.audio_raw.back().embedding;
    emb.insert(emb.end(), e.begin(), e.end());
  }
  r.audio = bottleneck_.forward(Tensor::from({B, config_.audio_embed_dim}, std::move(emb)));
  r.rev = relevance_.forward(r.audio, r.visual);
  std::vector<double> deltas(B);
  const auto rev = r.rev.data();
  for (std::size_t b = 0; b < B; ++b) {
    r.gates.push_back(decide(rev[b]));
    if (!fixed_deltas.empty()) r.gates.back() = {rev[b], fixed_deltas[b], fixed_deltas[b] == 0.0};
    deltas[b] = r.gates.back().delta;
  }
  r.logits = classifier_.logits(fusion_.forward(r.audio, r.visual, deltas));
  return r;
}

ForwardResult MultimodalModel::forward(std::span<const MultimodalSample* const> batch) const {
  std::vector<const NdArray*> rgb, flow;
  std::vector<const std::vector<double>*> audio;
  for (const auto* s : batch) {
    rgb.push_back(&s->rgb);
    flow.push_back(&s->flow);
    audio.push_back(&s->audio);
  }
  return forward(rgb, flow, audio);
}

// ---------------------------------------------------------------------------

void save_checkpoint(const MultimodalModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kCheckpointMagic, sizeof kCheckpointMagic);
  io::write_u32(out, kCheckpointVersion);
  std::string text;
  for (const auto& [k, v] : model.config().to_map()) text += k + "=" + v + "\n";
  io::write_string(out, text);
  const auto& params = model.params().all();
  io::write_u64(out, params.size());
  for (const auto& p : params) {
    io::write_string(out, p.name);
    io::write_u8(out, p.frozen ? 1 : 0);
    io::write_array(out, p.tensor.to_array());
  }
  if (!out) throw IoError("write failed: " + path.string());
}

std::unique_ptr<MultimodalModel> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  char magic[sizeof kCheckpointMagic];
  if (!in.read(magic, sizeof magic) || std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
    throw FormatError(path.string() + " is not a checkpoint");
  }
  if (io::read_u32(in) != kCheckpointVersion) throw FormatError("unsupported checkpoint version");
  std::map<std::string, std::string> kv;
  std::istringstream text(io::read_string(in));
  std::string line;
  while (std::getline(text, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("malformed checkpoint config line");
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  const ModelConfig cfg = ModelConfig::from_map(kv);
  EmbeddingTable placeholder(cfg.audio_input_dim);
  for (const auto& l : cfg.audio_labels) placeholder.add(l, std::vector<double>(cfg.audio_input_dim, 0.0));
  auto model = std::make_unique<MultimodalModel>(cfg, placeholder);

  const std::uint64_t count = io::read_u64(in);
  if (count != model->params().size()) throw FormatError("checkpoint parameter count mismatch");
  for (std::uint64_t i = 0; i < count; ++i) {
    const std::string name = io::read_string(in);
    const bool frozen = io::read_u8(in) != 0;
    NdArray arr = io::read_array(in);
    Parameter* p = model->params().find(name);
    if (!p) throw FormatError("checkpoint has unknown parameter " + name);
    if (p->tensor.shape() != arr.shape) throw FormatError("checkpoint shape mismatch for " + name);
    auto dst = p->tensor.mutable_data();
    std::copy(arr.data.begin(), arr.data.end(), dst.begin());
    p->frozen = frozen;
  }
  return model;
}

}  // namespace modgate
