#include "modgate/harness.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>

namespace modgate {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::size_t to_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw ConfigError(key + ": expected a non-negative integer, got '" + v + "'");
  return out;
}

double to_double(const std::string& key, const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size() || !std::isfinite(out)) {
    throw ConfigError(key + ": expected a number, got '" + v + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError(key + ": expected a boolean, got '" + v + "'");
}

std::vector<std::string> list_of(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::string fixed(double v, int digits = 6) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::vector<const MultimodalSample*> pointers(const Dataset& data, std::span<const std::size_t> idx) {
  std::vector<const MultimodalSample*> out;
  out.reserve(idx.size());
  for (auto i : idx) out.push_back(&data[i]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Configuration

ViewConfig ViewConfig::parse(std::string_view text) {
  const auto x = text.find('x');
  if (x == std::string_view::npos) throw ConfigError("views must look like SxT, got '" + std::string(text) + "'");
  ViewConfig v;
  v.spatial = to_size("views", std::string(text.substr(0, x)));
  v.temporal = to_size("views", std::string(text.substr(x + 1)));
  if (v.spatial == 0 || v.temporal == 0) throw ConfigError("views must be at least 1x1");
  return v;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto& m = model;
  if (key == "preset") {
    const auto p = EncoderConfig::preset(value);
    m.encoder.layers = p.layers;
    m.encoder.st_blocks = p.st_blocks;
  } else if (key == "layers") m.encoder.layers = to_size(key, value);
  else if (key == "st_blocks") m.encoder.st_blocks = to_size(key, value);
  else if (key == "heads") m.encoder.heads = to_size(key, value);
  else if (key == "mlp_ratio") m.encoder.mlp_ratio = to_size(key, value);
  else if (key == "dim") m.clip.dim = to_size(key, value);
  else if (key == "frames") m.clip.frames = synth.frames = to_size(key, value);
  else if (key == "height") m.clip.height = synth.height = to_size(key, value);
  else if (key == "width") m.clip.width = synth.width = to_size(key, value);
  else if (key == "patch") m.clip.patch = synth.patch = to_size(key, value);
  else if (key == "audio_embed_dim") m.audio_embed_dim = to_size(key, value);
  else if (key == "fusion_dim") m.fusion_dim = to_size(key, value);
  else if (key == "backbone_sharpness") m.backbone_sharpness = to_double(key, value);
  else if (key == "backbone_seed") m.backbone_seed = to_size(key, value);
  else if (key == "alpha") m.gate.alpha = to_double(key, value);
  else if (key == "scheme") m.gate.scheme = parse_scheme(value);
  else if (key == "fusion") m.fusion = parse_fusion(value);
  else if (key == "overlap") overlap.method = parse_overlap(value);
  else if (key == "k") overlap.k = to_size(key, value);
  else if (key == "ya") overlap.ya = to_size(key, value);
  else if (key == "lambda_rn") loss.lambda_rn = to_double(key, value);
  else if (key == "lr") sgd.learning_rate = to_double(key, value);
  else if (key == "weight_decay") sgd.weight_decay = to_double(key, value);
  else if (key == "epochs") epochs = to_size(key, value);
  else if (key == "batch_size") batch_size = to_size(key, value);
  else if (key == "seed") seed = to_size(key, value);
  else if (key == "augment") augment = to_bool(key, value);
  else if (key == "views") views = ViewConfig::parse(value);
  else if (key == "train_fraction") train_fraction = to_double(key, value);
  else if (key == "samples_per_class") synth.samples_per_class = to_size(key, value);
  else if (key == "relevance_rate") synth.relevance_rate = to_double(key, value);
  else if (key == "visual_group") synth.visual_group = to_size(key, value);
  else if (key == "visual_shared") synth.visual_shared = to_double(key, value);
  else if (key == "visual_specific") synth.visual_specific = to_double(key, value);
  else if (key == "visual_noise") synth.visual_noise = to_double(key, value);
  else if (key == "audio_noise") synth.audio_noise = to_double(key, value);
  else if (key == "data_seed") synth.seed = to_size(key, value);
  else if (key == "video_classes") labels.video_classes = to_size(key, value);
  else if (key == "audio_classes") labels.audio_classes = to_size(key, value);
  else if (key == "label_dim") labels.dim = to_size(key, value);
  else if (key == "label_spread") labels.spread = to_double(key, value);
  else if (key == "label_seed") labels.seed = to_size(key, value);
  else if (key == "metric") metric = parse_metric(value);
  else if (key == "video_emb") video_emb = value;
  else if (key == "audio_emb") audio_emb = value;
  else if (key == "ablate_alpha") {
    ablate_alpha.clear();
    for (const auto& s : list_of(value)) ablate_alpha.push_back(to_double(key, s));
  } else if (key == "ablate_scheme") {
    ablate_scheme.clear();
    for (const auto& s : list_of(value)) ablate_scheme.push_back(parse_scheme(s));
  } else if (key == "ablate_overlap") {
    ablate_overlap.clear();
    for (const auto& s : list_of(value)) ablate_overlap.push_back(parse_overlap(s));
  } else if (key == "ablate_k_ya") {
    ablate_k_ya.clear();
    for (const auto& s : list_of(value)) {
      const auto dash = s.find('-');
      if (dash == std::string::npos) throw ConfigError("ablate_k_ya entries look like K-Ya");
      ablate_k_ya.emplace_back(to_size(key, s.substr(0, dash)), to_size(key, s.substr(dash + 1)));
    }
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
  explicit_keys.insert(key);
}

void RunConfig::validate() const {
  model.clip.validate();
  model.encoder.validate(model.clip.dim);
  model.gate.validate();
  overlap.validate();
  loss.validate();
  sgd.validate();
  synth.validate();
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ConfigError("train_fraction must lie in (0, 1)");
  if (model.clip.frames != synth.frames || model.clip.height != synth.height || model.clip.width != synth.width ||
      model.clip.patch != synth.patch) {
    throw ConfigError("model and data clip geometry differ");
  }
}

std::string RunConfig::describe() const {
  std::ostringstream os;
  os << "fusion=" << fusion_name(model.fusion) << " scheme=" << scheme_name(model.gate.scheme)
     << " alpha=" << fixed(model.gate.alpha, 4) << " overlap=" << overlap_name(overlap.method) << " k=" << overlap.k
     << " ya=" << overlap.ya << " lambda_rn=" << fixed(loss.lambda_rn, 4) << " lr=" << fixed(sgd.learning_rate, 6)
     << " wd=" << fixed(sgd.weight_decay, 6) << " epochs=" << epochs << " batch=" << batch_size << " seed=" << seed
     << " augment=" << (augment ? 1 : 0);
  return os.str();
}

RunConfig parse_run_config(std::istream& in, const std::filesystem::path& base_dir) {
  RunConfig cfg;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line.substr(0, line.find('#')));
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(lineno) + ": expected key=value");
    cfg.set(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  for (auto* p : {&cfg.video_emb, &cfg.audio_emb}) {
    if (!p->empty() && p->is_relative() && !base_dir.empty()) *p = base_dir / *p;
  }
  apply_seed_env(cfg);
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  return parse_run_config(in, path.parent_path());
}

void apply_seed_env(RunConfig& config) {
  if (const char* env = std::getenv("MODALITY_GATE_SEED"); env && *env) {
    config.seed = to_size("MODALITY_GATE_SEED", env);
  }
}

LabelSpace load_label_space(const RunConfig& config) {
  if (config.video_emb.empty() != config.audio_emb.empty()) {
    throw ConfigError("video_emb and audio_emb must be given together");
  }
  if (config.video_emb.empty()) return gen_label_space(config.labels);
  return LabelSpace{load_embeddings(config.video_emb), load_embeddings(config.audio_emb)};
}

Experiment prepare_experiment(const RunConfig& config, const Savld& dictionary, const EmbeddingTable& audio) {
  SynthConfig synth = config.synth;
  Dataset all = gen_dataset(synth, dictionary, audio);
  auto [tr, va] = split_dataset(all, config.train_fraction, synth.seed);
  return Experiment{std::move(tr), std::move(va)};
}

ModelConfig resolve_model_config(const RunConfig& config, const Savld& dictionary, const EmbeddingTable& audio) {
  ModelConfig m = config.model;
  m.video_classes = dictionary.size();
  m.audio_labels = audio.labels();
  m.audio_input_dim = audio.dim();
  m.seed = config.seed;
  m.validate();
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation

NdArray apply_view(const NdArray& clip, std::size_t patch, std::size_t shift_y, std::size_t shift_x,
                   std::size_t shift_t) {
  if (clip.shape.size() != 4) throw ShapeError("apply_view: expected a [T,C,H,W] clip");
  const std::size_t T = clip.shape[0], C = clip.shape[1], H = clip.shape[2], W = clip.shape[3];
  (void)patch;
  NdArray out(clip.shape);
  for (std::size_t t = 0; t < T; ++t) {
    const std::size_t st = (t + shift_t) % T;
    for (std::size_t c = 0; c < C; ++c) {
      for (std::size_t y = 0; y < H; ++y) {
        const std::size_t sy = (y + shift_y) % H;
        for (std::size_t x = 0; x < W; ++x) {
          out.data[((t * C + c) * H + y) * W + x] = clip.data[((st * C + c) * H + sy) * W + (x + shift_x) % W];
        }
      }
    }
  }
  return out;
}

std::vector<std::vector<double>> predict_probabilities(const MultimodalModel& model, const Dataset& data,
                                                       const ViewConfig& views, std::size_t batch_size) {
  if (data.empty()) throw std::invalid_argument("evaluate: empty dataset");
  const auto& clip = model.config().clip;
  const std::size_t classes = model.config().video_classes;
  const std::size_t n_views = views.spatial * views.temporal;
  std::vector<std::vector<double>> probs(data.size(), std::vector<double>(classes, 0.0));
  for (std::size_t view = 0; view < n_views; ++view) {
    std::size_t sy = 0, sx = 0, st = 0;
    if (view > 0) {
      Rng rng = Rng::substream(views.seed, view);
      const std::size_t s = view / views.temporal, t = view % views.temporal;
      if (s > 0) {
        sy = clip.patch * rng.below(clip.height / clip.patch);
        sx = clip.patch * rng.below(clip.width / clip.patch);
      }
      if (t > 0) st = rng.below(clip.frames);
    }
    const bool identity = sy == 0 && sx == 0 && st == 0;
    for (std::size_t start = 0; start < data.size(); start += batch_size) {
      const std::size_t end = std::min(data.size(), start + batch_size);
      std::vector<NdArray> rgb_store, flow_store;
      std::vector<const NdArray*> rgb, flow;
      std::vector<const std::vector<double>*> audio;
      if (!identity) {
        for (std::size_t i = start; i < end; ++i) {
          rgb_store.push_back(apply_view(data[i].rgb, clip.patch, sy, sx, st));
          flow_store.push_back(apply_view(data[i].flow, clip.patch, sy, sx, st));
        }
      }
      for (std::size_t i = start; i < end; ++i) {
        rgb.push_back(identity ? &data[i].rgb : &rgb_store[i - start]);
        flow.push_back(identity ? &data[i].flow : &flow_store[i - start]);
        audio.push_back(&data[i].audio);
      }
      auto r = model.forward(rgb, flow, audio);
      const Tensor probs_t = softmax(r.logits, 1);
      const auto p = probs_t.data();
      for (std::size_t i = start; i < end; ++i) {
        for (std::size_t c = 0; c < classes; ++c) probs[i][c] += p[(i - start) * classes + c] / static_cast<double>(n_views);
      }
    }
  }
  return probs;
}

Accuracy topk_accuracy(const std::vector<std::vector<double>>& probs, std::span<const std::size_t> labels) {
  if (probs.empty() || probs.size() != labels.size()) throw std::invalid_argument("topk_accuracy: size mismatch");
  std::size_t hit1 = 0, hit5 = 0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    const auto& p = probs[i];
    const std::size_t y = labels[i];
    if (y >= p.size()) throw std::out_of_range("topk_accuracy: label out of range");
    // Rank of the label: classes strictly better, or equal with lower index.
    std::size_t rank = 0;
    for (std::size_t c = 0; c < p.size(); ++c) {
      if (p[c] > p[y] || (p[c] == p[y] && c < y)) ++rank;
    }
    if (rank == 0) ++hit1;
    if (rank < 5) ++hit5;
  }
  const double n = static_cast<double>(probs.size());
  return {static_cast<double>(hit1) / n, static_cast<double>(hit5) / n};
}

Accuracy evaluate(const MultimodalModel& model, const Dataset& data, const ViewConfig& views) {
  std::vector<std::size_t> labels;
  for (const auto& s : data) labels.push_back(s.label);
  return topk_accuracy(predict_probabilities(model, data, views), labels);
}

double roc_auc(std::span<const double> scores, const std::vector<bool>& positive) {
  if (scores.size() != positive.size()) throw std::invalid_argument("roc_auc: size mismatch");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Mann-Whitney U with mid-ranks.
  double rank_sum = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j < idx.size() && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid = (static_cast<double>(i + 1) + static_cast<double>(j)) / 2.0;
    for (std::size_t t = i; t < j; ++t) {
      if (positive[idx[t]]) {
        rank_sum += mid;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = scores.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) return 0.5;
  const double np = static_cast<double>(n_pos), nn = static_cast<double>(n_neg);
  return (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

GateStats gate_stats(const MultimodalModel& model, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("gate_stats: empty dataset");
  GateStats g;
  std::vector<double> revs;
  std::vector<bool> relevant;
  std::size_t dropped = 0;
  constexpr std::size_t kBatch = 32;
  for (std::size_t start = 0; start < data.size(); start += kBatch) {
    std::vector<std::size_t> idx(std::min(kBatch, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    auto batch = pointers(data, idx);
    auto r = model.forward(batch);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const double rev = r.gates[b].rev;
      revs.push_back(rev);
      relevant.push_back(data[idx[b]].is_relevant);
      if (r.gates[b].delta == 0.0) ++dropped;
      const auto bin = std::min<std::size_t>(9, static_cast<std::size_t>(rev * 10.0));
      ++g.rev_histogram[bin];
    }
  }
  g.drop_rate = static_cast<double>(dropped) / static_cast<double>(data.size());
  g.mean_rev = std::accumulate(revs.begin(), revs.end(), 0.0) / static_cast<double>(revs.size());
  g.auc = roc_auc(revs, relevant);
  return g;
}

// ---------------------------------------------------------------------------
// Training

std::string TrainReport::to_text() const {
  std::ostringstream os;
  os << "epoch\tcls_loss\trn_loss\ttrain_top1\ttrain_top5\tval_top1\tval_top5\tdrop_rate\n";
  for (const auto& e : epochs) {
    os << e.epoch << '\t' << fixed(e.cls_loss) << '\t' << fixed(e.rn_loss) << '\t' << fixed(e.train_top1) << '\t'
       << fixed(e.train_top5) << '\t' << fixed(e.val_top1) << '\t' << fixed(e.val_top5) << '\t' << fixed(e.drop_rate)
       << '\n';
  }
  os << "gate_drop_rate\t" << fixed(gate.drop_rate) << '\n';
  os << "gate_auc\t" << fixed(gate.auc) << '\n';
  os << "gate_mean_rev\t" << fixed(gate.mean_rev) << '\n';
  os << "rev_histogram";
  for (auto c : gate.rev_histogram) os << '\t' << c;
  os << '\n';
  return os.str();
}

TrainResult train(const RunConfig& config, const Dataset& train_data, const Dataset& val_data,
                  const Savld& dictionary, const EmbeddingTable& audio) {
  config.validate();
  if (train_data.empty()) throw std::invalid_argument("train: empty training set");
  if (dictionary.k() != config.overlap.k) {
    throw ConfigError("train: overlap k=" + std::to_string(config.overlap.k) + " but the dictionary has k=" +
                      std::to_string(dictionary.k()));
  }
  if (config.overlap.ya > audio.size()) throw ConfigError("train: ya exceeds the audio label count");
  const auto t0 = std::chrono::steady_clock::now();

  TrainResult result;
  result.model = std::make_unique<MultimodalModel>(resolve_model_config(config, dictionary, audio), audio);
  MultimodalModel& model = *result.model;
  const auto relevant = savld_audio_indices(dictionary, audio.labels());
  for (const auto& s : train_data) {
    if (s.label >= dictionary.size()) throw std::out_of_range("train: sample label outside the dictionary");
  }
  LossConfig loss_cfg = config.loss;
  if (model.config().fusion != FusionMode::kImd) loss_cfg.lambda_rn = 0.0;
  // Without the relevance term nothing reaches the relevance network.
  if (loss_cfg.lambda_rn == 0.0) model.params().set_frozen_prefix("imd.relevance", true);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    Dataset paired;
    const Dataset* data = &train_data;
    if (config.augment) {
      paired = intra_class_pairing(train_data, config.seed * 1000003ULL + epoch);
      data = &paired;
    }
    std::vector<std::size_t> order(data->size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng shuffle_rng = Rng::substream(config.seed, 0x5348554646ULL + epoch);
    shuffle_rng.shuffle(order);

    EpochStats stats;
    stats.epoch = epoch;
    std::vector<std::vector<double>> train_probs;
    std::vector<std::size_t> train_labels;
    std::size_t dropped = 0;
    double cls_sum = 0.0, rn_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
      const std::size_t end = std::min(order.size(), start + config.batch_size);
      std::span<const std::size_t> idx(order.data() + start, end - start);
      auto batch = pointers(*data, idx);
      auto where = [&](const NumericError& e) {
        return NumericError(std::string(e.what()) + " (epoch " + std::to_string(epoch) + ", batch starting at " +
                            std::to_string(start) + ")");
      };
      ForwardResult fwd;
      try {
        fwd = model.forward(batch);
      } catch (const NumericError& e) {
        throw where(e);
      }
      std::vector<std::size_t> labels;
      std::vector<double> targets;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        labels.push_back(batch[b]->label);
        const auto predicted = top_ya(fwd.audio_raw[b].predictions, config.overlap.ya);
        targets.push_back(relevance_target(predicted, relevant[batch[b]->label], config.overlap));
        if (fwd.gates[b].delta == 0.0) ++dropped;
      }
      double rn_value = 0.0;
      ImdLoss loss;
      try {
        rn_value = bce_loss(fwd.rev.detach(), targets).item();
        loss = imd_loss(fwd.logits, labels, fwd.rev, targets, loss_cfg);
        loss.total.backward();
      } catch (const NumericError& e) {
        throw where(e);
      }
      const double n = static_cast<double>(batch.size());
      cls_sum += loss.classification.item() * n;
      rn_sum += rn_value * n;
      const auto logits = fwd.logits.data();
      const std::size_t classes = model.config().video_classes;
      for (std::size_t b = 0; b < batch.size(); ++b) {
        train_probs.emplace_back(logits.begin() + static_cast<std::ptrdiff_t>(b * classes),
                                 logits.begin() + static_cast<std::ptrdiff_t>((b + 1) * classes));
        train_labels.push_back(labels[b]);
      }
      sgd_step(model.params().all(), config.sgd);
    }
    const double n = static_cast<double>(data->size());
    stats.cls_loss = cls_sum / n;
    stats.rn_loss = rn_sum / n;
    stats.drop_rate = static_cast<double>(dropped) / n;
    const auto acc = topk_accuracy(train_probs, train_labels);
    stats.train_top1 = acc.top1;
    stats.train_top5 = acc.top5;
    if (!val_data.empty()) {
      const auto val = evaluate(model, val_data, config.views);
      stats.val_top1 = val.top1;
      stats.val_top5 = val.top5;
    }
    result.report.epochs.push_back(stats);
  }
  result.report.gate = gate_stats(model, val_data.empty() ? train_data : val_data);
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return result;
}

// ---------------------------------------------------------------------------
// Ablation

std::vector<AblationRow> run_ablation(const RunConfig& base) {
  base.validate();
  const LabelSpace space = load_label_space(base);
  const Savld data_dict = build_savld(space.video, space.audio, base.overlap.k, base.metric);
  const Experiment exp = prepare_experiment(base, data_dict, space.audio);

  const std::vector<OverlapMethod> overlaps =
      base.ablate_overlap.empty() ? std::vector<OverlapMethod>{OverlapMethod::kIou, OverlapMethod::kDice}
                                  : base.ablate_overlap;
  const std::vector<std::pair<std::size_t, std::size_t>> k_ya =
      base.ablate_k_ya.empty() ? std::vector<std::pair<std::size_t, std::size_t>>{{10, 10}, {10, 20}, {20, 10}, {20, 20}}
                               : base.ablate_k_ya;
  const std::vector<double> alphas = base.ablate_alpha.empty() ? std::vector<double>{0.25, 0.5, 0.75} : base.ablate_alpha;
  const std::vector<GateScheme> schemes =
      base.ablate_scheme.empty() ? std::vector<GateScheme>{GateScheme::kMask, GateScheme::kWeight} : base.ablate_scheme;

  std::vector<AblationRow> rows;
  for (auto ov : overlaps) {
    for (auto [k, ya] : k_ya) {
      const Savld dict = build_savld(space.video, space.audio, k, base.metric);
      for (double alpha : alphas) {
        for (auto scheme : schemes) {
          RunConfig cfg = base;
          cfg.overlap = {k, ya, ov};
          cfg.model.gate = {alpha, scheme};
          cfg.model.fusion = FusionMode::kImd;
          AblationRow row{ov, k, ya, alpha, scheme, {}};
          row.report = train(cfg, exp.train, exp.val, dict, space.audio).report;
          rows.push_back(std::move(row));
        }
      }
    }
  }
  return rows;
}

namespace {

std::vector<std::vector<std::string>> ablation_cells(const std::vector<AblationRow>& rows) {
  std::vector<std::vector<std::string>> cells;
  cells.push_back({"loss", "k-ya", "alpha", "scheme", "val_top1", "val_top5", "drop_rate", "rn_auc", "cls_loss",
                   "rn_loss"});
  for (const auto& r : rows) {
    const auto& last = r.report.epochs.back();
    cells.push_back({std::string(overlap_name(r.overlap)), std::to_string(r.k) + "-" + std::to_string(r.ya),
                     fixed(r.alpha, 2), r.scheme == GateScheme::kMask ? "M" : "W", fixed(100.0 * last.val_top1, 2),
                     fixed(100.0 * last.val_top5, 2), fixed(r.report.gate.drop_rate, 4), fixed(r.report.gate.auc, 4),
                     fixed(last.cls_loss, 4), fixed(last.rn_loss, 4)});
  }
  return cells;
}

}  // namespace

std::string ablation_table(const std::vector<AblationRow>& rows) {
  const auto cells = ablation_cells(rows);
  std::vector<std::size_t> width(cells.front().size(), 0);
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  for (const auto& row : cells) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      os << (c ? "  " : "") << std::setw(static_cast<int>(width[c])) << row[c];
    }
    os << '\n';
  }
  return os.str();
}

std::string ablation_csv(const std::vector<AblationRow>& rows) {
  std::ostringstream os;
  for (const auto& row : ablation_cells(rows)) {
    for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
    os << '\n';
  }
  return os.str();
}

}  // namespace modgate
