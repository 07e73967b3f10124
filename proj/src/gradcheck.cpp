#include "modgate/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "modgate/model.hpp"

namespace modgate {

namespace {

Tensor random_leaf(Shape shape, Rng& rng, double scale = 1.0, double keep_off = 0.0) {
  std::vector<double> v(shape_size(shape));
  for (auto& x : v) {
    x = scale * rng.normal();
    if (keep_off > 0.0 && std::abs(x) < keep_off) x = x < 0 ? x - keep_off : x + keep_off;
  }
  return Tensor::from(std::move(shape), std::move(v), true);
}

/// sum(y * R) with a fixed random R, so every output entry carries weight.
Tensor project(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> r(y.size());
  for (auto& x : r) x = rng.normal();
  return sum(mul(y, Tensor::from(y.shape(), std::move(r))));
}

std::vector<Tensor> trainable(const ParameterStore& store) {
  std::vector<Tensor> out;
  for (const auto& p : store.all()) {
    if (!p.frozen) out.push_back(p.tensor);
  }
  return out;
}

/// Moves every trainable parameter to a random, well-conditioned point. At
/// the initialization scale the class rows entering the final norms have a
/// standard deviation near 0.02, where the curvature swamps a 1e-4 step.
void randomize(ParameterStore& store, Rng& rng, double scale) {
  for (auto& p : store.all()) {
    if (p.frozen) continue;
    for (auto& v : p.tensor.mutable_data()) v += scale * rng.normal();
  }
}

NdArray random_clip(Shape shape, Rng& rng) {
  NdArray a(std::move(shape));
  for (auto& x : a.data) x = rng.normal();
  return a;
}

using Check = std::function<GradCheckResult(const GradCheckOptions&)>;

std::vector<GradCheckResult> tensor_checks(const GradCheckOptions& opt) {
  std::vector<GradCheckResult> out;
  Rng rng(11);
  auto run = [&](std::string name, std::vector<Tensor> in, std::function<Tensor()> f) {
    out.push_back(check_gradients(std::move(name), in, f, opt));
  };
  {
    auto a = random_leaf({3, 4}, rng), b = random_leaf({4, 5}, rng);
    run("matmul", {a, b}, [=] { return project(matmul(a, b), 1); });
  }
  {
    auto a = random_leaf({3, 4}, rng), b = random_leaf({3, 4}, rng), bias = random_leaf({4}, rng);
    run("add", {a, b}, [=] { return project(add(a, b), 2); });
    run("add_bias", {a, bias}, [=] { return project(add(a, bias), 3); });
    run("mul", {a, b}, [=] { return project(mul(a, b), 4); });
    run("scale", {a}, [=] { return project(scale(a, -1.7), 5); });
    const std::vector<double> f{0.5, 0.0, 2.0};
    run("scale_rows", {a}, [=] { return project(scale_rows(a, f), 6); });
    run("concat_axis0", {a, b}, [=] {
      const std::vector<Tensor> parts{a, b};
      return project(concat(parts, 0), 7);
    });
    run("concat_axis1", {a, b}, [=] {
      const std::vector<Tensor> parts{a, b};
      return project(concat(parts, 1), 8);
    });
    run("split", {a}, [=] {
      const std::vector<std::size_t> sizes{1, 3};
      auto parts = split(a, 1, sizes);
      return add(project(parts[0], 9), project(parts[1], 10));
    });
    run("reshape", {a}, [=] { return project(reshape(a, {2, 6}), 11); });
    run("gather_rows", {a}, [=] {
      const std::vector<std::size_t> rows{2, 0, 2};
      return project(gather_rows(a, rows), 12);
    });
    run("tile_rows", {bias}, [=] { return project(tile_rows(bias, 3), 13); });
    run("sum", {a}, [=] { return sum(mul(a, a)); });
    run("mean_axis0", {a}, [=] { return project(mean(a, 0), 14); });
    run("mean_axis1", {a}, [=] { return project(mean(a, 1), 15); });
  }
  {
    auto a = random_leaf({4, 5}, rng, 1.0, 0.05);
    run("relu", {a}, [=] { return project(relu(a), 16); });
    run("sigmoid", {a}, [=] { return project(sigmoid(a), 17); });
    run("softmax_axis0", {a}, [=] { return project(softmax(a, 0), 18); });
    run("softmax_axis1", {a}, [=] { return project(softmax(a, 1), 19); });
  }
  {
    auto x = random_leaf({2, 3, 4}, rng), g = random_leaf({4}, rng), b = random_leaf({4}, rng);
    auto g1 = random_leaf({3}, rng), b1 = random_leaf({3}, rng);
    run("layer_norm_affine", {x, g, b}, [=] { return project(layer_norm(x, 2, g, b), 20); });
    run("layer_norm_middle_axis", {x, g1, b1}, [=] { return project(layer_norm(x, 1, g1, b1), 21); });
    run("layer_norm_plain", {x}, [=] { return project(layer_norm(x, 0), 22); });
  }
  {
    auto x = random_leaf({2, 3, 4}, rng), w = random_leaf({4, 2}, rng), b = random_leaf({2}, rng);
    run("linear", {x, w, b}, [=] { return project(linear(x, w, b), 23); });
  }
  {
    const auto sl = spatial_layout(2, 2, 2);
    const auto tl = temporal_layout(2, 2, 2);
    auto q = random_leaf({10, 4}, rng), k = random_leaf({10, 4}, rng), v = random_leaf({10, 4}, rng);
    run("attention_spatial", {q, k, v}, [=] { return project(attention(q, k, v, 2, sl), 24); });
    run("attention_temporal", {q, k, v}, [=] { return project(attention(q, k, v, 1, tl), 25); });
  }
  {
    auto logits = random_leaf({3, 5}, rng), single = random_leaf({5}, rng);
    const std::vector<std::size_t> labels{4, 0, 2}, one{3};
    run("ce_loss", {logits}, [=] { return ce_loss(logits, labels); });
    run("ce_loss_single", {single}, [=] { return ce_loss(single, one); });
    auto pred = Tensor::from({4}, {0.2, 0.55, 0.8, 0.35}, true);
    const std::vector<double> targets{0.0, 1.0, 0.4, 0.75};
    run("bce_loss", {pred}, [=] { return bce_loss(pred, targets); });
  }
  return out;
}

std::vector<GradCheckResult> visual_checks(const GradCheckOptions& opt) {
  std::vector<GradCheckResult> out;
  EncoderConfig enc{2, 1, 2, 2};
  const std::size_t D = 8, B = 2, T = 2, N = 2;
  const std::size_t R = B * T * N + B;
  const auto sl = spatial_layout(B, T, N);
  const auto tl = temporal_layout(B, T, N);
  std::vector<double> mask(R, 1.0);
  for (std::size_t b = 0; b < B; ++b) mask[B * T * N + b] = 0.0;
  {
    ParameterStore store;
    Rng rng(21);
    MultiHeadAttention mha(store, "mha", D, 2, rng);
    auto x = random_leaf({R, D}, rng);
    auto in = trainable(store);
    in.push_back(x);
    out.push_back(check_gradients("multi_head_attention", in, [&] { return project(mha.forward(x, sl), 31); }, opt));
  }
  {
    ParameterStore store;
    Rng rng(22);
    SpatialBlock block(store, "block", D, enc, rng);
    auto x = random_leaf({R, D}, rng);
    auto in = trainable(store);
    in.push_back(x);
    out.push_back(check_gradients("spatial_block", in, [&] { return project(block.forward(x, sl), 32); }, opt));
  }
  {
    ParameterStore store;
    Rng rng(23);
    SpatioTemporalBlock block(store, "block", D, enc, rng);
    auto x = random_leaf({R, D}, rng);
    auto in = trainable(store);
    in.push_back(x);
    out.push_back(check_gradients("spatiotemporal_block", in,
                                  [&] { return project(block.forward(x, sl, tl, mask), 33); }, opt));
  }
  {
    ParameterStore store;
    Rng rng(25);
    ClipSpec spec{2, 3, 16, 16, 8, D};
    TwoStreamEncoder encoder(store, "visual", spec, enc, 6, rng);
    randomize(store, rng, 0.3);
    std::vector<NdArray> rgb, flow;
    for (std::size_t b = 0; b < B; ++b) {
      rgb.push_back(random_clip({2, 3, 16, 16}, rng));
      flow.push_back(random_clip({2, 2, 16, 16}, rng));
    }
    std::vector<const NdArray*> rp{&rgb[0], &rgb[1]}, fp{&flow[0], &flow[1]};
    out.push_back(check_gradients("two_stream_encoder", trainable(store),
                                  [&] { return project(encoder.forward(rp, fp), 34); }, opt));
  }
  return out;
}

std::vector<GradCheckResult> audio_checks(const GradCheckOptions& opt) {
  ParameterStore store;
  Rng rng(41);
  AudioBottleneck ab(store, "ab", 6, 5, rng);
  auto e = random_leaf({3, 6}, rng);
  auto in = trainable(store);
  in.push_back(e);
  return {check_gradients("audio_bottleneck", in, [&] { return project(ab.forward(e), 42); }, opt)};
}

std::vector<GradCheckResult> imd_checks(const GradCheckOptions& opt) {
  std::vector<GradCheckResult> out;
  const std::size_t D = 4, B = 3;
  Rng data(51);
  auto a = random_leaf({B, D}, data), v = random_leaf({B, D}, data);
  {
    ParameterStore store;
    Rng rng(52);
    RelevanceNetwork rn(store, "rn", D, rng);
    auto in = trainable(store);
    in.push_back(a);
    in.push_back(v);
    out.push_back(check_gradients("relevance_network", in, [&] { return project(rn.forward(a, v), 53); }, opt));
  }
  {
    ParameterStore store;
    Rng rng(54);
    GatedFusion fusion(store, "fusion", D, rng);
    const std::vector<double> deltas{0.0, 0.4, 1.0};
    auto in = trainable(store);
    in.push_back(a);
    in.push_back(v);
    out.push_back(check_gradients("gated_fusion", in,
                                  [&] { return project(fusion.forward(a, v, deltas), 55); }, opt));
  }
  {
    ParameterStore store;
    Rng rng(56);
    Classifier cls(store, "cls", D, 5, rng);
    RelevanceNetwork rn(store, "rn", D, rng);
    const std::vector<std::size_t> labels{1, 4, 0};
    const std::vector<double> targets{0.0, 0.5, 1.0};
    const LossConfig cfg{0.7};
    auto in = trainable(store);
    in.push_back(v);
    out.push_back(check_gradients("imd_loss", in, [&] {
      return imd_loss(cls.logits(v), labels, rn.forward(a, v), targets, cfg).total;
    }, opt));
  }
  return out;
}

std::vector<GradCheckResult> model_checks(const GradCheckOptions& opt) {
  LabelSpaceConfig lcfg{3, 6, 8, 0.15, 61};
  const LabelSpace space = gen_label_space(lcfg);
  const Savld dict = build_savld(space.video, space.audio, 2, Metric::kCosine);
  SynthConfig scfg;
  scfg.samples_per_class = 1;
  scfg.frames = 2;
  scfg.height = scfg.width = 16;
  scfg.patch = 8;
  scfg.seed = 62;
  const Dataset ds = gen_dataset(scfg, dict, space.audio);

  ModelConfig mcfg;
  mcfg.clip = ClipSpec{2, 3, 16, 16, 8, 8};
  mcfg.encoder = EncoderConfig{2, 1, 2, 2};
  mcfg.audio_embed_dim = 6;
  mcfg.fusion_dim = 8;
  mcfg.video_classes = dict.size();
  mcfg.audio_labels = space.audio.labels();
  mcfg.audio_input_dim = space.audio.dim();
  mcfg.seed = 63;
  MultimodalModel model(mcfg, space.audio);
  Rng rng(64);
  randomize(model.params(), rng, 0.3);

  std::vector<const MultimodalSample*> batch;
  for (const auto& s : ds) batch.push_back(&s);
  std::vector<const NdArray*> rgb, flow;
  std::vector<const std::vector<double>*> audio;
  std::vector<std::size_t> labels;
  for (const auto* s : batch) {
    rgb.push_back(&s->rgb);
    flow.push_back(&s->flow);
    audio.push_back(&s->audio);
    labels.push_back(s->label);
  }
  const auto first = model.forward(rgb, flow, audio);
  // The gate multipliers are constants of the graph; hold them fixed so the
  // numeric derivative sees the same function.
  std::vector<double> deltas;
  for (const auto& g : first.gates) deltas.push_back(g.delta);
  const auto relevant = savld_audio_indices(dict, space.audio.labels());
  const OverlapConfig ocfg{2, 2, OverlapMethod::kIou};
  std::vector<double> targets;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    targets.push_back(relevance_target(top_ya(first.audio_raw[b].predictions, 2), relevant[labels[b]], ocfg));
  }
  const LossConfig lcfg2{1.0};
  return {check_gradients("tiny_model", trainable(model.params()), [&] {
    auto r = model.forward(rgb, flow, audio, deltas);
    return imd_loss(r.logits, labels, r.rev, targets, lcfg2).total;
  }, opt)};
}

}  // namespace

GradCheckResult check_gradients(std::string name, const std::vector<Tensor>& inputs,
                                const std::function<Tensor()>& loss, const GradCheckOptions& options) {
  GradCheckResult result;
  result.name = std::move(name);
  for (auto t : inputs) t.clear_grad();
  loss().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.size(), 0.0);
    }
  }
  for (auto t : inputs) t.clear_grad();

  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    auto values = t.mutable_data();
    const std::size_t n = values.size();
    const std::size_t stride =
        options.max_entries == 0 || n <= options.max_entries ? 1 : (n + options.max_entries - 1) / options.max_entries;
    for (std::size_t j = 0; j < n; j += stride) {
      const double saved = values[j];
      values[j] = saved + options.step;
      const double up = loss().item();
      values[j] = saved - options.step;
      const double down = loss().item();
      values[j] = saved;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = analytic[i][j];
      const double diff = std::abs(a - numeric);
      const double ratio = diff / (options.atol + options.rtol * std::max(std::abs(a), std::abs(numeric)));
      result.max_abs_diff = std::max(result.max_abs_diff, diff);
      result.worst_ratio = std::max(result.worst_ratio, ratio);
      ++result.checked;
    }
  }
  result.passed = result.worst_ratio <= 1.0;
  return result;
}

std::vector<std::string> grad_check_modules() { return {"tensor", "visual", "audio", "imd", "model"}; }

std::vector<GradCheckResult> run_grad_check(std::string_view module, const GradCheckOptions& options) {
  std::vector<GradCheckResult> out;
  auto append = [&](std::vector<GradCheckResult> r) { out.insert(out.end(), r.begin(), r.end()); };
  const bool all = module == "all";
  bool known = all;
  if (all || module == "tensor") known = true, append(tensor_checks(options));
  if (all || module == "visual") known = true, append(visual_checks(options));
  if (all || module == "audio") known = true, append(audio_checks(options));
  if (all || module == "imd") known = true, append(imd_checks(options));
  if (all || module == "model") known = true, append(model_checks(options));
  if (!known) throw ConfigError("unknown grad-check module '" + std::string(module) + "'");
  return out;
}

}  // namespace modgate
