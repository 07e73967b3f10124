#include <doctest.h>

#include <cmath>

#include "modgate/visual.hpp"
#include "support/finite_diff.hpp"

using namespace modgate;

namespace {

NdArray random_clip(Shape shape, Rng& rng) {
  NdArray a(std::move(shape));
  for (auto& x : a.data) x = rng.normal();
  return a;
}

Tensor random_rows(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({rows, dim}, v, true);
}

std::vector<double> row(const Tensor& t, std::size_t r) {
  const std::size_t d = t.dim(1);
  return {t.data().begin() + static_cast<std::ptrdiff_t>(r * d), t.data().begin() + static_cast<std::ptrdiff_t>((r + 1) * d)};
}

// Plain-loop reference pieces for hand-evaluated block outputs.
std::vector<double> ref_layer_norm(const std::vector<double>& x, const Parameter& g, const Parameter& b) {
  double mu = 0, var = 0;
  for (double v : x) mu += v;
  mu /= static_cast<double>(x.size());
  for (double v : x) var += (v - mu) * (v - mu);
  var /= static_cast<double>(x.size());
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * g.tensor.data()[i] + b.tensor.data()[i];
  }
  return out;
}

std::vector<double> ref_linear(const std::vector<double>& x, const Parameter& w, const Parameter& b,
                               std::size_t col0 = 0, std::size_t cols = 0) {
  const std::size_t out_w = w.tensor.dim(1);
  if (cols == 0) cols = out_w;
  std::vector<double> out(cols, 0.0);
  for (std::size_t o = 0; o < cols; ++o) {
    double s = b.tensor.data()[col0 + o];
    for (std::size_t i = 0; i < x.size(); ++i) s += x[i] * w.tensor.data()[i * out_w + col0 + o];
    out[o] = s;
  }
  return out;
}

const Parameter& P(const ParameterStore& s, const std::string& name) {
  const auto* p = s.find(name);
  REQUIRE(p != nullptr);
  return *p;
}

void randomize(ParameterStore& store, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& p : store.all()) {
    for (auto& v : p.tensor.mutable_data()) v += scale * rng.normal();
  }
}

}  // namespace

TEST_CASE("clip geometry") {
  ClipSpec spec{2, 3, 32, 32, 16, 8};
  CHECK(spec.patches_per_frame() == 4);
  CHECK(spec.seq_len() == 9);
  CHECK_THROWS_AS((ClipSpec{2, 3, 30, 32, 16, 8}.validate()), ConfigError);
  CHECK_THROWS_AS((EncoderConfig{4, 5, 2, 2}.validate(8)), ConfigError);
  CHECK_THROWS_AS((EncoderConfig{4, 1, 3, 2}.validate(8)), ConfigError);
}

TEST_CASE("encoder presets") {
  CHECK(EncoderConfig::preset("small").layers == 8);
  CHECK(EncoderConfig::preset("small").st_blocks == 1);
  CHECK(EncoderConfig::preset("base").layers == 12);
  CHECK(EncoderConfig::preset("base").st_blocks == 2);
  CHECK(EncoderConfig::preset("large").layers == 24);
  CHECK(EncoderConfig::preset("large").st_blocks == 4);
  CHECK_THROWS(EncoderConfig::preset("huge"));
}

TEST_CASE("tokenize shapes and zero input") {
  ParameterStore store;
  Rng rng(1);
  ClipSpec spec{2, 3, 32, 32, 16, 8};
  StreamEncoder enc(store, "s", spec, EncoderConfig{2, 1, 2, 2}, rng);
  NdArray zero(spec.clip_shape());
  const NdArray* clips[] = {&zero};
  auto grid = enc.tokenize(clips);
  CHECK(grid.rows.shape() == Shape{9, 8});
  CHECK(grid.seq_len() == 9);
  for (std::size_t r = 0; r < 8; ++r) {
    for (double v : row(grid.rows, r)) CHECK(v == 0.0);
  }
  CHECK(row(grid.rows, grid.cls_row(0)) == std::vector<double>(enc.class_token().data().begin(),
                                                               enc.class_token().data().end()));
  NdArray wrong({2, 3, 16, 16});
  const NdArray* bad[] = {&wrong};
  CHECK_THROWS_AS(enc.tokenize(bad), ShapeError);
}

TEST_CASE("swapping frames swaps token rows") {
  ParameterStore store;
  Rng rng(2);
  ClipSpec spec{2, 3, 16, 16, 8, 8};
  StreamEncoder enc(store, "s", spec, EncoderConfig{2, 1, 2, 2}, rng);
  auto clip = random_clip(spec.clip_shape(), rng);
  NdArray swapped = clip;
  const std::size_t frame = 3 * 16 * 16;
  std::copy_n(clip.data.begin(), frame, swapped.data.begin() + frame);
  std::copy_n(clip.data.begin() + frame, frame, swapped.data.begin());
  const NdArray* a[] = {&clip};
  const NdArray* b[] = {&swapped};
  auto ga = enc.tokenize(a), gb = enc.tokenize(b);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(row(ga.rows, ga.patch_row(0, 0, i)) == row(gb.rows, gb.patch_row(0, 1, i)));
    CHECK(row(ga.rows, ga.patch_row(0, 1, i)) == row(gb.rows, gb.patch_row(0, 0, i)));
  }
}

TEST_CASE("blocks with zeroed output projections are identities") {
  const EncoderConfig cfg{2, 1, 2, 2};
  const std::size_t B = 2, T = 3, N = 4, D = 8, R = B * T * N + B;
  const auto sl = spatial_layout(B, T, N);
  const auto tl = temporal_layout(B, T, N);
  std::vector<double> mask(R, 1.0);
  for (std::size_t b = 0; b < B; ++b) mask[B * T * N + b] = 0.0;
  ParameterStore store;
  Rng rng(3);
  SpatialBlock sb(store, "sb", D, cfg, rng);
  SpatioTemporalBlock st(store, "st", D, cfg, rng);
  auto z = random_rows(R, D, 4);
  CHECK(sb.forward(z, sl).shape() == z.shape());
  CHECK(st.forward(z, sl, tl, mask).shape() == z.shape());
  CHECK_FALSE(sb.forward(z, sl).to_array() == z.to_array());
  sb.zero_output_projections();
  st.zero_output_projections();
  CHECK(sb.forward(z, sl).to_array() == z.to_array());
  CHECK(st.forward(z, sl, tl, mask).to_array() == z.to_array());
}

TEST_CASE("single-token spatial block matches a hand evaluation") {
  const std::size_t D = 4;
  ParameterStore store;
  Rng rng(5);
  SpatialBlock sb(store, "b", D, EncoderConfig{1, 1, 1, 2}, rng);
  randomize(store, 6, 0.5);
  auto z = random_rows(2, D, 7);
  auto out = sb.forward(z, spatial_layout(1, 1, 1, false));

  const auto x = row(z, 0);
  // Attention to a single key has weight 1: output is the value projection.
  const auto v = ref_linear(ref_layer_norm(x, P(store, "b.ln_attn.gamma"), P(store, "b.ln_attn.beta")),
                            P(store, "b.msa.qkv.weight"), P(store, "b.msa.qkv.bias"), 2 * D, D);
  auto a = ref_linear(v, P(store, "b.msa.proj.weight"), P(store, "b.msa.proj.bias"));
  for (std::size_t i = 0; i < D; ++i) a[i] += x[i];
  auto h = ref_linear(ref_layer_norm(a, P(store, "b.ln_mlp.gamma"), P(store, "b.ln_mlp.beta")),
                      P(store, "b.mlp.fc1.weight"), P(store, "b.mlp.fc1.bias"));
  for (auto& e : h) e = std::max(0.0, e);
  auto m = ref_linear(h, P(store, "b.mlp.fc2.weight"), P(store, "b.mlp.fc2.bias"));
  const auto got = row(out, 0);
  for (std::size_t i = 0; i < D; ++i) CHECK(got[i] == doctest::Approx(a[i] + m[i]).epsilon(1e-12));
}

TEST_CASE("one-frame temporal stage matches a hand evaluation") {
  const std::size_t D = 4;
  ParameterStore store;
  Rng rng(8);
  SpatioTemporalBlock st(store, "b", D, EncoderConfig{1, 1, 2, 2}, rng);
  randomize(store, 9, 0.5);
  auto z = random_rows(2, D, 10);
  const std::vector<double> mask{1.0, 0.0};
  auto out = st.temporal_stage(z, temporal_layout(1, 1, 1), mask);
  const auto x = row(z, 0);
  const auto v = ref_linear(ref_layer_norm(x, P(store, "b.ln_time.gamma"), P(store, "b.ln_time.beta")),
                            P(store, "b.msa_time.qkv.weight"), P(store, "b.msa_time.qkv.bias"), 2 * D, D);
  const auto a = ref_linear(v, P(store, "b.msa_time.proj.weight"), P(store, "b.msa_time.proj.bias"));
  const auto l = ref_linear(a, P(store, "b.temporal_fc.weight"), P(store, "b.temporal_fc.bias"));
  const auto got = row(out, 0);
  for (std::size_t i = 0; i < D; ++i) CHECK(got[i] == doctest::Approx(x[i] + l[i]).epsilon(1e-12));
  CHECK(row(out, 1) == row(z, 1));
}

TEST_CASE("spatial attention keeps frames apart") {
  const std::size_t T = 3, N = 4, D = 8, R = T * N + 1;
  ParameterStore store;
  Rng rng(11);
  SpatialBlock sb(store, "b", D, EncoderConfig{1, 1, 2, 2}, rng);
  randomize(store, 12, 0.3);
  const auto layout = spatial_layout(1, T, N, false);
  auto z = random_rows(R, D, 13);
  auto base = sb.forward(z, layout);
  auto changed_in = z.to_array();
  for (std::size_t i = 0; i < N; ++i) changed_in.data[(1 * N + i) * D] += 1.0;  // frame 1
  auto changed = sb.forward(Tensor::from(changed_in), layout);
  for (std::size_t j : {0u, 2u}) {
    for (std::size_t i = 0; i < N; ++i) CHECK(row(changed, j * N + i) == row(base, j * N + i));
  }
  CHECK_FALSE(row(changed, N) == row(base, N));
}

TEST_CASE("temporal stage keeps spatial sites apart") {
  const std::size_t B = 1, T = 3, N = 4, D = 8, R = T * N + 1;
  ParameterStore store;
  Rng rng(14);
  SpatioTemporalBlock st(store, "b", D, EncoderConfig{1, 1, 2, 2}, rng);
  randomize(store, 15, 0.3);
  std::vector<double> mask(R, 1.0);
  mask[R - 1] = 0.0;
  const auto layout = temporal_layout(B, T, N);
  auto z = random_rows(R, D, 16);
  auto base = st.temporal_stage(z, layout, mask);
  auto changed_in = z.to_array();
  changed_in.data[(0 * N + 2) * D + 1] += 1.0;  // site 2 of frame 0
  auto changed = st.temporal_stage(Tensor::from(changed_in), layout, mask);
  for (std::size_t j = 0; j < T; ++j) {
    for (std::size_t i = 0; i < N; ++i) {
      if (i == 2) continue;
      CHECK(row(changed, j * N + i) == row(base, j * N + i));
    }
  }
  CHECK_FALSE(row(changed, 1 * N + 2) == row(base, 1 * N + 2));
}

TEST_CASE("encode is deterministic under seed") {
  ClipSpec spec{2, 3, 16, 16, 8, 8};
  const EncoderConfig cfg{2, 1, 2, 2};
  Rng data(17);
  auto clip = random_clip(spec.clip_shape(), data);
  const NdArray* clips[] = {&clip};
  auto make = [&](std::uint64_t seed) {
    ParameterStore store;
    Rng rng(seed);
    StreamEncoder enc(store, "s", spec, cfg, rng);
    return enc.encode(clips).to_array();
  };
  CHECK(make(1) == make(1));
  CHECK_FALSE(make(1) == make(2));
}

TEST_CASE("encode with identity blocks is the normalized class token") {
  ParameterStore store;
  Rng rng(18);
  ClipSpec spec{2, 3, 16, 16, 8, 8};
  StreamEncoder enc(store, "s", spec, EncoderConfig{3, 2, 2, 2}, rng);
  for (auto& b : enc.spatial_blocks()) b.zero_output_projections();
  for (auto& b : enc.st_blocks()) b.zero_output_projections();
  for (auto& v : enc.positional().mutable_data()) v = rng.normal();
  auto clip = random_clip(spec.clip_shape(), rng);
  const NdArray* clips[] = {&clip};
  auto out = enc.encode(clips);
  std::vector<double> c(8);
  for (std::size_t i = 0; i < 8; ++i) c[i] = enc.class_token().data()[i] + enc.positional().data()[i];
  double mu = 0, var = 0;
  for (double v : c) mu += v / 8.0;
  for (double v : c) var += (v - mu) * (v - mu) / 8.0;
  for (std::size_t i = 0; i < 8; ++i) {
    CHECK(out.data()[i] == doctest::Approx((c[i] - mu) / std::sqrt(var + 1e-5)).epsilon(1e-12));
  }
}

TEST_CASE("stream encoder gradients match finite differences") {
  ParameterStore store;
  Rng rng(19);
  ClipSpec spec{2, 3, 16, 16, 8, 8};
  StreamEncoder enc(store, "s", spec, EncoderConfig{2, 1, 2, 2}, rng);
  randomize(store, 20, 0.3);
  auto c1 = random_clip(spec.clip_shape(), rng), c2 = random_clip(spec.clip_shape(), rng);
  const NdArray* clips[] = {&c1, &c2};
  auto w = random_rows(2, 8, 21).detach();
  std::vector<Tensor> leaves;
  for (const auto& p : store.all()) leaves.push_back(p.tensor);
  const auto report = fd::compare(leaves, [&] { return sum(mul(enc.encode(clips), w)); });
  CAPTURE(report.describe());
  CHECK(report.ok());
}

TEST_CASE("stream fusion") {
  ParameterStore store;
  Rng rng(22);
  StreamFusion fusion(store, "f", 4, 6, rng);
  auto a = random_rows(3, 4, 23), b = random_rows(3, 4, 24);
  CHECK(fusion.forward(a, b).shape() == Shape{3, 6});
  CHECK_THROWS_AS(fusion.forward(a, random_rows(3, 5, 25)), ShapeError);

  auto w = random_rows(3, 6, 26).detach();
  randomize(store, 27, 0.2);
  std::vector<Tensor> leaves{a, b};
  for (const auto& p : store.all()) leaves.push_back(p.tensor);
  const auto report = fd::compare(leaves, [&] { return sum(mul(fusion.forward(a, b), w)); });
  CAPTURE(report.describe());
  CHECK(report.ok());

  fusion.fc1().zero();
  fusion.fc2().zero();
  const auto zeroed = fusion.forward(a, b);
  for (double v : zeroed.data()) CHECK(v == 0.0);
}

TEST_CASE("two-stream encoder output width") {
  ParameterStore store;
  Rng rng(28);
  ClipSpec spec{2, 3, 16, 16, 8, 8};
  TwoStreamEncoder enc(store, "v", spec, EncoderConfig{2, 1, 2, 2}, 5, rng);
  auto rgb = random_clip({2, 3, 16, 16}, rng);
  auto flow = random_clip({2, 2, 16, 16}, rng);
  const NdArray* r[] = {&rgb};
  const NdArray* f[] = {&flow};
  CHECK(enc.forward(r, f).shape() == Shape{1, 5});
  CHECK_THROWS_AS(enc.forward(f, r), ShapeError);
}
