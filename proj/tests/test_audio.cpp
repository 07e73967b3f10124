#include <doctest.h>

#include <algorithm>

#include "modgate/audio.hpp"
#include "modgate/synth.hpp"
#include "support/finite_diff.hpp"

using namespace modgate;

namespace {

EmbeddingTable prototypes(std::size_t n, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable t(dim);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> v(dim);
    for (auto& x : v) x = rng.normal();
    t.add("a" + std::to_string(i), v);
  }
  return t;
}

Tensor random_rows(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({rows, dim}, v, true);
}

}  // namespace

TEST_CASE("synthetic backbone contract") {
  ParameterStore store;
  const auto protos = prototypes(12, 16, 1);
  SyntheticAudioBackbone bb(store, "bb", protos, 8, 10.0, 99);
  CHECK(bb.input_dim() == 16);
  CHECK(bb.embed_dim() == 8);
  CHECK(bb.label_count() == 12);
  for (const auto& p : store.all()) {
    CHECK(p.frozen);
    CHECK_FALSE(p.tensor.requires_grad());
  }
  Rng rng(2);
  for (std::size_t c = 0; c < 12; ++c) {
    const auto clean = bb.sample(c, 0.0, rng);
    const auto out = bb.forward(clean);
    CHECK(out.embedding.size() == 8);
    const auto best = std::max_element(out.predictions.begin(), out.predictions.end()) - out.predictions.begin();
    CHECK(static_cast<std::size_t>(best) == c);
    for (double p : out.predictions) {
      CHECK(p >= 0.0);
      CHECK(p <= 1.0);
    }
    const auto again = bb.forward(clean);
    CHECK(again.embedding == out.embedding);
    CHECK(again.predictions == out.predictions);
  }
  const std::vector<double> wrong(5, 0.0);
  CHECK_THROWS_AS(bb.forward(wrong), ShapeError);
}

TEST_CASE("relevant samples of the generated label space hit their dictionary entry") {
  const auto space = gen_label_space(LabelSpaceConfig{});
  const auto dict = build_savld(space.video, space.audio, 3, Metric::kCosine);
  const auto relevant = savld_audio_indices(dict, space.audio.labels());
  ParameterStore store;
  SyntheticAudioBackbone bb(store, "bb", space.audio, 32, 10.0, 99);
  SynthConfig cfg;
  cfg.samples_per_class = 100;
  cfg.relevance_rate = 1.0;
  cfg.frames = 1;
  cfg.height = cfg.width = cfg.patch = 8;
  const auto data = gen_dataset(cfg, dict, space.audio);
  std::size_t hits = 0;
  for (const auto& s : data) {
    const auto top = top_ya(bb.forward(s.audio).predictions, 1);
    const auto& entry = relevant[s.label];
    hits += std::find(entry.begin(), entry.end(), top[0]) != entry.end();
  }
  CHECK(static_cast<double>(hits) / static_cast<double>(data.size()) >= 0.95);
}

TEST_CASE("top_ya ordering and ties") {
  const std::vector<double> p{0.9, 0.1, 0.5};
  CHECK(top_ya(p, 2) == std::vector<std::size_t>{0, 2});
  CHECK(top_ya(p, 3) == std::vector<std::size_t>{0, 2, 1});
  const std::vector<double> flat{0.3, 0.3, 0.3, 0.3};
  CHECK(top_ya(flat, 2) == std::vector<std::size_t>{0, 1});
  CHECK_THROWS_AS(top_ya(p, 4), std::out_of_range);
  CHECK_THROWS_AS(top_ya(p, 0), std::out_of_range);

  Rng rng(3);
  std::vector<double> r(20);
  for (auto& x : r) x = std::round(rng.uniform() * 5.0) / 5.0;
  for (std::size_t ya = 1; ya < r.size(); ++ya) {
    auto a = top_ya(r, ya), b = top_ya(r, ya + 1);
    CHECK(std::equal(a.begin(), a.end(), b.begin()));
  }
}

TEST_CASE("audio bottleneck") {
  ParameterStore store;
  Rng rng(4);
  AudioBottleneck ab(store, "ab", 6, 4, rng);
  auto e = random_rows(3, 6, 5);
  CHECK(ab.forward(e).shape() == Shape{3, 4});
  CHECK_THROWS_AS(ab.forward(random_rows(3, 5, 6)), ShapeError);
  for (const auto& p : store.all()) CHECK_FALSE(p.frozen);

  Rng shift(7);
  for (auto& p : store.all()) {
    for (auto& v : p.tensor.mutable_data()) v += 0.2 * shift.normal();
  }
  auto w = random_rows(3, 4, 8).detach();
  std::vector<Tensor> leaves{e};
  for (const auto& p : store.all()) leaves.push_back(p.tensor);
  const auto report = fd::compare(leaves, [&] { return sum(mul(ab.forward(e), w)); });
  CAPTURE(report.describe());
  CHECK(report.ok());

  ab.fc1().zero();
  ab.fc2().zero();
  const auto out = ab.forward(e);
  for (double v : out.data()) CHECK(v == 0.0);
}
