#include <doctest.h>

#include <cmath>

#include "modgate/imd.hpp"
#include "support/finite_diff.hpp"

using namespace modgate;

namespace {

Tensor random_rows(std::size_t rows, std::size_t dim, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * dim);
  for (auto& x : v) x = rng.normal();
  return Tensor::from({rows, dim}, v, true);
}

void jitter(ParameterStore& store, std::uint64_t seed, double scale) {
  Rng rng(seed);
  for (auto& p : store.all()) {
    for (auto& v : p.tensor.mutable_data()) v += scale * rng.normal();
  }
}

std::vector<Tensor> leaves_of(const ParameterStore& store, std::vector<Tensor> extra) {
  for (const auto& p : store.all()) extra.push_back(p.tensor);
  return extra;
}

}  // namespace

TEST_CASE("gate decisions") {
  const GateConfig mask{0.25, GateScheme::kMask}, weight{0.25, GateScheme::kWeight};
  auto d = gate(0.1, mask);
  CHECK(d.delta == 0.0);
  CHECK(d.dropped);
  d = gate(0.7, mask);
  CHECK(d.delta == 0.7);
  CHECK_FALSE(d.dropped);
  d = gate(0.1, weight);
  CHECK(d.delta == 0.1);
  CHECK_FALSE(d.dropped);
  CHECK(gate(0.25, mask).delta == 0.25);
  CHECK_THROWS_AS((GateConfig{1.5, GateScheme::kMask}.validate()), ConfigError);
}

TEST_CASE("gate monotonicity in alpha and the alpha zero case") {
  Rng rng(1);
  for (int i = 0; i < 200; ++i) {
    const double rev = rng.uniform();
    bool was_dropped = false;
    for (double alpha = 0.0; alpha <= 1.0; alpha += 0.05) {
      const bool dropped = gate(rev, {alpha, GateScheme::kMask}).dropped;
      CHECK((!was_dropped || dropped));
      was_dropped = dropped;
    }
    const auto m = gate(rev, {0.0, GateScheme::kMask}), w = gate(rev, {0.0, GateScheme::kWeight});
    CHECK(m.delta == w.delta);
    CHECK(m.dropped == w.dropped);
  }
}

TEST_CASE("relevance network") {
  ParameterStore store;
  Rng rng(2);
  RelevanceNetwork rn(store, "rn", 4, rng);
  auto a = random_rows(5, 4, 3), v = random_rows(5, 4, 4);
  auto rev = rn.forward(a, v);
  CHECK(rev.shape() == Shape{5});
  for (double r : rev.data()) {
    CHECK(r > 0.0);
    CHECK(r < 1.0);
  }
  CHECK_THROWS_AS(rn.forward(a, random_rows(5, 3, 5)), ShapeError);

  jitter(store, 6, 0.2);
  auto w = random_rows(1, 5, 7).detach();
  const auto report = fd::compare(leaves_of(store, {a, v}), [&] {
    return sum(mul(reshape(rn.forward(a, v), {1, 5}), w));
  });
  CAPTURE(report.describe());
  CHECK(report.ok());

  rn.mlp().fc1().zero();
  rn.mlp().fc2().zero();
  rn.head().zero();
  const auto half = rn.forward(a, v);
  for (double r : half.data()) CHECK(r == 0.5);
}

TEST_CASE("gated fusion") {
  ParameterStore store;
  Rng rng(8);
  GatedFusion fusion(store, "f", 4, rng);
  auto a = random_rows(3, 4, 9), v = random_rows(3, 4, 10);
  const std::vector<double> zeros(3, 0.0), ones(3, 1.0);
  auto zero_audio = Tensor::zeros({3, 4});
  CHECK(fusion.forward(a, v, zeros).to_array() == fusion.forward(zero_audio, v, ones).to_array());
  CHECK(fusion.forward(a, v, zeros).shape() == Shape{3, 4});

  jitter(store, 11, 0.2);
  const std::vector<double> deltas{0.0, 0.3, 1.0};
  auto w = random_rows(3, 4, 12).detach();
  const auto report = fd::compare(leaves_of(store, {a, v}), [&] { return sum(mul(fusion.forward(a, v, deltas), w)); });
  CAPTURE(report.describe());
  CHECK(report.ok());
}

TEST_CASE("classifier") {
  ParameterStore store;
  Rng rng(13);
  Classifier cls(store, "c", 4, 5, rng);
  auto z = random_rows(3, 4, 14);
  auto p = cls.probabilities(z);
  for (std::size_t r = 0; r < 3; ++r) {
    double s = 0;
    for (std::size_t c = 0; c < 5; ++c) s += p.data()[r * 5 + c];
    CHECK(std::abs(s - 1.0) < 1e-12);
  }
  auto logits = cls.logits(z).to_array();
  auto shifted = logits;
  for (auto& x : shifted.data) x += 3.7;
  auto pa = softmax(Tensor::from(logits), 1).to_array(), pb = softmax(Tensor::from(shifted), 1).to_array();
  for (std::size_t r = 0; r < 3; ++r) {
    auto arg = [&](const NdArray& m) {
      return std::max_element(m.data.begin() + static_cast<std::ptrdiff_t>(r * 5),
                              m.data.begin() + static_cast<std::ptrdiff_t>(r * 5 + 5)) - m.data.begin();
    };
    CHECK(arg(pa) == arg(pb));
  }
  cls.mlp().fc1().zero();
  cls.mlp().fc2().zero();
  const auto uniform = cls.probabilities(z);
  for (double v : uniform.data()) CHECK(v == doctest::Approx(0.2).epsilon(1e-15));
  CHECK_THROWS(Classifier(store, "c1", 4, 1, rng));
}

TEST_CASE("imd_loss values") {
  const std::vector<std::size_t> label{2};
  const std::vector<double> half{0.5};
  auto uniform = Tensor::zeros({1, 4});
  auto rev = Tensor::from({1}, {0.5});
  const auto l = imd_loss(uniform, label, rev, half, {1.0});
  CHECK(l.total.item() == doctest::Approx(std::log(4.0) + std::log(2.0)).epsilon(1e-14));
  CHECK(l.total.item() == doctest::Approx(2.0794).epsilon(1e-4));

  const auto pure = imd_loss(uniform, label, rev, half, {0.0});
  CHECK(pure.total.item() == doctest::Approx(std::log(4.0)));
  CHECK_FALSE(pure.relevance.defined());

  auto confident = Tensor::from({1, 4}, {0, 0, 60, 0});
  const std::vector<double> one{1.0};
  CHECK(imd_loss(confident, label, Tensor::from({1}, {1.0}), one, {1.0}).total.item() < 1e-6);

  const std::vector<double> bad{1.2};
  CHECK_THROWS_AS(imd_loss(uniform, label, rev, bad, {0.0}), std::invalid_argument);
  const std::vector<std::size_t> out_of_range{4};
  CHECK_THROWS_AS(imd_loss(uniform, out_of_range, rev, half, {1.0}), std::out_of_range);
  CHECK_THROWS_AS(LossConfig{-1.0}.validate(), ConfigError);
}

TEST_CASE("mask-dropped batch leaves audio-side inputs without classification gradient") {
  ParameterStore store;
  Rng rng(15);
  GatedFusion fusion(store, "f", 4, rng);
  Classifier cls(store, "c", 4, 3, rng);
  auto a = random_rows(3, 4, 16), v = random_rows(3, 4, 17);
  const std::vector<std::size_t> labels{0, 1, 2};
  const std::vector<double> zeros(3, 0.0), weights{0.1, 0.2, 0.15};
  ce_loss(cls.logits(fusion.forward(a, v, zeros)), labels).backward();
  for (double g : a.grad()) CHECK(g == 0.0);
  a.clear_grad();
  ce_loss(cls.logits(fusion.forward(a, v, weights)), labels).backward();
  bool any = false;
  for (double g : a.grad()) any = any || g != 0.0;
  CHECK(any);
}
