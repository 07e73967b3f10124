#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>

#include "modgate/model.hpp"
#include "support/desk.hpp"

using namespace modgate;

namespace {

std::filesystem::path temp_path(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "modgate_test_model";
  std::filesystem::create_directories(dir);
  return dir / name;
}

std::vector<const MultimodalSample*> first(const Dataset& d, std::size_t n) {
  std::vector<const MultimodalSample*> out;
  for (std::size_t i = 0; i < n && i < d.size(); ++i) out.push_back(&d[i]);
  return out;
}

double param_sum_abs_grad(const ParameterStore& store, const std::string& prefix) {
  double s = 0.0;
  for (const auto& p : store.all()) {
    if (p.name.rfind(prefix, 0) != 0) continue;
    if (!p.tensor.has_grad()) continue;
    for (double g : p.tensor.grad()) s += std::abs(g);
  }
  return s;
}

}  // namespace

TEST_CASE("model forward shapes and gate bookkeeping") {
  auto w = desk::make_world(desk::tiny());
  MultimodalModel model(resolve_model_config(w.config, w.dictionary, w.space.audio), w.space.audio);
  auto batch = first(w.data.train, 5);
  auto r = model.forward(batch);
  CHECK(r.visual.shape() == Shape{5, 8});
  CHECK(r.audio.shape() == Shape{5, 8});
  CHECK(r.rev.shape() == Shape{5});
  CHECK(r.logits.shape() == Shape{5, 4});
  REQUIRE(r.gates.size() == 5);
  for (std::size_t b = 0; b < 5; ++b) {
    CHECK(r.gates[b].rev == r.rev.data()[b]);
    CHECK(r.gates[b].rev > 0.0);
    CHECK(r.gates[b].rev < 1.0);
  }
}

TEST_CASE("fusion modes fix delta and freeze the relevance network") {
  auto w = desk::make_world(desk::tiny());
  for (const char* mode : {"late-concat", "visual-only"}) {
    auto cfg = desk::tiny({{"fusion", mode}});
    MultimodalModel model(resolve_model_config(cfg, w.dictionary, w.space.audio), w.space.audio);
    auto r = model.forward(first(w.data.train, 6));
    for (const auto& g : r.gates) CHECK(g.delta == (std::string(mode) == "late-concat" ? 1.0 : 0.0));
    for (const auto& p : model.params().all()) {
      if (p.name.rfind("imd.relevance", 0) == 0) CHECK(p.frozen);
    }
  }
  CHECK_THROWS_AS(parse_fusion("early"), ConfigError);
}

TEST_CASE("mask scheme gives the bottleneck no classification gradient on a dropped batch") {
  auto w = desk::make_world(desk::tiny({{"alpha", "1"}, {"scheme", "mask"}}));
  MultimodalModel model(resolve_model_config(w.config, w.dictionary, w.space.audio), w.space.audio);
  auto batch = first(w.data.train, 8);
  auto r = model.forward(batch);
  for (const auto& g : r.gates) REQUIRE(g.delta == 0.0);
  std::vector<std::size_t> labels;
  for (auto* s : batch) labels.push_back(s->label);
  ce_loss(r.logits, labels).backward();
  CHECK(param_sum_abs_grad(model.params(), "audio.bottleneck") == 0.0);
  CHECK(param_sum_abs_grad(model.params(), "visual") > 0.0);

  auto wcfg = desk::tiny({{"alpha", "1"}, {"scheme", "weight"}});
  MultimodalModel weighted(resolve_model_config(wcfg, w.dictionary, w.space.audio), w.space.audio);
  auto rw = weighted.forward(batch);
  ce_loss(rw.logits, labels).backward();
  CHECK(param_sum_abs_grad(weighted.params(), "audio.bottleneck") > 0.0);
}

TEST_CASE("fixed deltas override the gate but keep rev") {
  auto w = desk::make_world(desk::tiny());
  MultimodalModel model(resolve_model_config(w.config, w.dictionary, w.space.audio), w.space.audio);
  auto batch = first(w.data.train, 3);
  std::vector<const NdArray*> rgb, flow;
  std::vector<const std::vector<double>*> audio;
  for (auto* s : batch) {
    rgb.push_back(&s->rgb);
    flow.push_back(&s->flow);
    audio.push_back(&s->audio);
  }
  const std::vector<double> deltas{0.0, 0.25, 1.0};
  auto r = model.forward(rgb, flow, audio, deltas);
  auto plain = model.forward(batch);
  for (std::size_t b = 0; b < 3; ++b) {
    CHECK(r.gates[b].delta == deltas[b]);
    CHECK(r.gates[b].dropped == (deltas[b] == 0.0));
    CHECK(r.gates[b].rev == plain.gates[b].rev);
  }
  const std::vector<double> wrong{1.0};
  CHECK_THROWS(model.forward(rgb, flow, audio, wrong));
}

TEST_CASE("model config map round trip") {
  auto w = desk::make_world(desk::tiny({{"alpha", "0.3"}, {"scheme", "weight"}, {"fusion", "late-concat"}}));
  auto cfg = resolve_model_config(w.config, w.dictionary, w.space.audio);
  auto back = ModelConfig::from_map(cfg.to_map());
  CHECK(back.to_map() == cfg.to_map());
  CHECK(back.gate.alpha == 0.3);
  CHECK(back.gate.scheme == GateScheme::kWeight);
  CHECK(back.fusion == FusionMode::kLateConcat);
  CHECK(back.audio_labels == cfg.audio_labels);
}

TEST_CASE("checkpoint round trip is bit exact") {
  auto w = desk::make_world(desk::tiny());
  auto trained = train(w.config, w.data.train, w.data.val, w.dictionary, w.space.audio);
  const auto path = temp_path("round.ckpt");
  save_checkpoint(*trained.model, path);
  auto loaded = load_checkpoint(path);
  REQUIRE(loaded->params().size() == trained.model->params().size());
  for (std::size_t i = 0; i < loaded->params().size(); ++i) {
    const auto& a = trained.model->params().all()[i];
    const auto& b = loaded->params().all()[i];
    CHECK(a.name == b.name);
    CHECK(a.frozen == b.frozen);
    auto da = a.tensor.data();
    auto db = b.tensor.data();
    CHECK(std::equal(da.begin(), da.end(), db.begin(), db.end()));
  }
  auto batch = first(w.data.val, 4);
  auto la = trained.model->forward(batch).logits.to_array();
  auto lb = loaded->forward(batch).logits.to_array();
  CHECK(la.data == lb.data);
}

TEST_CASE("checkpoint loading rejects bad files") {
  CHECK_THROWS_AS(load_checkpoint(temp_path("missing.ckpt")), IoError);
  {
    std::ofstream out(temp_path("junk.ckpt"), std::ios::binary);
    out << "NOTACKPTxxxxxxxx";
  }
  CHECK_THROWS_AS(load_checkpoint(temp_path("junk.ckpt")), FormatError);

  auto w = desk::make_world(desk::tiny());
  MultimodalModel model(resolve_model_config(w.config, w.dictionary, w.space.audio), w.space.audio);
  const auto good = temp_path("good.ckpt");
  save_checkpoint(model, good);
  const auto size = std::filesystem::file_size(good);
  std::filesystem::copy_file(good, temp_path("cut.ckpt"), std::filesystem::copy_options::overwrite_existing);
  std::filesystem::resize_file(temp_path("cut.ckpt"), size / 2);
  CHECK_THROWS_AS(load_checkpoint(temp_path("cut.ckpt")), FormatError);
}
