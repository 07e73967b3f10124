#pragma once

// Small run configurations shared by the slower tests.

#include <string>
#include <utility>
#include <vector>

#include "modgate/harness.hpp"

namespace desk {

inline modgate::RunConfig tiny(std::vector<std::pair<std::string, std::string>> extra = {}) {
  modgate::RunConfig c;
  const std::pair<const char*, const char*> base[] = {
      {"frames", "2"},        {"height", "16"},          {"width", "16"},        {"patch", "8"},
      {"dim", "8"},           {"layers", "2"},           {"st_blocks", "1"},     {"heads", "2"},
      {"fusion_dim", "8"},    {"audio_embed_dim", "8"},  {"video_classes", "4"}, {"audio_classes", "12"},
      {"label_dim", "8"},     {"samples_per_class", "16"}, {"k", "3"},           {"ya", "3"},
      {"epochs", "2"},        {"batch_size", "16"},      {"lr", "0.05"},
  };
  for (const auto& [k, v] : base) c.set(k, v);
  for (const auto& [k, v] : extra) c.set(k, v);
  return c;
}

/// Configuration used for the directional training experiments.
inline modgate::RunConfig bench(std::vector<std::pair<std::string, std::string>> extra = {}) {
  modgate::RunConfig c;
  const std::pair<const char*, const char*> base[] = {
      {"frames", "2"},     {"height", "16"},   {"width", "16"}, {"patch", "8"},  {"dim", "16"},
      {"layers", "2"},     {"st_blocks", "1"}, {"heads", "2"},  {"fusion_dim", "32"},
      {"epochs", "15"},    {"batch_size", "32"}, {"lr", "0.05"}, {"k", "3"},     {"ya", "3"},
  };
  for (const auto& [k, v] : base) c.set(k, v);
  for (const auto& [k, v] : extra) c.set(k, v);
  return c;
}

struct World {
  modgate::RunConfig config;
  modgate::LabelSpace space;
  modgate::Savld dictionary;
  modgate::Experiment data;
};

inline World make_world(const modgate::RunConfig& config) {
  auto space = modgate::load_label_space(config);
  auto dict = modgate::build_savld(space.video, space.audio, config.overlap.k, config.metric);
  auto data = modgate::prepare_experiment(config, dict, space.audio);
  return World{config, std::move(space), std::move(dict), std::move(data)};
}

}  // namespace desk
