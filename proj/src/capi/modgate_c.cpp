#include "modgate_c.h"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <new>
#include <sstream>
#include <string>

#include "modgate/gradcheck.hpp"
#include "modgate/harness.hpp"

struct mg_config {
  modgate::RunConfig value;
};
struct mg_savld {
  modgate::Savld value;
};
struct mg_model {
  std::unique_ptr<modgate::MultimodalModel> value;
};
struct mg_dataset {
  modgate::Dataset value;
};

namespace {

thread_local std::string g_last_error;

mg_status fail(mg_status status, const char* what) {
  g_last_error = what;
  return status;
}

template <typename F>
mg_status guard(F&& body) {
  try {
    g_last_error.clear();
    body();
    return MG_OK;
  } catch (const modgate::NumericError& e) {
    return fail(MG_ERR_NUMERIC, e.what());
  } catch (const modgate::IoError& e) {
    return fail(MG_ERR_IO, e.what());
  } catch (const modgate::FormatError& e) {
    return fail(MG_ERR_FORMAT, e.what());
  } catch (const std::invalid_argument& e) {
    return fail(MG_ERR_USAGE, e.what());
  } catch (const std::out_of_range& e) {
    return fail(MG_ERR_USAGE, e.what());
  } catch (const std::bad_alloc&) {
    return fail(MG_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(MG_ERR_INTERNAL, e.what());
  } catch (...) {
    return fail(MG_ERR_INTERNAL, "unknown error");
  }
}

void need(const void* p, const char* what) {
  if (p == nullptr) throw std::invalid_argument(std::string(what) + " must not be null");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

/// The dictionary's k wins unless the config names one explicitly.
modgate::RunConfig effective_config(const modgate::RunConfig& config, const modgate::Savld& savld) {
  modgate::RunConfig cfg = config;
  if (!cfg.explicit_keys.contains("k")) cfg.overlap.k = savld.k();
  return cfg;
}

}  // namespace

extern "C" {

const char* mg_last_error(void) { return g_last_error.c_str(); }

void mg_string_free(char* s) { std::free(s); }

mg_status mg_config_default(mg_config** out) {
  return guard([&] {
    need(out, "out");
    auto cfg = std::make_unique<mg_config>();
    modgate::apply_seed_env(cfg->value);
    *out = cfg.release();
  });
}

mg_status mg_config_load(const char* path, mg_config** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    auto cfg = std::make_unique<mg_config>(mg_config{modgate::load_run_config(path)});
    *out = cfg.release();
  });
}

mg_status mg_config_set(mg_config* config, const char* key, const char* value) {
  return guard([&] {
    need(config, "config");
    need(key, "key");
    need(value, "value");
    config->value.set(key, value);
  });
}

mg_status mg_config_describe(const mg_config* config, char** out) {
  return guard([&] {
    need(config, "config");
    need(out, "out");
    *out = dup_string(config->value.describe());
  });
}

void mg_config_free(mg_config* config) { delete config; }

mg_status mg_write_embeddings(const mg_config* config, const char* video_path, const char* audio_path) {
  return guard([&] {
    need(config, "config");
    need(video_path, "video_path");
    need(audio_path, "audio_path");
    const auto space = modgate::load_label_space(config->value);
    modgate::save_embeddings(space.video, video_path);
    modgate::save_embeddings(space.audio, audio_path);
  });
}

mg_status mg_savld_build(const char* video_emb, const char* audio_emb, size_t k, const char* metric, mg_savld** out) {
  return guard([&] {
    need(video_emb, "video_emb");
    need(audio_emb, "audio_emb");
    need(metric, "metric");
    need(out, "out");
    const auto m = modgate::parse_metric(metric);
    const auto video = modgate::load_embeddings(video_emb);
    const auto audio = modgate::load_embeddings(audio_emb);
    *out = new mg_savld{modgate::build_savld(video, audio, k, m)};
  });
}

mg_status mg_savld_load(const char* path, mg_savld** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new mg_savld{modgate::parse_savld(std::filesystem::path(path))};
  });
}

mg_status mg_savld_save(const mg_savld* savld, const char* path) {
  return guard([&] {
    need(savld, "savld");
    need(path, "path");
    modgate::serialize_savld(savld->value, path);
  });
}

size_t mg_savld_count(const mg_savld* savld) { return savld ? savld->value.size() : 0; }

size_t mg_savld_k(const mg_savld* savld) { return savld ? savld->value.k() : 0; }

mg_status mg_savld_entry(const mg_savld* savld, size_t i, char** out) {
  return guard([&] {
    need(savld, "savld");
    need(out, "out");
    const auto& e = savld->value.entry(i);
    std::string s = e.video_label + "\t";
    for (std::size_t j = 0; j < e.audio_labels.size(); ++j) s += (j ? "," : "") + e.audio_labels[j];
    *out = dup_string(s);
  });
}

void mg_savld_free(mg_savld* savld) { delete savld; }

mg_status mg_config_resolve(mg_config* config, const mg_savld* savld) {
  return guard([&] {
    need(config, "config");
    need(savld, "savld");
    config->value = effective_config(config->value, savld->value);
  });
}

mg_status mg_relevance_target(const size_t* predicted, size_t ya, const size_t* relevant, size_t k,
                              const char* method, double* out) {
  return guard([&] {
    need(predicted, "predicted");
    need(relevant, "relevant");
    need(method, "method");
    need(out, "out");
    const modgate::OverlapConfig cfg{k, ya, modgate::parse_overlap(method)};
    *out = modgate::relevance_target({predicted, ya}, {relevant, k}, cfg);
  });
}

mg_status mg_train(const mg_config* config, const mg_savld* savld, const char* out_dir, char** report,
                   mg_model** model) {
  return guard([&] {
    need(config, "config");
    need(savld, "savld");
    const auto cfg = effective_config(config->value, savld->value);
    cfg.validate();
    const auto space = modgate::load_label_space(cfg);
    const auto exp = modgate::prepare_experiment(cfg, savld->value, space.audio);
    auto result = modgate::train(cfg, exp.train, exp.val, savld->value, space.audio);
    const std::string text = result.report.to_text();
    if (out_dir != nullptr) {
      const std::filesystem::path dir(out_dir);
      std::error_code ec;
      std::filesystem::create_directories(dir, ec);
      if (ec) throw modgate::IoError("cannot create " + dir.string() + ": " + ec.message());
      modgate::save_checkpoint(*result.model, dir / "model.ckpt");
      std::ofstream rep(dir / "report.txt");
      if (!(rep << text)) throw modgate::IoError("cannot write " + (dir / "report.txt").string());
      modgate::save_dataset(exp.val, dir / "val");
    }
    if (report != nullptr) *report = dup_string(text);
    if (model != nullptr) *model = new mg_model{std::move(result.model)};
  });
}

mg_status mg_model_load(const char* path, mg_model** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new mg_model{modgate::load_checkpoint(path)};
  });
}

mg_status mg_model_save(const mg_model* model, const char* path) {
  return guard([&] {
    need(model, "model");
    need(path, "path");
    modgate::save_checkpoint(*model->value, path);
  });
}

void mg_model_free(mg_model* model) { delete model; }

mg_status mg_dataset_generate(const mg_config* config, const mg_savld* savld, const char* which, mg_dataset** out) {
  return guard([&] {
    need(config, "config");
    need(savld, "savld");
    need(which, "which");
    need(out, "out");
    const std::string part(which);
    if (part != "train" && part != "val" && part != "all") throw std::invalid_argument("which must be train, val or all");
    const auto cfg = effective_config(config->value, savld->value);
    const auto space = modgate::load_label_space(cfg);
    auto exp = modgate::prepare_experiment(cfg, savld->value, space.audio);
    modgate::Dataset data;
    if (part == "train") {
      data = std::move(exp.train);
    } else if (part == "val") {
      data = std::move(exp.val);
    } else {
      data = modgate::gen_dataset(cfg.synth, savld->value, space.audio);
    }
    *out = new mg_dataset{std::move(data)};
  });
}

mg_status mg_dataset_load(const char* dir, mg_dataset** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new mg_dataset{modgate::load_dataset(dir)};
  });
}

mg_status mg_dataset_save(const mg_dataset* data, const char* dir) {
  return guard([&] {
    need(data, "data");
    need(dir, "dir");
    modgate::save_dataset(data->value, dir);
  });
}

size_t mg_dataset_size(const mg_dataset* data) { return data ? data->value.size() : 0; }

void mg_dataset_free(mg_dataset* data) { delete data; }

mg_status mg_evaluate(const mg_model* model, const mg_dataset* data, size_t views_spatial, size_t views_temporal,
                      double* top1, double* top5) {
  return guard([&] {
    need(model, "model");
    need(data, "data");
    need(top1, "top1");
    need(top5, "top5");
    if (views_spatial == 0 || views_temporal == 0) throw std::invalid_argument("views must be at least 1x1");
    modgate::ViewConfig views;
    views.spatial = views_spatial;
    views.temporal = views_temporal;
    const auto acc = modgate::evaluate(*model->value, data->value, views);
    *top1 = acc.top1;
    *top5 = acc.top5;
  });
}

mg_status mg_gate_stats_compute(const mg_model* model, const mg_dataset* data, mg_gate_stats* out) {
  return guard([&] {
    need(model, "model");
    need(data, "data");
    need(out, "out");
    const auto g = modgate::gate_stats(*model->value, data->value);
    out->drop_rate = g.drop_rate;
    out->auc = g.auc;
    out->mean_rev = g.mean_rev;
    for (std::size_t i = 0; i < 10; ++i) out->histogram[i] = g.rev_histogram[i];
  });
}

mg_status mg_grad_check(const char* module, char** report, int* all_passed) {
  return guard([&] {
    need(all_passed, "all_passed");
    const auto results = modgate::run_grad_check(module ? module : "all");
    std::ostringstream os;
    bool ok = true;
    for (const auto& r : results) {
      ok = ok && r.passed;
      os << (r.passed ? "ok  " : "FAIL") << "  " << r.name << "  entries=" << r.checked
         << "  max_abs_diff=" << r.max_abs_diff << "  worst_ratio=" << r.worst_ratio << '\n';
    }
    *all_passed = ok ? 1 : 0;
    if (report != nullptr) *report = dup_string(os.str());
  });
}

mg_status mg_ablate(const mg_config* config, char** table, char** csv) {
  return guard([&] {
    need(config, "config");
    const auto rows = modgate::run_ablation(config->value);
    if (table != nullptr) *table = dup_string(modgate::ablation_table(rows));
    if (csv != nullptr) *csv = dup_string(modgate::ablation_csv(rows));
  });
}

}  // extern "C"
