#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "modgate_c.h"

namespace {

// Exit codes: 0 success, 1 usage, 2 numeric failure, 3 I/O or file format.
int exit_code(mg_status status) {
  switch (status) {
    case MG_OK: return 0;
    case MG_ERR_NUMERIC: return 2;
    case MG_ERR_IO:
    case MG_ERR_FORMAT: return 3;
    default: return 1;
  }
}

struct Failure {
  mg_status status;
};

void check(mg_status status) {
  if (status != MG_OK) {
    std::cerr << "modgate: " << mg_last_error() << '\n';
    throw Failure{status};
  }
}

std::string take(char* s) {
  std::string out = s ? s : "";
  mg_string_free(s);
  return out;
}

bool parse_views(const std::string& text, size_t& spatial, size_t& temporal) {
  const auto x = text.find('x');
  if (x == std::string::npos) return false;
  try {
    spatial = std::stoul(text.substr(0, x));
    temporal = std::stoul(text.substr(x + 1));
  } catch (const std::exception&) {
    return false;
  }
  return spatial > 0 && temporal > 0;
}

template <typename T>
void set_if(mg_config* cfg, const char* key, const std::optional<T>& v) {
  if (!v) return;
  if constexpr (std::is_same_v<T, std::string>) {
    check(mg_config_set(cfg, key, v->c_str()));
  } else {
    std::ostringstream os;
    os.precision(17);
    os << *v;
    check(mg_config_set(cfg, key, os.str().c_str()));
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Audio-visual relevance-gated video classification toolkit", "modgate"};
  app.require_subcommand(1);

  std::string video_emb, audio_emb, savld_out, metric = "cosine";
  std::size_t savld_k = 10;
  auto* build = app.add_subcommand("build-savld", "Build the audio-video label dictionary by k-NN");
  build->add_option("--video-emb", video_emb, "Video label embeddings")->required();
  build->add_option("--audio-emb", audio_emb, "Audio label embeddings")->required();
  build->add_option("--k", savld_k, "Audio labels per video label")->required();
  build->add_option("--metric", metric, "euclidean | manhattan | cosine")
      ->check(CLI::IsMember({"euclidean", "manhattan", "cosine"}));
  build->add_option("--out", savld_out, "Output dictionary file")->required();

  std::string config_path, savld_path, out_dir;
  std::optional<double> alpha, lambda_rn;
  std::optional<std::string> scheme, overlap;
  std::optional<std::size_t> k, ya;
  std::optional<std::uint64_t> seed;
  bool augment = false;
  auto* trn = app.add_subcommand("train", "Train a model on generated synthetic data");
  trn->add_option("--config", config_path, "Run configuration")->required();
  trn->add_option("--alpha", alpha, "Gate threshold");
  trn->add_option("--scheme", scheme, "mask | weight")->check(CLI::IsMember({"mask", "weight"}));
  trn->add_option("--overlap", overlap, "iou | dice")->check(CLI::IsMember({"iou", "dice"}));
  trn->add_option("--k", k, "Dictionary size per video label");
  trn->add_option("--ya", ya, "Top audio predictions compared with the dictionary");
  trn->add_option("--lambda-rn", lambda_rn, "Relevance loss weight");
  trn->add_option("--seed", seed, "Random seed");
  trn->add_flag("--augment", augment, "Intra-class audio pairing each epoch");
  trn->add_option("--savld", savld_path, "Label dictionary")->required();
  trn->add_option("--out-dir", out_dir, "Output directory")->required();

  std::string model_path, data_dir, views = "1x1";
  auto* ev = app.add_subcommand("eval", "Top-1 / top-5 accuracy of a checkpoint");
  ev->add_option("--model", model_path, "Checkpoint")->required();
  ev->add_option("--data", data_dir, "Dataset directory")->required();
  ev->add_option("--views", views, "Spatial x temporal views, e.g. 3x4");

  auto* gs = app.add_subcommand("gate-stats", "Gate drop rate, relevance histogram and AUC");
  gs->add_option("--model", model_path, "Checkpoint")->required();
  gs->add_option("--data", data_dir, "Dataset directory")->required();

  std::string module = "all";
  auto* gc = app.add_subcommand("grad-check", "Finite-difference gradient verification");
  gc->add_option("--module", module, "tensor | visual | audio | imd | model | all")
      ->check(CLI::IsMember({"tensor", "visual", "audio", "imd", "model", "all"}));

  std::string csv_out;
  auto* ab = app.add_subcommand("ablate", "Train over the gate/overlap grid");
  ab->add_option("--config", config_path, "Run configuration")->required();
  ab->add_option("--out", csv_out, "CSV output")->required();

  std::string video_out, audio_out;
  auto* ge = app.add_subcommand("gen-embeddings", "Write the synthetic label embeddings");
  ge->add_option("--config", config_path, "Run configuration (optional)");
  ge->add_option("--video-out", video_out, "Video label embeddings")->required();
  ge->add_option("--audio-out", audio_out, "Audio label embeddings")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  mg_config* cfg = nullptr;
  mg_savld* dict = nullptr;
  mg_model* model = nullptr;
  mg_dataset* data = nullptr;
  int code = 0;
  try {
    if (*build) {
      check(mg_savld_build(video_emb.c_str(), audio_emb.c_str(), savld_k, metric.c_str(), &dict));
      check(mg_savld_save(dict, savld_out.c_str()));
      std::cout << "wrote " << mg_savld_count(dict) << " entries (k=" << mg_savld_k(dict) << ") to " << savld_out
                << '\n';
    } else if (*trn) {
      check(mg_config_load(config_path.c_str(), &cfg));
      set_if(cfg, "alpha", alpha);
      set_if(cfg, "scheme", scheme);
      set_if(cfg, "overlap", overlap);
      set_if(cfg, "k", k);
      set_if(cfg, "ya", ya);
      set_if(cfg, "lambda_rn", lambda_rn);
      set_if(cfg, "seed", seed);
      if (augment) check(mg_config_set(cfg, "augment", "1"));
      check(mg_savld_load(savld_path.c_str(), &dict));
      check(mg_config_resolve(cfg, dict));
      char* desc = nullptr;
      check(mg_config_describe(cfg, &desc));
      std::cerr << take(desc) << '\n';
      char* report = nullptr;
      check(mg_train(cfg, dict, out_dir.c_str(), &report, nullptr));
      std::cout << take(report);
    } else if (*ev) {
      std::size_t s = 1, t = 1;
      if (!parse_views(views, s, t)) {
        std::cerr << "modgate: --views must look like SxT\n";
        return 1;
      }
      check(mg_model_load(model_path.c_str(), &model));
      check(mg_dataset_load(data_dir.c_str(), &data));
      double top1 = 0, top5 = 0;
      check(mg_evaluate(model, data, s, t, &top1, &top5));
      std::printf("samples=%zu views=%zux%zu top1=%.4f top5=%.4f\n", mg_dataset_size(data), s, t, top1, top5);
    } else if (*gs) {
      check(mg_model_load(model_path.c_str(), &model));
      check(mg_dataset_load(data_dir.c_str(), &data));
      mg_gate_stats g{};
      check(mg_gate_stats_compute(model, data, &g));
      std::printf("drop_rate=%.4f auc=%.4f mean_rev=%.4f\n", g.drop_rate, g.auc, g.mean_rev);
      for (int i = 0; i < 10; ++i) {
        std::printf("rev[%.1f,%.1f%c %zu\n", i / 10.0, (i + 1) / 10.0, i == 9 ? ']' : ')', g.histogram[i]);
      }
    } else if (*gc) {
      char* report = nullptr;
      int ok = 0;
      check(mg_grad_check(module.c_str(), &report, &ok));
      std::cout << take(report);
      if (!ok) {
        std::cerr << "modgate: gradient check failed\n";
        code = 2;
      }
    } else if (*ab) {
      check(mg_config_load(config_path.c_str(), &cfg));
      char* table = nullptr;
      char* csv = nullptr;
      check(mg_ablate(cfg, &table, &csv));
      std::cout << take(table);
      const std::string body = take(csv);
      std::FILE* f = std::fopen(csv_out.c_str(), "wb");
      if (f == nullptr || std::fwrite(body.data(), 1, body.size(), f) != body.size()) {
        if (f) std::fclose(f);
        std::cerr << "modgate: cannot write " << csv_out << '\n';
        code = 3;
      } else {
        std::fclose(f);
      }
    } else if (*ge) {
      check(config_path.empty() ? mg_config_default(&cfg) : mg_config_load(config_path.c_str(), &cfg));
      check(mg_write_embeddings(cfg, video_out.c_str(), audio_out.c_str()));
    }
  } catch (const Failure& f) {
    code = exit_code(f.status);
  }
  mg_config_free(cfg);
  mg_savld_free(dict);
  mg_model_free(model);
  mg_dataset_free(data);
  return code;
}
