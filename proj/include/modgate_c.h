#ifndef MODGATE_C_H
#define MODGATE_C_H

/* C interface to the modgate library. All handles are opaque; every call that
 * can fail returns an mg_status and leaves a message for mg_last_error().
 * Strings returned through char** are owned by the caller and released with
 * mg_string_free(). */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define MG_API __declspec(dllexport)
#else
#define MG_API __attribute__((visibility("default")))
#endif

typedef enum mg_status {
  MG_OK = 0,
  MG_ERR_USAGE = 1,   /* invalid argument, config or shape */
  MG_ERR_NUMERIC = 2, /* NaN or Inf during training or evaluation */
  MG_ERR_IO = 3,      /* file could not be opened, read or written */
  MG_ERR_FORMAT = 4,  /* malformed file contents */
  MG_ERR_INTERNAL = 5
} mg_status;

typedef struct mg_config mg_config;
typedef struct mg_savld mg_savld;
typedef struct mg_model mg_model;
typedef struct mg_dataset mg_dataset;

typedef struct mg_gate_stats {
  double drop_rate;
  double auc;
  double mean_rev;
  size_t histogram[10];
} mg_gate_stats;

/* Message of the last failed call on this thread ("" if none). */
MG_API const char* mg_last_error(void);
MG_API void mg_string_free(char* s);

/* Run configuration (key=value file). MODALITY_GATE_SEED overrides seed. */
MG_API mg_status mg_config_default(mg_config** out);
MG_API mg_status mg_config_load(const char* path, mg_config** out);
MG_API mg_status mg_config_set(mg_config* config, const char* key, const char* value);
MG_API mg_status mg_config_describe(const mg_config* config, char** out);
MG_API void mg_config_free(mg_config* config);

/* Writes the configured (generated or file-backed) label embeddings. */
MG_API mg_status mg_write_embeddings(const mg_config* config, const char* video_path, const char* audio_path);

/* metric: "euclidean", "manhattan" or "cosine". */
MG_API mg_status mg_savld_build(const char* video_emb, const char* audio_emb, size_t k, const char* metric,
                                mg_savld** out);
MG_API mg_status mg_savld_load(const char* path, mg_savld** out);
MG_API mg_status mg_savld_save(const mg_savld* savld, const char* path);
MG_API size_t mg_savld_count(const mg_savld* savld);
MG_API size_t mg_savld_k(const mg_savld* savld);
/* "video<TAB>audio1,audio2,..." for entry i. */
MG_API mg_status mg_savld_entry(const mg_savld* savld, size_t i, char** out);
MG_API void mg_savld_free(mg_savld* savld);

/* Adopts the dictionary's k unless the config sets k explicitly (the same
 * rule mg_train and mg_dataset_generate apply). */
MG_API mg_status mg_config_resolve(mg_config* config, const mg_savld* savld);

/* Normalized overlap target; method "iou" or "dice". */
MG_API mg_status mg_relevance_target(const size_t* predicted, size_t ya, const size_t* relevant, size_t k,
                                     const char* method, double* out);

/* Generates the synthetic dataset for the config and dictionary and trains.
 * When out_dir is non-null it receives model.ckpt, report.txt and the
 * validation set under val/. report and model may be null. */
MG_API mg_status mg_train(const mg_config* config, const mg_savld* savld, const char* out_dir, char** report,
                          mg_model** model);

MG_API mg_status mg_model_load(const char* path, mg_model** out);
MG_API mg_status mg_model_save(const mg_model* model, const char* path);
MG_API void mg_model_free(mg_model* model);

/* which: "train", "val" or "all". */
MG_API mg_status mg_dataset_generate(const mg_config* config, const mg_savld* savld, const char* which,
                                     mg_dataset** out);
MG_API mg_status mg_dataset_load(const char* dir, mg_dataset** out);
MG_API mg_status mg_dataset_save(const mg_dataset* data, const char* dir);
MG_API size_t mg_dataset_size(const mg_dataset* data);
MG_API void mg_dataset_free(mg_dataset* data);

/* views_spatial x views_temporal seeded views; 1 x 1 is the clip itself. */
MG_API mg_status mg_evaluate(const mg_model* model, const mg_dataset* data, size_t views_spatial,
                             size_t views_temporal, double* top1, double* top5);
MG_API mg_status mg_gate_stats_compute(const mg_model* model, const mg_dataset* data, mg_gate_stats* out);

/* module: "tensor", "visual", "audio", "imd", "model" or "all" (null = all).
 * all_passed is set to 1 when every check is within tolerance. */
MG_API mg_status mg_grad_check(const char* module, char** report, int* all_passed);

MG_API mg_status mg_ablate(const mg_config* config, char** table, char** csv);

#ifdef __cplusplus
}
#endif

#endif /* MODGATE_C_H */
