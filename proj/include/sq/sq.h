/*
 * C interface to the self-questioning VQA engine.
 *
 * All objects are opaque handles created and released by the library.
 * Functions return sq_status; on failure a message describing the error is
 * available from sq_last_error() on the same thread until the next call.
 * Strings returned through char** out-parameters are owned by the caller and
 * must be released with sq_free().
 */
#ifndef SQ_SQ_H
#define SQ_SQ_H

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define SQ_API __declspec(dllexport)
#else
#define SQ_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum sq_status {
  SQ_OK = 0,
  SQ_ERR_INVALID_INPUT = 1,
  SQ_ERR_BACKEND_UNAVAILABLE = 2,
  SQ_ERR_REQUEST_REJECTED = 3,
  SQ_ERR_MALFORMED_RESPONSE = 4,
  SQ_ERR_TIMEOUT = 5,
  SQ_ERR_SCRIPT_MISS = 6,
  SQ_ERR_PARSE = 7,
  SQ_ERR_IO = 8,
  SQ_ERR_INTERNAL = 9
} sq_status;

typedef enum sq_role { SQ_ROLE_QUESTIONER = 0, SQ_ROLE_ANSWERER = 1, SQ_ROLE_REASONER = 2, SQ_ROLE_BASELINE = 3 } sq_role;

typedef enum sq_mode { SQ_MODE_GENERATED = 0, SQ_MODE_GROUND_TRUTH = 1, SQ_MODE_NONE = 2 } sq_mode;

typedef enum sq_dataset_kind { SQ_DATASET_INTROSPECT = 0, SQ_DATASET_AOKVQA = 1, SQ_DATASET_CANONICAL = 2 } sq_dataset_kind;

/* Value of k meaning "every available ground-truth pair". */
#define SQ_K_MAX (-1)

typedef struct sq_params {
  int beam_width;
  int max_new_tokens;
  int min_new_tokens;
  double temperature;
  int has_seed;
  int64_t seed;
} sq_params;

typedef struct sq_dataset sq_dataset;
typedef struct sq_backend sq_backend;
typedef struct sq_config sq_config;
typedef struct sq_report sq_report;
typedef struct sq_stub_server sq_stub_server;

SQ_API const char* sq_version(void);
SQ_API const char* sq_last_error(void);
SQ_API const char* sq_status_string(sq_status status);
SQ_API void sq_free(char* text);

/* Prompt builders. */
SQ_API sq_status sq_build_questioner_prompt(const char* question, const char* const* priors, size_t n_priors,
                                            char** out);
SQ_API sq_status sq_build_answerer_prompt(const char* sub_question, char** out);
SQ_API sq_status sq_build_reasoner_prompt(const char* question, const char* const* sub_questions,
                                          const char* const* sub_answers, size_t n_pairs, char** out);
SQ_API sq_status sq_build_baseline_prompt(const char* question, char** out);

/* Answer normalization and scoring. */
SQ_API sq_status sq_normalize_answer(const char* text, char** out);
SQ_API sq_status sq_vqa_soft_accuracy(const char* predicted, const char* const* annotations, size_t n, double* out);
SQ_API sq_status sq_mc_select(const char* generated, const char* const* choices, size_t n, int* out);

/* Datasets. Samples are sorted by question id after loading. */
SQ_API sq_status sq_dataset_load(const char* path, sq_dataset_kind kind, const char* image_root, sq_dataset** out);
SQ_API sq_status sq_dataset_subset_every(const sq_dataset* dataset, size_t n, sq_dataset** out);
SQ_API size_t sq_dataset_size(const sq_dataset* dataset);
SQ_API sq_status sq_dataset_write_canonical(const sq_dataset* dataset, const char* path);
SQ_API void sq_dataset_free(sq_dataset* dataset);

/* Backends. A timeout_ms of 0 uses SQ_HTTP_TIMEOUT_MS or the default. */
SQ_API void sq_params_default(sq_params* params);
SQ_API sq_status sq_backend_scripted_load(const char* script_path, int fallback, sq_backend** out);
SQ_API sq_status sq_backend_remote_create(const char* endpoint, int timeout_ms, int max_in_flight, sq_backend** out);
SQ_API sq_status sq_backend_generate(sq_backend* backend, const char* image_id, const char* image_uri,
                                     const char* prompt, sq_role role, const sq_params* params, char** out_text);
SQ_API void sq_backend_free(sq_backend* backend);

/* Pipeline configuration. Backends are shared; the config keeps its own
   reference so the caller may free its handle right away. */
SQ_API sq_status sq_config_create(sq_config** out);
SQ_API sq_status sq_config_set_mode(sq_config* config, sq_mode mode);
SQ_API sq_status sq_config_set_k(sq_config* config, int k);
SQ_API sq_status sq_config_set_dedup_retries(sq_config* config, int retries);
SQ_API sq_status sq_config_set_backend(sq_config* config, sq_role role, const sq_backend* backend);
SQ_API sq_status sq_config_set_params(sq_config* config, sq_role role, const sq_params* params);
SQ_API sq_status sq_config_set_default_params(sq_config* config, const sq_params* params);
SQ_API sq_status sq_config_set_choices_in_prompt(sq_config* config, int enabled);
/* Comma-separated list of exact, vqa-soft, mc, direct. */
SQ_API sq_status sq_config_set_metrics(sq_config* config, const char* metrics_csv);
SQ_API sq_status sq_config_set_workers(sq_config* config, int workers);
SQ_API sq_status sq_config_set_exclude_errors(sq_config* config, int enabled);
SQ_API void sq_config_free(sq_config* config);

/* Evaluation. out_dir may be NULL to keep records in memory only. */
SQ_API sq_status sq_run_eval(const sq_dataset* dataset, const sq_config* config, const char* out_dir,
                             const char* dataset_id, sq_report** out);
SQ_API sq_status sq_run_ablation(const sq_dataset* dataset, const sq_config* config, const int* ks, size_t n_ks,
                                 const char* out_dir, const char* dataset_id, sq_report** out);
SQ_API sq_status sq_report_load(const char* out_dir, sq_report** out);
/* format: "jsonl", "tsv" or "markdown". */
SQ_API sq_status sq_report_render(const sq_report* report, const char* format, char** out);
SQ_API size_t sq_report_rows(const sq_report* report);
SQ_API void sq_report_free(sq_report* report);

/* Wire-protocol conformance stub. fixtures_path may be NULL for the built-in
   table. port 0 binds any free port. */
SQ_API sq_status sq_stub_server_create(const char* fixtures_path, const char* host, int port, sq_stub_server** out);
SQ_API int sq_stub_server_port(const sq_stub_server* server);
SQ_API sq_status sq_stub_server_start(sq_stub_server* server);
/* Blocks until sq_stub_server_stop is called from another thread. */
SQ_API sq_status sq_stub_server_run(sq_stub_server* server);
SQ_API void sq_stub_server_stop(sq_stub_server* server);
SQ_API void sq_stub_server_free(sq_stub_server* server);

#ifdef __cplusplus
}
#endif

#endif /* SQ_SQ_H */
