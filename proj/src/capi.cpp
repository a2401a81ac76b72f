#include <cstring>
#include <memory>
#include <string>
#include <vector>

#include "sq/backends.hpp"
#include "sq/datasets.hpp"
#include "sq/harness.hpp"
#include "sq/metrics.hpp"
#include "sq/pipeline.hpp"
#include "sq/sq.h"
#include "util.hpp"

struct sq_dataset {
  std::vector<sq::MainQuestion> samples;
};

struct sq_backend {
  std::shared_ptr<sq::Generator> generator;
};

struct sq_config {
  sq::PipelineConfig pipeline;
  sq::EvalOptions options;
};

struct sq_report {
  sq::ReportTable table;
};

struct sq_stub_server {
  std::unique_ptr<sq::StubServer> server;
  int port = 0;
};

namespace {

thread_local std::string g_last_error;

sq_status status_of(sq::ErrorKind kind) {
  switch (kind) {
    case sq::ErrorKind::invalid_input: return SQ_ERR_INVALID_INPUT;
    case sq::ErrorKind::backend_unavailable: return SQ_ERR_BACKEND_UNAVAILABLE;
    case sq::ErrorKind::request_rejected: return SQ_ERR_REQUEST_REJECTED;
    case sq::ErrorKind::malformed_response: return SQ_ERR_MALFORMED_RESPONSE;
    case sq::ErrorKind::timeout: return SQ_ERR_TIMEOUT;
    case sq::ErrorKind::script_miss: return SQ_ERR_SCRIPT_MISS;
    case sq::ErrorKind::parse: return SQ_ERR_PARSE;
    case sq::ErrorKind::io: return SQ_ERR_IO;
  }
  return SQ_ERR_INTERNAL;
}

template <typename F>
sq_status guarded(F&& body) {
  g_last_error.clear();
  try {
    body();
    return SQ_OK;
  } catch (const sq::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return SQ_ERR_INTERNAL;
  } catch (...) {
    g_last_error = "unknown error";
    return SQ_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (p == nullptr) throw sq::Error(sq::ErrorKind::invalid_input, std::string(what) + " is NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.data(), s.size() + 1);
  return out;
}

std::vector<std::string> to_strings(const char* const* items, size_t n, const char* what) {
  if (n > 0) require(items, what);
  std::vector<std::string> out;
  for (size_t i = 0; i < n; ++i) {
    require(items[i], what);
    out.emplace_back(items[i]);
  }
  return out;
}

sq::Role role_of(sq_role role) {
  switch (role) {
    case SQ_ROLE_QUESTIONER: return sq::Role::questioner;
    case SQ_ROLE_ANSWERER: return sq::Role::answerer;
    case SQ_ROLE_REASONER: return sq::Role::reasoner;
    case SQ_ROLE_BASELINE: return sq::Role::baseline;
  }
  throw sq::Error(sq::ErrorKind::invalid_input, "unknown role");
}

sq::GenerationParams params_of(const sq_params* p) {
  require(p, "params");
  sq::GenerationParams out;
  out.beam_width = p->beam_width;
  out.max_new_tokens = p->max_new_tokens;
  out.min_new_tokens = p->min_new_tokens;
  out.temperature = p->temperature;
  if (p->has_seed) out.seed = p->seed;
  out.validate();
  return out;
}

sq::SubQuestionCount count_of(int k) {
  if (k == SQ_K_MAX) return sq::SubQuestionCount::max();
  if (k < 0) throw sq::Error(sq::ErrorKind::invalid_input, "k must be >= 0 or SQ_K_MAX");
  return sq::SubQuestionCount(k);
}

}  // namespace

extern "C" {

const char* sq_version(void) { return sq::kCodeVersion.data(); }

const char* sq_last_error(void) { return g_last_error.c_str(); }

const char* sq_status_string(sq_status status) {
  switch (status) {
    case SQ_OK: return "ok";
    case SQ_ERR_INVALID_INPUT: return "invalid input";
    case SQ_ERR_BACKEND_UNAVAILABLE: return "backend unavailable";
    case SQ_ERR_REQUEST_REJECTED: return "request rejected";
    case SQ_ERR_MALFORMED_RESPONSE: return "malformed response";
    case SQ_ERR_TIMEOUT: return "timeout";
    case SQ_ERR_SCRIPT_MISS: return "script miss";
    case SQ_ERR_PARSE: return "parse error";
    case SQ_ERR_IO: return "i/o error";
    case SQ_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

void sq_free(char* text) { std::free(text); }

sq_status sq_build_questioner_prompt(const char* question, const char* const* priors, size_t n_priors, char** out) {
  return guarded([&] {
    require(question, "question");
    require(out, "out");
    const auto p = to_strings(priors, n_priors, "priors");
    *out = dup_string(sq::build_questioner_prompt(question, p));
  });
}

sq_status sq_build_answerer_prompt(const char* sub_question, char** out) {
  return guarded([&] {
    require(sub_question, "sub_question");
    require(out, "out");
    *out = dup_string(sq::build_answerer_prompt(sub_question));
  });
}

sq_status sq_build_reasoner_prompt(const char* question, const char* const* sub_questions,
                                   const char* const* sub_answers, size_t n_pairs, char** out) {
  return guarded([&] {
    require(question, "question");
    require(out, "out");
    const auto qs = to_strings(sub_questions, n_pairs, "sub_questions");
    const auto as = to_strings(sub_answers, n_pairs, "sub_answers");
    std::vector<sq::SubQA> pairs;
    for (size_t i = 0; i < n_pairs; ++i) {
      pairs.push_back({static_cast<int>(i) + 1, qs[i], as[i], sq::Provenance::generated});
    }
    *out = dup_string(sq::build_reasoner_prompt(question, pairs));
  });
}

sq_status sq_build_baseline_prompt(const char* question, char** out) {
  return guarded([&] {
    require(question, "question");
    require(out, "out");
    *out = dup_string(sq::build_baseline_prompt(question));
  });
}

sq_status sq_normalize_answer(const char* text, char** out) {
  return guarded([&] {
    require(text, "text");
    require(out, "out");
    *out = dup_string(sq::normalize_answer(text));
  });
}

sq_status sq_vqa_soft_accuracy(const char* predicted, const char* const* annotations, size_t n, double* out) {
  return guarded([&] {
    require(predicted, "predicted");
    require(out, "out");
    *out = sq::vqa_soft_accuracy(predicted, to_strings(annotations, n, "annotations"));
  });
}

sq_status sq_mc_select(const char* generated, const char* const* choices, size_t n, int* out) {
  return guarded([&] {
    require(generated, "generated");
    require(out, "out");
    if (n != sq::kChoiceCount) throw sq::Error(sq::ErrorKind::invalid_input, "mc_select needs 4 choices");
    *out = sq::mc_select(generated, to_strings(choices, n, "choices"));
  });
}

sq_status sq_dataset_load(const char* path, sq_dataset_kind kind, const char* image_root, sq_dataset** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    sq::DatasetKind k;
    switch (kind) {
      case SQ_DATASET_INTROSPECT: k = sq::DatasetKind::introspect; break;
      case SQ_DATASET_AOKVQA: k = sq::DatasetKind::aokvqa; break;
      case SQ_DATASET_CANONICAL: k = sq::DatasetKind::canonical; break;
      default: throw sq::Error(sq::ErrorKind::invalid_input, "unknown dataset kind");
    }
    auto ds = std::make_unique<sq_dataset>();
    ds->samples = sq::load_dataset(path, k, image_root ? image_root : "");
    *out = ds.release();
  });
}

sq_status sq_dataset_subset_every(const sq_dataset* dataset, size_t n, sq_dataset** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(out, "out");
    auto ds = std::make_unique<sq_dataset>();
    ds->samples = sq::sample_every_nth(std::span<const sq::MainQuestion>(dataset->samples), n);
    *out = ds.release();
  });
}

size_t sq_dataset_size(const sq_dataset* dataset) { return dataset ? dataset->samples.size() : 0; }

sq_status sq_dataset_write_canonical(const sq_dataset* dataset, const char* path) {
  return guarded([&] {
    require(dataset, "dataset");
    require(path, "path");
    sq::write_canonical(path, dataset->samples);
  });
}

void sq_dataset_free(sq_dataset* dataset) { delete dataset; }

void sq_params_default(sq_params* params) {
  if (params == nullptr) return;
  const sq::GenerationParams d;
  params->beam_width = d.beam_width;
  params->max_new_tokens = d.max_new_tokens;
  params->min_new_tokens = d.min_new_tokens;
  params->temperature = d.temperature;
  params->has_seed = 0;
  params->seed = 0;
}

sq_status sq_backend_scripted_load(const char* script_path, int fallback, sq_backend** out) {
  return guarded([&] {
    require(script_path, "script_path");
    require(out, "out");
    auto b = std::make_unique<sq_backend>();
    b->generator = std::make_shared<sq::ScriptedOracle>(sq::load_script_file(script_path),
                                                        fallback ? sq::Strictness::fallback : sq::Strictness::strict);
    *out = b.release();
  });
}

sq_status sq_backend_remote_create(const char* endpoint, int timeout_ms, int max_in_flight, sq_backend** out) {
  return guarded([&] {
    require(endpoint, "endpoint");
    require(out, "out");
    sq::RemoteOptions options;
    if (timeout_ms > 0) options.timeout_ms = timeout_ms;
    if (max_in_flight > 0) options.max_in_flight = max_in_flight;
    auto b = std::make_unique<sq_backend>();
    b->generator = std::make_shared<sq::RemoteGenerator>(endpoint, options);
    *out = b.release();
  });
}

sq_status sq_backend_generate(sq_backend* backend, const char* image_id, const char* image_uri, const char* prompt,
                              sq_role role, const sq_params* params, char** out_text) {
  return guarded([&] {
    require(backend, "backend");
    require(image_id, "image_id");
    require(prompt, "prompt");
    require(out_text, "out_text");
    sq::GeneratorRequest request;
    request.image.image_id = image_id;
    request.image.locator = image_uri ? image_uri : image_id;
    request.prompt = prompt;
    request.role = role_of(role);
    if (params) request.params = params_of(params);
    *out_text = dup_string(backend->generator->generate(request).text);
  });
}

void sq_backend_free(sq_backend* backend) { delete backend; }

sq_status sq_config_create(sq_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new sq_config();
  });
}

sq_status sq_config_set_mode(sq_config* config, sq_mode mode) {
  return guarded([&] {
    require(config, "config");
    switch (mode) {
      case SQ_MODE_GENERATED: config->pipeline.mode = sq::SubQAMode::generated; break;
      case SQ_MODE_GROUND_TRUTH: config->pipeline.mode = sq::SubQAMode::ground_truth; break;
      case SQ_MODE_NONE: config->pipeline.mode = sq::SubQAMode::none; break;
      default: throw sq::Error(sq::ErrorKind::invalid_input, "unknown mode");
    }
  });
}

sq_status sq_config_set_k(sq_config* config, int k) {
  return guarded([&] {
    require(config, "config");
    config->pipeline.k = count_of(k);
  });
}

sq_status sq_config_set_dedup_retries(sq_config* config, int retries) {
  return guarded([&] {
    require(config, "config");
    if (retries < 0) throw sq::Error(sq::ErrorKind::invalid_input, "dedup retries must be >= 0");
    config->pipeline.dedup_retries = retries;
  });
}

sq_status sq_config_set_backend(sq_config* config, sq_role role, const sq_backend* backend) {
  return guarded([&] {
    require(config, "config");
    require(backend, "backend");
    config->pipeline.backends[role_of(role)] = backend->generator;
  });
}

sq_status sq_config_set_params(sq_config* config, sq_role role, const sq_params* params) {
  return guarded([&] {
    require(config, "config");
    config->pipeline.params[role_of(role)] = params_of(params);
  });
}

sq_status sq_config_set_default_params(sq_config* config, const sq_params* params) {
  return guarded([&] {
    require(config, "config");
    config->pipeline.default_params = params_of(params);
  });
}

sq_status sq_config_set_choices_in_prompt(sq_config* config, int enabled) {
  return guarded([&] {
    require(config, "config");
    config->pipeline.choices_in_prompt = enabled != 0;
  });
}

sq_status sq_config_set_metrics(sq_config* config, const char* metrics_csv) {
  return guarded([&] {
    require(config, "config");
    require(metrics_csv, "metrics_csv");
    std::vector<sq::MetricKind> metrics;
    std::string_view rest(metrics_csv);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      const std::string item = sq::trim(rest.substr(0, comma));
      if (!item.empty()) {
        const sq::MetricKind m = sq::metric_from_string(item);
        if (std::find(metrics.begin(), metrics.end(), m) == metrics.end()) metrics.push_back(m);
      }
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (metrics.empty()) throw sq::Error(sq::ErrorKind::invalid_input, "no metrics given");
    config->options.metrics = std::move(metrics);
  });
}

sq_status sq_config_set_workers(sq_config* config, int workers) {
  return guarded([&] {
    require(config, "config");
    if (workers < 1) throw sq::Error(sq::ErrorKind::invalid_input, "workers must be >= 1");
    config->options.workers = workers;
  });
}

sq_status sq_config_set_exclude_errors(sq_config* config, int enabled) {
  return guarded([&] {
    require(config, "config");
    config->options.exclude_errors = enabled != 0;
  });
}

void sq_config_free(sq_config* config) { delete config; }

sq_status sq_run_eval(const sq_dataset* dataset, const sq_config* config, const char* out_dir, const char* dataset_id,
                      sq_report** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(config, "config");
    require(out, "out");
    sq::EvalOptions options = config->options;
    options.out_dir = out_dir ? out_dir : "";
    options.dataset_id = dataset_id ? dataset_id : "";
    auto report = std::make_unique<sq_report>();
    report->table = sq::run_eval(dataset->samples, config->pipeline, options).table;
    *out = report.release();
  });
}

sq_status sq_run_ablation(const sq_dataset* dataset, const sq_config* config, const int* ks, size_t n_ks,
                          const char* out_dir, const char* dataset_id, sq_report** out) {
  return guarded([&] {
    require(dataset, "dataset");
    require(config, "config");
    require(out, "out");
    if (n_ks > 0) require(ks, "ks");
    std::vector<sq::SubQuestionCount> counts;
    for (size_t i = 0; i < n_ks; ++i) counts.push_back(count_of(ks[i]));
    sq::EvalOptions options = config->options;
    options.out_dir = out_dir ? out_dir : "";
    options.dataset_id = dataset_id ? dataset_id : "";
    auto report = std::make_unique<sq_report>();
    report->table = sq::run_ablation(dataset->samples, counts, config->pipeline, options);
    *out = report.release();
  });
}

sq_status sq_report_load(const char* out_dir, sq_report** out) {
  return guarded([&] {
    require(out_dir, "out_dir");
    require(out, "out");
    auto report = std::make_unique<sq_report>();
    report->table = sq::load_report(out_dir);
    *out = report.release();
  });
}

sq_status sq_report_render(const sq_report* report, const char* format, char** out) {
  return guarded([&] {
    require(report, "report");
    require(format, "format");
    require(out, "out");
    *out = dup_string(sq::emit_report(report->table, sq::report_format_from_string(format)));
  });
}

size_t sq_report_rows(const sq_report* report) { return report ? report->table.rows.size() : 0; }

void sq_report_free(sq_report* report) { delete report; }

sq_status sq_stub_server_create(const char* fixtures_path, const char* host, int port, sq_stub_server** out) {
  return guarded([&] {
    require(out, "out");
    auto fixtures = sq::conformance_fixtures();
    if (fixtures_path) fixtures = sq::parse_stub_fixtures(sq::detail::read_file(fixtures_path));
    auto s = std::make_unique<sq_stub_server>();
    s->server = std::make_unique<sq::StubServer>(std::move(fixtures));
    s->port = s->server->bind(host ? host : "127.0.0.1", port);
    *out = s.release();
  });
}

int sq_stub_server_port(const sq_stub_server* server) { return server ? server->port : -1; }

sq_status sq_stub_server_start(sq_stub_server* server) {
  return guarded([&] {
    require(server, "server");
    server->server->start();
  });
}

sq_status sq_stub_server_run(sq_stub_server* server) {
  return guarded([&] {
    require(server, "server");
    server->server->run();
  });
}

void sq_stub_server_stop(sq_stub_server* server) {
  if (server) server->server->stop();
}

void sq_stub_server_free(sq_stub_server* server) { delete server; }

}  // extern "C"
