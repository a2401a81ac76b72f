// sq: command-line front end for the self-questioning engine.
//
//   sq eval    --dataset val.json --dataset-kind introspect --mode generated --k 3 --scripted oracle.json --out runs/a
//   sq ablate  --dataset val.json --dataset-kind introspect --reasoner-url http://localhost:8000 --out runs/ablation
//   sq report  --out runs/ablation --format markdown
//   sq stub-server --port 8080
//
// Links only against the C interface in sq/sq.h.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "sq/sq.h"

namespace {

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using DatasetPtr = std::unique_ptr<sq_dataset, Deleter<sq_dataset, sq_dataset_free>>;
using BackendPtr = std::unique_ptr<sq_backend, Deleter<sq_backend, sq_backend_free>>;
using ConfigPtr = std::unique_ptr<sq_config, Deleter<sq_config, sq_config_free>>;
using ReportPtr = std::unique_ptr<sq_report, Deleter<sq_report, sq_report_free>>;
using StubPtr = std::unique_ptr<sq_stub_server, Deleter<sq_stub_server, sq_stub_server_free>>;

struct Failure {
  sq_status status;
  std::string message;
};

void check(sq_status status, const std::string& context) {
  if (status != SQ_OK) throw Failure{status, context + ": " + sq_status_string(status) + ": " + sq_last_error()};
}

std::string take(char* text) {
  std::string out(text ? text : "");
  sq_free(text);
  return out;
}

struct RunArgs {
  std::string dataset;
  std::string dataset_kind = "canonical";
  std::string image_root;
  std::string mode = "generated";
  std::string k;
  std::string ks = "0,1,2,3,4,max";
  std::string questioner_url;
  std::string answerer_url;
  std::string reasoner_url;
  std::string scripted;
  bool script_fallback = false;
  std::string out = "sq-run";
  int subset_every = 0;
  std::optional<long long> seed;
  std::string metrics;
  int workers = 4;
  int dedup_retries = 2;
  bool choices_in_prompt = false;
  bool exclude_errors = false;
  std::string format = "markdown";
};

void add_run_options(CLI::App* cmd, RunArgs& a) {
  cmd->add_option("--dataset", a.dataset, "Annotation file")->required();
  cmd->add_option("--dataset-kind", a.dataset_kind, "Dataset layout")
      ->check(CLI::IsMember({"introspect", "aokvqa", "canonical"}));
  cmd->add_option("--image-root", a.image_root, "Directory prefixed to image ids to form image locators");
  cmd->add_option("--questioner-url", a.questioner_url, "Questioner endpoint");
  cmd->add_option("--answerer-url", a.answerer_url, "Answerer endpoint");
  cmd->add_option("--reasoner-url", a.reasoner_url, "Reasoner endpoint (also serves the baseline role)");
  cmd->add_option("--scripted", a.scripted, "Oracle script bound to every role without a URL");
  cmd->add_flag("--script-fallback", a.script_fallback, "Answer 'unknown' on script misses instead of failing");
  cmd->add_option("--out", a.out, "Output directory");
  cmd->add_option("--seed", a.seed, "Decoding seed");
  cmd->add_option("--metrics", a.metrics, "Comma-separated: exact,vqa-soft,mc,direct");
  cmd->add_option("--workers", a.workers, "Concurrent dialogues")->check(CLI::PositiveNumber);
  cmd->add_option("--dedup-retries", a.dedup_retries, "Questioner retries on a repeated sub-question")
      ->check(CLI::NonNegativeNumber);
  cmd->add_flag("--choices-in-prompt", a.choices_in_prompt, "Append the answer choices to the reasoner prompt");
  cmd->add_flag("--exclude-errors", a.exclude_errors, "Leave errored samples out of accuracy denominators");
  cmd->add_option("--format", a.format, "Table format printed to stdout")
      ->check(CLI::IsMember({"jsonl", "tsv", "markdown"}));
}

int parse_k(const std::string& text) {
  if (text == "max" || text == "Max" || text == "MAX") return SQ_K_MAX;
  std::size_t used = 0;
  int k = -1;
  try {
    k = std::stoi(text, &used);
  } catch (const std::exception&) {
  }
  if (used != text.size() || k < 0) throw Failure{SQ_ERR_INVALID_INPUT, "k must be a non-negative integer or max: " + text};
  return k;
}

sq_dataset_kind kind_of(const std::string& s) {
  if (s == "introspect") return SQ_DATASET_INTROSPECT;
  if (s == "aokvqa") return SQ_DATASET_AOKVQA;
  return SQ_DATASET_CANONICAL;
}

sq_mode mode_of(const std::string& s) {
  if (s == "generated") return SQ_MODE_GENERATED;
  if (s == "ground-truth" || s == "ground_truth") return SQ_MODE_GROUND_TRUTH;
  if (s == "none") return SQ_MODE_NONE;
  throw Failure{SQ_ERR_INVALID_INPUT, "unknown mode: " + s};
}

DatasetPtr load_dataset(const RunArgs& a, int default_every, std::string& dataset_id) {
  sq_dataset* raw = nullptr;
  check(sq_dataset_load(a.dataset.c_str(), kind_of(a.dataset_kind), a.image_root.empty() ? nullptr : a.image_root.c_str(), &raw),
        "loading " + a.dataset);
  DatasetPtr ds(raw);
  const int every = a.subset_every > 0 ? a.subset_every : default_every;
  dataset_id = a.dataset + "|" + a.dataset_kind + "|every=" + std::to_string(every);
  if (every > 1) {
    sq_dataset* sub = nullptr;
    check(sq_dataset_subset_every(ds.get(), static_cast<size_t>(every), &sub), "subsetting");
    ds.reset(sub);
  }
  std::cerr << "loaded " << sq_dataset_size(ds.get()) << " samples from " << a.dataset << "\n";
  return ds;
}

ConfigPtr build_config(const RunArgs& a, sq_mode mode, std::vector<BackendPtr>& keep) {
  sq_config* raw = nullptr;
  check(sq_config_create(&raw), "config");
  ConfigPtr config(raw);
  check(sq_config_set_mode(config.get(), mode), "mode");
  check(sq_config_set_dedup_retries(config.get(), a.dedup_retries), "dedup retries");
  check(sq_config_set_workers(config.get(), a.workers), "workers");
  check(sq_config_set_choices_in_prompt(config.get(), a.choices_in_prompt), "choices");
  check(sq_config_set_exclude_errors(config.get(), a.exclude_errors), "exclude errors");

  std::string metrics = a.metrics;
  if (metrics.empty()) metrics = a.dataset_kind == "aokvqa" ? "mc,direct" : "exact,vqa-soft";
  check(sq_config_set_metrics(config.get(), metrics.c_str()), "metrics");

  if (a.seed) {
    sq_params params;
    sq_params_default(&params);
    params.has_seed = 1;
    params.seed = *a.seed;
    check(sq_config_set_default_params(config.get(), &params), "seed");
  }

  sq_backend* scripted = nullptr;
  if (!a.scripted.empty()) {
    check(sq_backend_scripted_load(a.scripted.c_str(), a.script_fallback ? 1 : 0, &scripted), "loading " + a.scripted);
    keep.emplace_back(scripted);
  }
  std::map<std::string, sq_backend*> remotes;
  const std::pair<sq_role, const std::string*> bindings[] = {
      {SQ_ROLE_QUESTIONER, &a.questioner_url}, {SQ_ROLE_ANSWERER, &a.answerer_url}, {SQ_ROLE_REASONER, &a.reasoner_url}};
  for (const auto& [role, url] : bindings) {
    sq_backend* backend = scripted;
    if (!url->empty()) {
      auto it = remotes.find(*url);
      if (it == remotes.end()) {
        sq_backend* remote = nullptr;
        check(sq_backend_remote_create(url->c_str(), 0, 4, &remote), "endpoint " + *url);
        keep.emplace_back(remote);
        it = remotes.emplace(*url, remote).first;
      }
      backend = it->second;
    }
    if (backend) check(sq_config_set_backend(config.get(), role, backend), "backend");
  }
  return config;
}

void print_report(const sq_report* report, const std::string& format) {
  char* text = nullptr;
  check(sq_report_render(report, format.c_str(), &text), "rendering report");
  std::cout << take(text);
}

int cmd_eval(const RunArgs& a) {
  const sq_mode mode = mode_of(a.mode);
  std::string dataset_id;
  DatasetPtr ds = load_dataset(a, 1, dataset_id);
  std::vector<BackendPtr> keep;
  ConfigPtr config = build_config(a, mode, keep);
  const int k = a.k.empty() ? (mode == SQ_MODE_NONE ? 0 : 3) : parse_k(a.k);
  check(sq_config_set_k(config.get(), k), "k");

  sq_report* raw = nullptr;
  check(sq_run_eval(ds.get(), config.get(), a.out.c_str(), dataset_id.c_str(), &raw), "eval");
  ReportPtr report(raw);
  print_report(report.get(), a.format);
  return 0;
}

int cmd_ablate(const RunArgs& a) {
  if (mode_of(a.mode) != SQ_MODE_GROUND_TRUTH) {
    throw Failure{SQ_ERR_INVALID_INPUT, "ablate runs with --mode ground-truth"};
  }
  std::vector<int> ks;
  std::string rest = a.ks;
  while (!rest.empty()) {
    const auto comma = rest.find(',');
    ks.push_back(parse_k(rest.substr(0, comma)));
    if (comma == std::string::npos) break;
    rest.erase(0, comma + 1);
  }
  std::string dataset_id;
  DatasetPtr ds = load_dataset(a, 10, dataset_id);
  std::vector<BackendPtr> keep;
  ConfigPtr config = build_config(a, SQ_MODE_GROUND_TRUTH, keep);

  sq_report* raw = nullptr;
  check(sq_run_ablation(ds.get(), config.get(), ks.data(), ks.size(), a.out.c_str(), dataset_id.c_str(), &raw),
        "ablation");
  ReportPtr report(raw);
  print_report(report.get(), a.format);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-questioning VQA pipeline and evaluation harness"};
  app.require_subcommand(1);
  app.set_version_flag("--version", sq_version());

  RunArgs eval_args;
  auto* eval = app.add_subcommand("eval", "Run the pipeline over a dataset and score it");
  add_run_options(eval, eval_args);
  eval->add_option("--mode", eval_args.mode, "Sub-QA source")->check(CLI::IsMember({"generated", "ground-truth", "none"}));
  eval->add_option("--k", eval_args.k, "Sub-QAs per dialogue (integer or max)");
  eval->add_option("--subset-every", eval_args.subset_every, "Keep every n-th sample")->check(CLI::PositiveNumber);

  RunArgs ablate_args;
  ablate_args.mode = "ground-truth";
  auto* ablate = app.add_subcommand("ablate", "Accuracy by number of ground-truth sub-QAs");
  add_run_options(ablate, ablate_args);
  ablate->add_option("--mode", ablate_args.mode, "Sub-QA source (ground-truth only)");
  ablate->add_option("--ks", ablate_args.ks, "Comma-separated k values");
  ablate->add_option("--subset-every", ablate_args.subset_every, "Keep every n-th sample (default 10)")
      ->check(CLI::PositiveNumber);

  std::string report_out;
  std::string report_format = "markdown";
  auto* report = app.add_subcommand("report", "Re-aggregate a finished eval or ablation directory");
  report->add_option("--out", report_out, "Output directory of an earlier run")->required();
  report->add_option("--format", report_format, "jsonl, tsv or markdown")
      ->check(CLI::IsMember({"jsonl", "tsv", "markdown"}));

  std::string stub_host = "127.0.0.1";
  int stub_port = 8080;
  std::string stub_fixtures;
  auto* stub = app.add_subcommand("stub-server", "Serve the wire-protocol conformance stub");
  stub->add_option("--host", stub_host, "Bind address");
  stub->add_option("--port", stub_port, "Port (0 picks one)");
  stub->add_option("--fixtures", stub_fixtures, "Fixture table (JSON); defaults to the built-in table");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*eval) return cmd_eval(eval_args);
    if (*ablate) return cmd_ablate(ablate_args);
    if (*report) {
      sq_report* raw = nullptr;
      check(sq_report_load(report_out.c_str(), &raw), "loading " + report_out);
      ReportPtr table(raw);
      print_report(table.get(), report_format);
      return 0;
    }
    if (*stub) {
      sq_stub_server* raw = nullptr;
      check(sq_stub_server_create(stub_fixtures.empty() ? nullptr : stub_fixtures.c_str(), stub_host.c_str(), stub_port, &raw),
            "stub server");
      StubPtr server(raw);
      std::cerr << "stub server listening on http://" << stub_host << ":" << sq_stub_server_port(server.get()) << "\n";
      check(sq_stub_server_run(server.get()), "stub server");
      return 0;
    }
  } catch (const Failure& f) {
    std::cerr << "sq: " << f.message << "\n";
    return 1 + static_cast<int>(f.status);
  }
  return 0;
}
