#pragma once

// Batch evaluation: runs dialogues over a dataset on a worker pool, scores
// them, streams one JSON record per sample to <out>/records.jsonl in dataset
// order, and resumes from whatever an earlier run with the same fingerprint
// already wrote.

#include <atomic>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sq/core.hpp"
#include "sq/metrics.hpp"
#include "sq/pipeline.hpp"

namespace sq {

inline constexpr std::string_view kCodeVersion = "sq-harness/1.0";

struct RunRecord {
  std::string question_id;
  std::string config_fingerprint;
  Dialogue dialogue;
  std::vector<EvalResult> eval;
  std::int64_t wall_ms = 0;
  std::optional<std::string> error;

  friend bool operator==(const RunRecord&, const RunRecord&) = default;
};

// One JSON object, no trailing newline. Without timing, wall_ms is omitted
// so two runs can be compared byte for byte.
std::string record_to_json(const RunRecord& record, bool include_timing = true);
RunRecord record_from_json(std::string_view line);

struct ReportRow {
  std::string condition;
  std::size_t n = 0;
  std::map<std::string, double> columns;  // metric name -> percentage

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

struct ReportTable {
  std::vector<ReportRow> rows;

  friend bool operator==(const ReportTable&, const ReportTable&) = default;
};

struct EvalOptions {
  std::vector<MetricKind> metrics = {MetricKind::exact, MetricKind::vqa_soft};
  std::string out_dir;     // empty: keep records in memory only
  std::string condition;   // row label; defaults to the k value
  std::string dataset_id;  // folded into the fingerprint
  int workers = 4;
  // Errored samples count as incorrect unless excluded here.
  bool exclude_errors = false;
  // Checked before each sample is started; set it to interrupt a run.
  const std::atomic<bool>* stop = nullptr;
};

struct EvalOutcome {
  std::vector<RunRecord> records;  // dataset order, resumed ones included
  ReportTable table;
  std::string fingerprint;
  std::size_t executed = 0;
  std::size_t resumed = 0;
  bool interrupted = false;
};

// Hash over the canonical config JSON, dataset id, dataset content and code
// version.
std::string config_fingerprint(const PipelineConfig& config, const EvalOptions& options,
                               std::span<const MainQuestion> dataset);

// Errored dialogues score 0 on every metric.
std::vector<EvalResult> score_dialogue(const Dialogue& dialogue, std::span<const MetricKind> metrics);

ReportRow summarize(std::string condition, std::span<const RunRecord> records,
                    std::span<const MetricKind> metrics, bool exclude_errors = false);

EvalOutcome run_eval(std::span<const MainQuestion> dataset, const PipelineConfig& config,
                     const EvalOptions& options);

// One run_eval per k in ground-truth mode; each k persists under
// <out>/k-<k>/ and the row order is recorded in <out>/ablation.json.
ReportTable run_ablation(std::span<const MainQuestion> dataset, std::span<const SubQuestionCount> ks,
                         const PipelineConfig& base_config, const EvalOptions& base_options);

// Reads records back from an eval or ablation output directory.
std::vector<RunRecord> read_records(const std::string& path);
ReportTable load_report(const std::string& out_dir);

enum class ReportFormat { jsonl, tsv, markdown };
ReportFormat report_format_from_string(std::string_view text);

// Columns: condition, n, then metrics in alphabetical order.
std::string emit_report(const ReportTable& table, ReportFormat format);
std::string emit_report(std::span<const RunRecord> records, ReportFormat format);

}  // namespace sq
