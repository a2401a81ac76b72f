#include "sq/harness.hpp"

#include <chrono>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <thread>

#include "codec.hpp"
#include "sq/datasets.hpp"
#include "util.hpp"

namespace sq {

namespace fs = std::filesystem;
using detail::json;

namespace {

constexpr const char* kRecordsFile = "records.jsonl";
constexpr const char* kRunFile = "run.json";
constexpr const char* kAblationFile = "ablation.json";

json config_json(const PipelineConfig& config, const EvalOptions& options) {
  json j;
  j["mode"] = to_string(config.mode);
  j["k"] = config.k.str();
  j["dedup_retries"] = config.dedup_retries;
  j["choices_in_prompt"] = config.choices_in_prompt;
  j["default_params"] = detail::params_to_json(config.default_params);
  json params = json::object();
  json backends = json::object();
  for (Role r : {Role::questioner, Role::answerer, Role::reasoner, Role::baseline}) {
    params[std::string(to_string(r))] = detail::params_to_json(config.params_for(r));
    const Generator* g = config.backend_for(r);
    backends[std::string(to_string(r))] = g ? json(g->describe()) : json(nullptr);
  }
  j["params"] = std::move(params);
  j["backends"] = std::move(backends);
  json metrics = json::array();
  for (MetricKind m : options.metrics) metrics.push_back(to_string(m));
  j["metrics"] = std::move(metrics);
  j["exclude_errors"] = options.exclude_errors;
  return j;
}

std::string default_condition(const PipelineConfig& config) {
  return config.mode == SubQAMode::none ? "none" : config.k.str();
}

void check_metric_inputs(std::span<const MainQuestion> dataset, std::span<const MetricKind> metrics) {
  for (const MainQuestion& q : dataset) {
    for (MetricKind m : metrics) {
      const bool ok = m == MetricKind::mc ? q.choices.has_value() : !q.gt_answers.empty();
      if (!ok) {
        throw Error(ErrorKind::invalid_input, "question " + q.question_id + " cannot be scored with metric " +
                                                  std::string(to_string(m)));
      }
    }
  }
}

struct ParsedRecords {
  std::vector<RunRecord> records;
  std::size_t valid_bytes = 0;
  bool torn_tail = false;
};

// A final line without '\n' is a write cut short by a crash; it is reported
// as torn and left out. Any other unparsable line is an error.
ParsedRecords parse_records(std::string_view text, std::string_view source) {
  ParsedRecords out;
  std::size_t start = 0;
  std::size_t line_no = 0;
  while (start < text.size()) {
    const std::size_t end = text.find('\n', start);
    ++line_no;
    if (end == std::string_view::npos) {
      out.torn_tail = true;
      break;
    }
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    if (line.find_first_not_of(" \t\r") != std::string_view::npos) {
      try {
        out.records.push_back(record_from_json(line));
      } catch (const Error& e) {
        throw Error(ErrorKind::parse, std::string(source) + ":" + std::to_string(line_no) + ": corrupted record: " +
                                          e.what());
      }
    }
    out.valid_bytes = start;
  }
  return out;
}

json read_json_file(const fs::path& path) {
  const std::string text = detail::read_file(path.string());
  try {
    return json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, path.string() + ": " + e.what());
  }
}

void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) throw Error(ErrorKind::io, "cannot write " + path.string());
}

std::string format_score(double score) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", score);
  return buf;
}

std::string cell(std::string_view text, ReportFormat format) {
  std::string out;
  for (char c : text) {
    if (c == '\t' || c == '\n' || c == '\r') out.push_back(' ');
    else if (c == '|' && format == ReportFormat::markdown) out += "\\|";
    else out.push_back(c);
  }
  return out;
}

std::string render_grid(const std::vector<std::string>& header, const std::vector<std::vector<std::string>>& rows,
                        ReportFormat format, std::size_t left_aligned) {
  std::string out;
  auto line = [&](const std::vector<std::string>& cells) {
    if (format == ReportFormat::tsv) {
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "\t" : "") + cell(cells[i], format);
    } else {
      out += "|";
      for (const auto& c : cells) out += " " + cell(c, format) + " |";
    }
    out += "\n";
  };
  line(header);
  if (format == ReportFormat::markdown) {
    out += "|";
    for (std::size_t i = 0; i < header.size(); ++i) out += i < left_aligned ? "---|" : "---:|";
    out += "\n";
  }
  for (const auto& r : rows) line(r);
  return out;
}

}  // namespace

std::string record_to_json(const RunRecord& record, bool include_timing) {
  json j;
  j["question_id"] = record.question_id;
  j["config_fingerprint"] = record.config_fingerprint;
  j["dialogue"] = detail::dialogue_to_json(record.dialogue);
  json eval = json::array();
  for (const EvalResult& r : record.eval) eval.push_back(detail::eval_to_json(r));
  j["eval"] = std::move(eval);
  if (include_timing) j["wall_ms"] = record.wall_ms;
  j["error"] = record.error ? json(*record.error) : json(nullptr);
  return j.dump();
}

RunRecord record_from_json(std::string_view line) {
  try {
    const json j = json::parse(line);
    RunRecord r;
    r.question_id = j.at("question_id").get<std::string>();
    r.config_fingerprint = j.at("config_fingerprint").get<std::string>();
    r.dialogue = detail::dialogue_from_json(j.at("dialogue"));
    for (const json& e : j.at("eval")) r.eval.push_back(detail::eval_from_json(e));
    r.wall_ms = j.value("wall_ms", std::int64_t{0});
    if (!j.at("error").is_null()) r.error = j["error"].get<std::string>();
    return r;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::parse, e.what());
  }
}

std::string config_fingerprint(const PipelineConfig& config, const EvalOptions& options,
                               std::span<const MainQuestion> dataset) {
  json j;
  j["code_version"] = kCodeVersion;
  j["dataset_id"] = options.dataset_id;
  j["dataset_sha256"] = detail::sha256_hex(to_canonical_jsonl(dataset));
  j["config"] = config_json(config, options);
  return detail::sha256_hex(j.dump()).substr(0, 16);
}

std::vector<EvalResult> score_dialogue(const Dialogue& dialogue, std::span<const MetricKind> metrics) {
  const MainQuestion& q = dialogue.main;
  std::vector<EvalResult> out;
  for (MetricKind m : metrics) {
    EvalResult r;
    r.question_id = q.question_id;
    r.metric = m;
    if (m == MetricKind::mc) r.selected_choice_index = -1;
    if (dialogue.error || !dialogue.final_answer) {
      out.push_back(std::move(r));
      continue;
    }
    r.predicted = *dialogue.final_answer;
    switch (m) {
      case MetricKind::exact: r.score = exact_match(r.predicted, majority_answer(q.gt_answers)); break;
      case MetricKind::vqa_soft: r.score = vqa_soft_accuracy(r.predicted, q.gt_answers); break;
      case MetricKind::direct_answer: r.score = direct_answer_accuracy(r.predicted, q.gt_answers); break;
      case MetricKind::mc: {
        if (!q.choices) throw Error(ErrorKind::invalid_input, "question " + q.question_id + " has no choices");
        const int selected = mc_select(r.predicted, *q.choices);
        r.selected_choice_index = selected;
        r.score = q.correct_choice_index && selected == *q.correct_choice_index ? 1.0 : 0.0;
        break;
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

ReportRow summarize(std::string condition, std::span<const RunRecord> records, std::span<const MetricKind> metrics,
                    bool exclude_errors) {
  ReportRow row;
  row.condition = std::move(condition);
  std::map<MetricKind, std::vector<EvalResult>> by_metric;
  for (const RunRecord& rec : records) {
    if (exclude_errors && rec.error) continue;
    ++row.n;
    for (const EvalResult& r : rec.eval) by_metric[r.metric].push_back(r);
  }
  if (row.n == 0) throw Error(ErrorKind::invalid_input, "no scored samples for condition '" + row.condition + "'");
  for (MetricKind m : metrics) {
    const auto it = by_metric.find(m);
    if (it == by_metric.end()) continue;
    row.columns[std::string(to_string(m))] = aggregate(it->second);
  }
  return row;
}

EvalOutcome run_eval(std::span<const MainQuestion> dataset, const PipelineConfig& config, const EvalOptions& options) {
  config.validate();
  if (options.metrics.empty()) throw Error(ErrorKind::invalid_input, "no metrics configured");
  std::set<std::string> ids;
  for (const MainQuestion& q : dataset) {
    validate(q);
    if (!ids.insert(q.question_id).second) {
      throw Error(ErrorKind::invalid_input, "duplicate question_id " + q.question_id);
    }
    if (config.mode == SubQAMode::ground_truth && !q.gt_sub_qas) {
      throw Error(ErrorKind::invalid_input, "question " + q.question_id + " has no ground-truth sub-QAs");
    }
  }
  check_metric_inputs(dataset, options.metrics);

  EvalOutcome outcome;
  outcome.fingerprint = config_fingerprint(config, options, dataset);
  const std::string condition = options.condition.empty() ? default_condition(config) : options.condition;

  std::map<std::string, RunRecord> done;
  std::ofstream sink;
  if (!options.out_dir.empty()) {
    const fs::path dir(options.out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::io, "cannot create " + dir.string() + ": " + ec.message());
    const fs::path records_path = dir / kRecordsFile;
    if (fs::exists(records_path)) {
      ParsedRecords existing = parse_records(detail::read_file(records_path.string()), records_path.string());
      if (existing.torn_tail) fs::resize_file(records_path, existing.valid_bytes);
      for (RunRecord& r : existing.records) {
        if (r.config_fingerprint == outcome.fingerprint && ids.contains(r.question_id)) {
          done.try_emplace(r.question_id, std::move(r));
        }
      }
    }
    json run;
    run["condition"] = condition;
    run["fingerprint"] = outcome.fingerprint;
    run["dataset_id"] = options.dataset_id;
    run["config"] = config_json(config, options);
    write_text_file(dir / kRunFile, run.dump(2) + "\n");
    sink.open(records_path, std::ios::binary | std::ios::app);
    if (!sink) throw Error(ErrorKind::io, "cannot write " + records_path.string());
  }

  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < dataset.size(); ++i) {
    if (!done.contains(dataset[i].question_id)) pending.push_back(i);
  }
  outcome.resumed = dataset.size() - pending.size();

  auto run_one = [&](const MainQuestion& sample) {
    const auto started = std::chrono::steady_clock::now();
    RunRecord rec;
    rec.question_id = sample.question_id;
    rec.config_fingerprint = outcome.fingerprint;
    try {
      rec.dialogue = run_dialogue(sample, config);
    } catch (const std::exception& e) {
      rec.dialogue = Dialogue{};
      rec.dialogue.main = sample;
      rec.dialogue.error = e.what();
    }
    rec.error = rec.dialogue.error;
    rec.eval = score_dialogue(rec.dialogue, options.metrics);
    rec.wall_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - started).count();
    return rec;
  };

  std::vector<std::optional<RunRecord>> slots(pending.size());
  std::mutex mu;
  std::size_t next_write = 0;
  std::exception_ptr failure;
  std::atomic<std::size_t> next_claim{0};

  // Records are written strictly in dataset order so that the file is a
  // contiguous prefix of the full run at any point.
  auto worker = [&] {
    while (!(options.stop && options.stop->load())) {
      const std::size_t i = next_claim++;
      if (i >= pending.size()) return;
      RunRecord rec = run_one(dataset[pending[i]]);
      std::lock_guard lock(mu);
      slots[i] = std::move(rec);
      try {
        while (next_write < slots.size() && slots[next_write]) {
          if (sink.is_open()) {
            sink << record_to_json(*slots[next_write]) << '\n';
            sink.flush();
            if (!sink) throw Error(ErrorKind::io, "write failed: " + options.out_dir);
          }
          ++next_write;
        }
      } catch (...) {
        if (!failure) failure = std::current_exception();
      }
    }
  };

  {
    const std::size_t n_workers =
        std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(options.workers, 1)), pending.size()));
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < n_workers && !pending.empty(); ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  std::size_t slot = 0;
  for (const MainQuestion& sample : dataset) {
    if (auto it = done.find(sample.question_id); it != done.end()) {
      outcome.records.push_back(std::move(it->second));
    } else {
      if (slots[slot]) {
        outcome.records.push_back(std::move(*slots[slot]));
        ++outcome.executed;
      } else {
        outcome.interrupted = true;
      }
      ++slot;
    }
  }
  if (!outcome.records.empty()) {
    outcome.table.rows.push_back(summarize(condition, outcome.records, options.metrics, options.exclude_errors));
  }
  return outcome;
}

ReportTable run_ablation(std::span<const MainQuestion> dataset, std::span<const SubQuestionCount> ks,
                         const PipelineConfig& base_config, const EvalOptions& base_options) {
  if (base_config.mode != SubQAMode::ground_truth) {
    throw Error(ErrorKind::invalid_input, "the ablation runs in ground_truth mode");
  }
  if (ks.empty()) throw Error(ErrorKind::invalid_input, "no k values given");

  ReportTable table;
  json index = json::array();
  for (SubQuestionCount k : ks) {
    PipelineConfig config = base_config;
    config.k = k;
    EvalOptions options = base_options;
    options.condition = k.str();
    if (!base_options.out_dir.empty()) {
      const std::string sub = "k-" + k.str();
      options.out_dir = (fs::path(base_options.out_dir) / sub).string();
      json entry;
      entry["condition"] = k.str();
      entry["dir"] = sub;
      index.push_back(std::move(entry));
    }
    EvalOutcome outcome = run_eval(dataset, config, options);
    for (ReportRow& row : outcome.table.rows) table.rows.push_back(std::move(row));
    if (outcome.interrupted) break;
  }
  if (!base_options.out_dir.empty()) {
    json doc;
    doc["rows"] = std::move(index);
    write_text_file(fs::path(base_options.out_dir) / kAblationFile, doc.dump(2) + "\n");
  }
  return table;
}

std::vector<RunRecord> read_records(const std::string& path) {
  const fs::path file = fs::is_directory(path) ? fs::path(path) / kRecordsFile : fs::path(path);
  return parse_records(detail::read_file(file.string()), file.string()).records;
}

ReportTable load_report(const std::string& out_dir) {
  const fs::path root(out_dir);
  std::vector<fs::path> runs;
  if (fs::exists(root / kAblationFile)) {
    const json doc = read_json_file(root / kAblationFile);
    try {
      for (const json& e : doc.at("rows")) runs.push_back(root / e.at("dir").get<std::string>());
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, (root / kAblationFile).string() + ": " + e.what());
    }
  } else if (fs::exists(root / kRunFile)) {
    runs.push_back(root);
  } else {
    throw Error(ErrorKind::io, "no run found under " + out_dir);
  }

  ReportTable table;
  for (const fs::path& dir : runs) {
    const json run = read_json_file(dir / kRunFile);
    std::string condition;
    std::string fingerprint;
    std::vector<MetricKind> metrics;
    bool exclude_errors = false;
    try {
      condition = run.at("condition").get<std::string>();
      fingerprint = run.at("fingerprint").get<std::string>();
      for (const json& m : run.at("config").at("metrics")) metrics.push_back(metric_from_string(m.get<std::string>()));
      exclude_errors = run.at("config").at("exclude_errors").get<bool>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, (dir / kRunFile).string() + ": " + e.what());
    }
    std::vector<RunRecord> records;
    std::set<std::string> seen;
    for (RunRecord& r : read_records((dir / kRecordsFile).string())) {
      if (r.config_fingerprint == fingerprint && seen.insert(r.question_id).second) records.push_back(std::move(r));
    }
    table.rows.push_back(summarize(condition, records, metrics, exclude_errors));
  }
  return table;
}

ReportFormat report_format_from_string(std::string_view text) {
  if (text == "jsonl") return ReportFormat::jsonl;
  if (text == "tsv") return ReportFormat::tsv;
  if (text == "markdown" || text == "md") return ReportFormat::markdown;
  throw Error(ErrorKind::invalid_input, "unsupported report format '" + std::string(text) + "'");
}

std::string emit_report(const ReportTable& table, ReportFormat format) {
  if (table.rows.empty()) throw Error(ErrorKind::invalid_input, "empty report table");
  std::set<std::string> metric_names;
  for (const ReportRow& row : table.rows) {
    for (const auto& [name, value] : row.columns) metric_names.insert(name);
  }

  if (format == ReportFormat::jsonl) {
    std::string out;
    for (const ReportRow& row : table.rows) {
      json j;
      j["condition"] = row.condition;
      j["n"] = row.n;
      for (const std::string& name : metric_names) {
        const auto it = row.columns.find(name);
        j[name] = it == row.columns.end() ? json(nullptr) : json(std::stod(format_percentage(it->second)));
      }
      out += j.dump() + "\n";
    }
    return out;
  }

  std::vector<std::string> header = {"condition", "n"};
  header.insert(header.end(), metric_names.begin(), metric_names.end());
  std::vector<std::vector<std::string>> rows;
  for (const ReportRow& row : table.rows) {
    std::vector<std::string> cells = {row.condition, std::to_string(row.n)};
    for (const std::string& name : metric_names) {
      const auto it = row.columns.find(name);
      cells.push_back(it == row.columns.end() ? "" : format_percentage(it->second));
    }
    rows.push_back(std::move(cells));
  }
  return render_grid(header, rows, format, 1);
}

std::string emit_report(std::span<const RunRecord> records, ReportFormat format) {
  if (records.empty()) throw Error(ErrorKind::invalid_input, "no records to report");
  if (format == ReportFormat::jsonl) {
    std::string out;
    for (const RunRecord& r : records) out += record_to_json(r) + "\n";
    return out;
  }
  std::set<std::string> metric_names;
  for (const RunRecord& r : records) {
    for (const EvalResult& e : r.eval) metric_names.insert(std::string(to_string(e.metric)));
  }
  std::vector<std::string> header = {"question_id", "final_answer", "error"};
  header.insert(header.end(), metric_names.begin(), metric_names.end());
  std::vector<std::vector<std::string>> rows;
  for (const RunRecord& r : records) {
    std::vector<std::string> cells = {r.question_id, r.dialogue.final_answer.value_or(""), r.error.value_or("")};
    for (const std::string& name : metric_names) {
      std::string value;
      for (const EvalResult& e : r.eval) {
        if (to_string(e.metric) == name) value = format_score(e.score);
      }
      cells.push_back(value);
    }
    rows.push_back(std::move(cells));
  }
  return render_grid(header, rows, format, 3);
}

}  // namespace sq
