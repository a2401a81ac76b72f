// Acceptance checks. Prints one [PASS]/[FAIL] line per criterion and exits
// non-zero if any criterion fails or overruns its time limit.

#include <signal.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <thread>

#include "sq/datasets.hpp"
#include "sq/harness.hpp"
#include "sq/metrics.hpp"
#include "support/conformance.hpp"
#include "support/fixtures.hpp"

extern char** environ;

using namespace sq;
using namespace sq::testing;
namespace fs = std::filesystem;

namespace {

struct Criterion {
  std::string name;
  double limit_s;
  std::function<std::string()> check;  // empty string on success
};

// Newline-terminated lines only; a torn tail is not counted.
std::size_t complete_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    if (!in.eof()) ++n;
  }
  return n;
}

std::string timeless(const std::string& dir) {
  std::string out;
  for (const auto& r : read_records(dir)) out += record_to_json(r, false) + "\n";
  return out;
}

// ---- criteria ---------------------------------------------------------------

std::string prompt_exactness() {
  const auto cases = golden_prompts();
  std::size_t passed = 0;
  std::string first_failure;
  for (const auto& c : cases) {
    if (c.build() == c.expected) ++passed;
    else if (first_failure.empty()) first_failure = c.name;
  }
  if (cases.size() != 20) return "suite has " + std::to_string(cases.size()) + " cases";
  if (passed != cases.size()) {
    return std::to_string(passed) + "/" + std::to_string(cases.size()) + " golden strings, first failure: " + first_failure;
  }
  return "";
}

std::string end_to_end_replay() {
  const auto a = run_dialogue(
      vase_sample(), config_with(std::make_shared<ScriptedOracle>(vase_rules(), Strictness::strict), SubQAMode::generated, 1));
  if (a.error) return "vase dialogue errored: " + *a.error;
  if (a.final_answer != "Limes") return "vase final answer '" + a.final_answer.value_or("") + "'";
  if (a.transcript.size() != 3) return "vase transcript has " + std::to_string(a.transcript.size()) + " entries";
  if (a.transcript[0].role != Role::questioner || a.transcript[1].role != Role::answerer ||
      a.transcript[2].role != Role::reasoner) {
    return "vase transcript roles out of order";
  }
  if (a.sub_qas.size() != 1 || a.sub_qas[0].sub_question != kLimesQuestion || a.sub_qas[0].sub_answer != "Yes") {
    return "vase sub-QA mismatch";
  }
  const auto b = run_dialogue(pancake_sample(), config_with(std::make_shared<ScriptedOracle>(pancake_rules(), Strictness::strict),
                                                          SubQAMode::generated, 1));
  if (b.transcript.size() != 3) return "pancake transcript has " + std::to_string(b.transcript.size()) + " entries";
  if (b.transcript[2].prompt.find(" If the pancake was missing a piece? Yes. ") == std::string::npos) {
    return "pancake reasoner prompt lacks the wrong sub-answer";
  }
  return "";
}

std::string baseline_equivalence() {
  const auto corpus = scripted_corpus(50);
  const auto backend = std::make_shared<ScriptedOracle>(corpus.rules, Strictness::strict);
  EvalOptions o;
  o.workers = 4;
  const auto none = run_eval(corpus.samples, config_with(backend, SubQAMode::none, 0), o);
  const auto gt0 = run_eval(corpus.samples, config_with(backend, SubQAMode::ground_truth, 0), o);
  if (none.records.size() != 50 || gt0.records.size() != 50) return "expected 50 records per run";
  for (std::size_t i = 0; i < 50; ++i) {
    const auto& x = none.records[i];
    const auto& y = gt0.records[i];
    if (x.error || y.error) return "record " + x.question_id + " errored";
    if (x.dialogue.transcript.size() != 1 || y.dialogue.transcript.size() != 1) return "unexpected call count";
    if (x.dialogue.transcript[0].prompt != y.dialogue.transcript[0].prompt) return "prompt differs at " + x.question_id;
    if (x.eval != y.eval) return "scores differ at " + x.question_id;
  }
  if (none.table.rows[0].columns != gt0.table.rows[0].columns) return "aggregate rows differ";
  return "";
}

std::string metric_oracle() {
  std::mt19937_64 rng(20240607);
  std::uniform_int_distribution<int> batch(1, 40), size(1, 12);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::vector<EvalResult> results;
    double oracle_sum = 0.0;
    const int items = batch(rng);
    for (int item = 0; item < items; ++item) {
      const SurfaceForm pred = random_surface_form(rng);
      std::vector<std::string> texts;
      std::vector<int> ids;
      const int n = size(rng);
      for (int i = 0; i < n; ++i) {
        const SurfaceForm a = random_surface_form(rng);
        texts.push_back(a.text);
        ids.push_back(a.answer);
      }
      const double score = vqa_soft_accuracy(pred.text, texts);
      const double expected = counting_oracle(pred.answer, ids);
      worst = std::max(worst, std::abs(score - expected));
      oracle_sum += expected;
      results.push_back({std::to_string(item), score, MetricKind::vqa_soft, pred.text, std::nullopt});
    }
    worst = std::max(worst, std::abs(aggregate(results) - 100.0 * oracle_sum / items));
  }
  if (worst > 1e-9) return "max deviation " + std::to_string(worst);

  std::mt19937_64 fuzz(77);
  for (int i = 0; i < 10000; ++i) {
    const std::string s = random_answer_text(fuzz);
    const std::string once = normalize_answer(s);
    if (normalize_answer(once) != once) return "normalize_answer not idempotent on '" + s + "'";
  }
  return "";
}

std::string ablation_property() {
  const auto gated = gated_corpus(200, 40, 5);
  const std::vector<SubQuestionCount> ks{0, 1, 2, 3, 4, SubQuestionCount::max()};
  const std::string dir = make_temp_dir("acceptance-ablation");
  EvalOptions o;
  o.out_dir = dir;
  o.metrics = {MetricKind::exact};
  o.dataset_id = "gated-200";
  const ReportTable table = run_ablation(gated.samples, ks, config_with(gated.oracle, SubQAMode::ground_truth, 0), o);
  fs::remove_all(dir);
  if (table.rows.size() != ks.size()) return "expected " + std::to_string(ks.size()) + " rows";

  std::string shape;
  double previous = -1.0;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    const int limit = ks[i].is_max() ? 5 : ks[i].value();
    const auto correct = std::count_if(gated.need.begin(), gated.need.end(), [&](int need) { return need <= limit; });
    const double expected = 100.0 * static_cast<double>(correct) / static_cast<double>(gated.need.size());
    const double got = table.rows[i].columns.at("exact");
    if (std::abs(got - expected) > 1e-9 || format_percentage(got) != format_percentage(expected)) {
      return "k=" + ks[i].str() + ": got " + format_percentage(got) + ", counted " + format_percentage(expected);
    }
    if (got < previous) return "accuracy decreased at k=" + ks[i].str();
    previous = got;
    shape += (i ? " " : "") + ks[i].str() + ":" + format_percentage(got);
  }
  std::printf("    ablation rows %s\n", shape.c_str());
  return "";
}

std::string subset_arithmetic() {
  std::vector<int> ids(22000);
  std::iota(ids.begin(), ids.end(), 0);
  const auto subset = sample_every_nth<int>(ids, 10);
  if (subset.size() != 2200) return "got " + std::to_string(subset.size()) + " elements";
  return "";
}

// Child side of the kill-and-resume check: a slow scripted run that the
// parent kills part-way through.
constexpr std::size_t kResumeSamples = 100;

PipelineConfig resume_config(const ScriptedCorpus& corpus, int pause_ms) {
  std::shared_ptr<Generator> backend = std::make_shared<ScriptedOracle>(corpus.rules, Strictness::strict);
  if (pause_ms > 0) backend = std::make_shared<PacedGenerator>(backend, pause_ms);
  return config_with(backend, SubQAMode::generated, 2);
}

EvalOptions resume_options(const std::string& dir) {
  EvalOptions o;
  o.out_dir = dir;
  o.dataset_id = "scripted-100";
  o.workers = 4;
  return o;
}

int resume_child(const std::string& dir) {
  const auto corpus = scripted_corpus(kResumeSamples);
  run_eval(corpus.samples, resume_config(corpus, 8), resume_options(dir));
  return 0;
}

std::string kill_and_resume() {
  const auto corpus = scripted_corpus(kResumeSamples);
  const std::string root = make_temp_dir("acceptance-resume");
  const std::string full = root + "/full";
  const std::string killed = root + "/killed";
  struct Cleanup {
    std::string root;
    ~Cleanup() { fs::remove_all(root); }
  } cleanup{root};

  run_eval(corpus.samples, resume_config(corpus, 0), resume_options(full));

  const std::string self = fs::read_symlink("/proc/self/exe").string();
  std::vector<std::string> args{self, "--resume-child", killed};
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  argv.push_back(nullptr);
  pid_t child = 0;
  if (posix_spawn(&child, self.c_str(), nullptr, nullptr, argv.data(), environ) != 0) return "spawn failed";

  std::size_t written = 0;
  const auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
  while (std::chrono::steady_clock::now() < deadline) {
    written = complete_lines(killed + "/records.jsonl");
    if (written >= 30) break;
    std::this_thread::sleep_for(std::chrono::milliseconds(2));
  }
  ::kill(child, SIGKILL);
  int status = 0;
  ::waitpid(child, &status, 0);
  if (!WIFSIGNALED(status)) return "child finished before it was killed";
  written = complete_lines(killed + "/records.jsonl");
  if (written == 0 || written >= kResumeSamples) return "kill left " + std::to_string(written) + " records";

  const auto resumed = run_eval(corpus.samples, resume_config(corpus, 0), resume_options(killed));
  if (resumed.resumed == 0 || resumed.executed == 0) return "resume did not split the work";
  if (resumed.resumed + resumed.executed != kResumeSamples) return "resume lost samples";

  const auto records = read_records(killed);
  std::set<std::string> ids;
  for (const auto& r : records) {
    if (!ids.insert(r.question_id).second) return "duplicate record " + r.question_id;
  }
  if (records.size() != kResumeSamples) return "final file has " + std::to_string(records.size()) + " records";
  if (timeless(killed) != timeless(full)) return "resumed records differ from the uninterrupted run";
  std::printf("    killed after %zu records, resumed %zu, executed %zu\n", written, resumed.resumed, resumed.executed);
  return "";
}

std::string wire_conformance() {
  StubServer server;
  server.bind();
  server.start();
  const auto results = run_conformance(server.endpoint());
  server.stop();
  std::size_t passed = 0;
  std::string failures;
  for (const auto& r : results) {
    if (r.passed) ++passed;
    else failures += " [" + r.name + ": " + r.detail + "]";
  }
  if (results.size() != 15) return "suite has " + std::to_string(results.size()) + " cases";
  if (passed != results.size()) return std::to_string(passed) + "/15 passed;" + failures;
  return "";
}

}  // namespace

int main(int argc, char** argv) {
  if (argc == 3 && std::string(argv[1]) == "--resume-child") return resume_child(argv[2]);

  const std::vector<Criterion> criteria = {
      {"prompt exactness (20 golden strings)", 1.0, prompt_exactness},
      {"end-to-end replay (vase and pancake dialogues)", 1.0, end_to_end_replay},
      {"baseline equivalence (50 samples, none vs ground_truth k=0)", 5.0, baseline_equivalence},
      {"metric oracle (1,000 cases within 1e-9; 10,000 idempotence fuzz)", 10.0, metric_oracle},
      {"ablation property (200 samples, ks 0,1,2,3,4,max)", 30.0, ablation_property},
      {"subset arithmetic (22,000 every 10th = 2,200)", 1.0, subset_arithmetic},
      {"persistence and resume (kill -9 on 100 samples)", 10.0, kill_and_resume},
      {"wire conformance (15 cases against the stub server)", 10.0, wire_conformance},
  };

  int failed = 0;
  for (const auto& c : criteria) {
    const auto started = std::chrono::steady_clock::now();
    std::string detail;
    try {
      detail = c.check();
    } catch (const std::exception& e) {
      detail = std::string("threw: ") + e.what();
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (detail.empty() && seconds > c.limit_s) detail = "over the time limit";
    const bool ok = detail.empty();
    failed += !ok;
    std::printf("[%s] %s  %.3fs (limit %.0fs)%s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), seconds, c.limit_s,
                ok ? "" : "  ", detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - static_cast<std::size_t>(failed), criteria.size());
  return failed == 0 ? 0 : 1;
}
