#include "support/fixtures.hpp"

#include <unistd.h>

#include <array>
#include <atomic>
#include <filesystem>
#include <thread>

namespace sq::testing {

namespace {

const std::string kFirst =
    "Generate 1 sub-question about image that will help answer the main-question, when main-question is ";
const std::string kFollow = " Create a question that asks about different information than the following questions. ";
const std::string kUse = "Use the following Q&A results to answer the main-question. If it's not useful, just ignore it.";

std::vector<SubQA> pairs(std::initializer_list<std::pair<const char*, const char*>> list) {
  std::vector<SubQA> out;
  int i = 1;
  for (const auto& [q, a] : list) out.push_back({i++, q, a, Provenance::generated});
  return out;
}

ScriptRule exact(std::string image, std::string prompt, std::string response) {
  return {std::move(image), MatchKind::exact, std::move(prompt), std::move(response)};
}

ScriptRule prefix(std::string image, std::string prompt, std::string response) {
  return {std::move(image), MatchKind::prefix, std::move(prompt), std::move(response)};
}

}  // namespace

std::vector<GoldenPrompt> golden_prompts() {
  const std::string vase_first = kFirst + "'What is at the base of the vase?'";
  std::vector<GoldenPrompt> g;
  g.push_back({"questioner first turn", [] { return build_questioner_prompt(kVaseQuestion, {}); }, vase_first});
  g.push_back({"questioner second turn",
               [] {
                 const std::vector<std::string> priors{kLimesQuestion};
                 return build_questioner_prompt(kVaseQuestion, priors);
               },
               vase_first + kFollow + "Are there limes in the vase?."});
  g.push_back({"questioner third turn",
               [] {
                 const std::vector<std::string> priors{kLimesQuestion, "Is the vase on a table?"};
                 return build_questioner_prompt(kVaseQuestion, priors);
               },
               vase_first + kFollow + "Are there limes in the vase?, Is the vase on a table?."});
  g.push_back({"questioner single letter", [] { return build_questioner_prompt("Q", {}); },
               kFirst + "'Q'"});
  g.push_back({"questioner keeps inner quote", [] { return build_questioner_prompt("What is on the girl's plate?", {}); },
               kFirst + "'What is on the girl's plate?'"});
  g.push_back({"questioner pancake first turn", [] { return build_questioner_prompt(kPancakeMain, {}); },
               kFirst + "'How many pieces of pancake are left on the plate?'"});
  g.push_back({"questioner pancake second turn",
               [] {
                 const std::vector<std::string> priors{kPancakeQuestion};
                 return build_questioner_prompt(kPancakeMain, priors);
               },
               kFirst + "'How many pieces of pancake are left on the plate?'" + kFollow +
                   "If the pancake was missing a piece?."});
  g.push_back({"answerer limes", [] { return build_answerer_prompt(kLimesQuestion); }, "Are there limes in the vase?"});
  g.push_back({"answerer single letter", [] { return build_answerer_prompt("x"); }, "x"});
  g.push_back({"answerer pancake", [] { return build_answerer_prompt(kPancakeQuestion); },
               "If the pancake was missing a piece?"});
  g.push_back({"answerer keeps spacing", [] { return build_answerer_prompt(" Is it red? "); }, " Is it red? "});
  g.push_back({"reasoner vase",
               [] { return build_reasoner_prompt(kVaseQuestion, pairs({{kLimesQuestion, "Yes"}})); },
               kUse + " Are there limes in the vase? Yes. main-question: What is at the base of the vase? A:"});
  g.push_back({"reasoner two pairs",
               [] {
                 return build_reasoner_prompt(kVaseQuestion,
                                              pairs({{kLimesQuestion, "Yes"}, {"Is the vase on a table?", "No"}}));
               },
               kUse + " Are there limes in the vase? Yes. Is the vase on a table? No. "
                      "main-question: What is at the base of the vase? A:"});
  g.push_back({"reasoner three pairs",
               [] { return build_reasoner_prompt("Q", pairs({{"a?", "1"}, {"b?", "2"}, {"c?", "3"}})); },
               kUse + " a? 1. b? 2. c? 3. main-question: Q A:"});
  g.push_back({"reasoner without pairs", [] { return build_reasoner_prompt("Q", {}); }, "main-question: Q A:"});
  g.push_back({"reasoner wrong sub-answer",
               [] { return build_reasoner_prompt(kPancakeMain, pairs({{kPancakeQuestion, "Yes"}})); },
               kUse + " If the pancake was missing a piece? Yes. "
                      "main-question: How many pieces of pancake are left on the plate? A:"});
  g.push_back({"baseline vase", [] { return build_baseline_prompt(kVaseQuestion); },
               "main-question: What is at the base of the vase? A:"});
  g.push_back({"baseline single letter", [] { return build_baseline_prompt("Q"); }, "main-question: Q A:"});
  g.push_back({"baseline pancake", [] { return build_baseline_prompt(kPancakeMain); },
               "main-question: How many pieces of pancake are left on the plate? A:"});
  g.push_back({"baseline with choices",
               [] {
                 const std::vector<std::string> choices{"flowers", "limes", "rocks", "water"};
                 return with_choices(build_baseline_prompt(kVaseQuestion), choices);
               },
               "main-question: What is at the base of the vase? Choices: flowers, limes, rocks, water. A:"});
  return g;
}

MainQuestion vase_sample() {
  MainQuestion q;
  q.question_id = "4001";
  q.image = {"vase_01", "images/vase_01.jpg", std::nullopt};
  q.text = kVaseQuestion;
  q.gt_answers = {"limes", "limes", "limes", "lemons", "fruit"};
  return q;
}

MainQuestion pancake_sample() {
  MainQuestion q;
  q.question_id = "4002";
  q.image = {"pancake_01", "images/pancake_01.jpg", std::nullopt};
  q.text = kPancakeMain;
  q.gt_answers = {"1", "1", "1", "one"};
  return q;
}

std::vector<ScriptRule> vase_rules() {
  return {
      exact("vase_01", build_questioner_prompt(kVaseQuestion, {}), kLimesQuestion),
      exact("vase_01", kLimesQuestion, "Yes"),
      prefix("vase_01", kUse, "Limes"),
      exact("vase_01", build_baseline_prompt(kVaseQuestion), "Flowers"),
  };
}

std::vector<ScriptRule> pancake_rules() {
  return {
      exact("pancake_01", build_questioner_prompt(kPancakeMain, {}), kPancakeQuestion),
      exact("pancake_01", kPancakeQuestion, "Yes"),
      prefix("pancake_01", kUse, "2"),
      exact("pancake_01", build_baseline_prompt(kPancakeMain), "3"),
  };
}

PipelineConfig config_with(std::shared_ptr<Generator> backend, SubQAMode mode, SubQuestionCount k) {
  PipelineConfig c;
  c.mode = mode;
  c.k = k;
  for (Role r : {Role::questioner, Role::answerer, Role::reasoner, Role::baseline}) c.backends[r] = backend;
  return c;
}

ScriptedCorpus scripted_corpus(std::size_t n, std::size_t m) {
  ScriptedCorpus out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string id = std::to_string(i);
    const std::string image = "img-" + id;
    MainQuestion q;
    q.question_id = std::to_string(9000 + i);
    q.image = {image, "images/" + image + ".jpg", std::nullopt};
    q.text = "What is object " + id + "?";
    q.gt_answers = {"answer " + id, "answer " + id, "answer " + id, "other"};
    std::vector<SubQA> gt;
    for (std::size_t p = 1; p <= m; ++p) {
      gt.push_back({static_cast<int>(p), "Is there clue " + id + "-" + std::to_string(p) + "?",
                    "fact " + id + "-" + std::to_string(p), Provenance::ground_truth});
    }
    q.gt_sub_qas = gt;
    out.samples.push_back(q);

    std::vector<std::string> priors;
    for (std::size_t turn = 1; turn <= 3; ++turn) {
      const std::string sub = "Does clue " + id + "." + std::to_string(turn) + " show?";
      out.rules.push_back(exact(image, build_questioner_prompt(q.text, priors), sub));
      out.rules.push_back(exact(image, sub, turn % 2 ? "yes" : "no"));
      priors.push_back(sub);
    }
    for (std::size_t p = 1; p <= m; ++p) {
      out.rules.push_back(exact(image, gt[p - 1].sub_question, gt[p - 1].sub_answer));
    }
    out.rules.push_back(prefix(image, kUse, i % 3 ? "Answer " + id : "something else"));
    out.rules.push_back(exact(image, build_baseline_prompt(q.text), i % 2 ? "Answer " + id : "no idea"));
  }
  return out;
}

GeneratorResponse KnowledgeGatedOracle::generate(const GeneratorRequest& request) {
  GeneratorResponse r;
  r.text = "unknown";
  if (request.role == Role::reasoner || request.role == Role::baseline) {
    const auto it = gates_.find(request.image.image_id);
    if (it != gates_.end() && request.prompt.find(it->second.needle) != std::string::npos) r.text = it->second.answer;
  }
  return r;
}

GatedCorpus gated_corpus(std::size_t n, std::size_t group, std::size_t m) {
  GatedCorpus out;
  std::map<std::string, KnowledgeGatedOracle::Gate> gates;
  for (std::size_t j = 1; j <= n; ++j) {
    const std::string id = std::to_string(j);
    MainQuestion q;
    q.question_id = id;
    q.image = {"gated-" + id, "images/gated-" + id + ".jpg", std::nullopt};
    q.text = "Which fact matters for item " + id + "?";
    q.gt_answers = {"answer " + id};
    std::vector<SubQA> gt;
    for (std::size_t p = 1; p <= m; ++p) {
      gt.push_back({static_cast<int>(p), "What is fact " + std::to_string(p) + " of item " + id + "?",
                    "fact-" + id + "-" + std::to_string(p), Provenance::ground_truth});
    }
    q.gt_sub_qas = gt;
    const int need = static_cast<int>((j + group - 1) / group);
    out.need.push_back(need);
    gates[q.image.image_id] = {"fact-" + id + "-" + std::to_string(need) + ".", "Answer " + id};
    out.samples.push_back(std::move(q));
  }
  out.oracle = std::make_shared<KnowledgeGatedOracle>(std::move(gates));
  return out;
}

GeneratorResponse PacedGenerator::generate(const GeneratorRequest& request) {
  std::this_thread::sleep_for(std::chrono::milliseconds(pause_ms_));
  return inner_->generate(request);
}

GeneratorResponse CountingGenerator::generate(const GeneratorRequest& request) {
  {
    std::lock_guard lock(mu_);
    ++calls_[request.role];
  }
  return inner_->generate(request);
}

std::size_t CountingGenerator::calls() const {
  std::lock_guard lock(mu_);
  std::size_t total = 0;
  for (const auto& [role, n] : calls_) total += n;
  return total;
}

std::size_t CountingGenerator::calls(Role role) const {
  std::lock_guard lock(mu_);
  const auto it = calls_.find(role);
  return it == calls_.end() ? 0 : it->second;
}

std::string random_answer_text(std::mt19937_64& rng) {
  static const std::array<const char*, 24> words = {
      "the", "The", "a",     "An",   "THE",   "one",     "Two",  "ten", "eleven", "dog",  "Cell", "phone",
      "a.b", "1,000", "3.5", "1.", ",2", "x-ray", "o'clock", "100%", "e.g.", "an.", "a,b",  "zero"};
  static const std::string punct = "!\"#$%&'()*+,-./:;<=>?@[\\]^_`{|}~";
  static const std::array<const char*, 5> seps = {" ", "  ", "\t", "\n", ""};
  std::uniform_int_distribution<int> count(0, 10);
  std::uniform_int_distribution<int> kind(0, 9);
  std::uniform_int_distribution<std::size_t> word(0, words.size() - 1);
  std::uniform_int_distribution<std::size_t> mark(0, punct.size() - 1);
  std::uniform_int_distribution<std::size_t> sep(0, seps.size() - 1);
  std::uniform_int_distribution<int> ascii(32, 126);
  std::uniform_int_distribution<int> digit('0', '9');
  std::string out;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    const int k = kind(rng);
    if (k < 5) out += words[word(rng)];
    else if (k < 7) out.push_back(punct[mark(rng)]);
    else if (k < 8) out.push_back(static_cast<char>(digit(rng)));
    else out.push_back(static_cast<char>(ascii(rng)));
    out += seps[sep(rng)];
  }
  return out;
}

SurfaceForm random_surface_form(std::mt19937_64& rng) {
  static const std::vector<std::vector<std::string>> forms = {
      {"limes", "Limes", "LIMES.", "  limes ", "limes!"},
      {"2 dogs", "two dogs", "The 2 dogs", "the two dogs.", "2  dogs"},
      {"yes", "Yes", "yes.", "YES!", "a yes"},
      {"no", "No", "no!", "NO."},
      {"1000", "1,000"},
      {"one thousand", "One thousand."},
      {"cell phone", "Cell phone", "cell-phone", "a cell phone"},
      {"mobile phone", "Mobile phone"},
  };
  std::uniform_int_distribution<std::size_t> group(0, forms.size() - 1);
  const std::size_t g = group(rng);
  std::uniform_int_distribution<std::size_t> form(0, forms[g].size() - 1);
  return {forms[g][form(rng)], static_cast<int>(g)};
}

double counting_oracle(int predicted, const std::vector<int>& annotations) {
  int matches = 0;
  for (int a : annotations) matches += a == predicted;
  if (annotations.size() < 3) return matches > 0 ? 1.0 : 0.0;
  return matches >= 3 ? 1.0 : matches / 3.0;
}

std::string make_temp_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  const auto dir = std::filesystem::temp_directory_path() /
                   ("sq-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir.string();
}

}  // namespace sq::testing
