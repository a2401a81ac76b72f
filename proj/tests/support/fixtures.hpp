#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include "sq/backends.hpp"
#include "sq/core.hpp"
#include "sq/pipeline.hpp"

namespace sq::testing {

inline constexpr const char* kVaseQuestion = "What is at the base of the vase?";
inline constexpr const char* kLimesQuestion = "Are there limes in the vase?";
inline constexpr const char* kPancakeQuestion = "If the pancake was missing a piece?";
inline constexpr const char* kPancakeMain = "How many pieces of pancake are left on the plate?";

struct GoldenPrompt {
  std::string name;
  std::function<std::string()> build;
  std::string expected;
};

// Hand-written expected strings for every prompt builder.
std::vector<GoldenPrompt> golden_prompts();

MainQuestion vase_sample();
MainQuestion pancake_sample();
std::vector<ScriptRule> vase_rules();
std::vector<ScriptRule> pancake_rules();

// Binds one generator to every role.
PipelineConfig config_with(std::shared_ptr<Generator> backend, SubQAMode mode, SubQuestionCount k);

// n samples with m ground-truth pairs each, plus a script that answers
// questioner/answerer/reasoner/baseline prompts for every sample.
struct ScriptedCorpus {
  std::vector<MainQuestion> samples;
  std::vector<ScriptRule> rules;
};
ScriptedCorpus scripted_corpus(std::size_t n, std::size_t pairs = 3);

// Answers the reasoner correctly only when the sample's required fact is
// among the supplied pairs; anything else gets "unknown".
class KnowledgeGatedOracle final : public Generator {
 public:
  struct Gate {
    std::string needle;
    std::string answer;
  };
  explicit KnowledgeGatedOracle(std::map<std::string, Gate> gates) : gates_(std::move(gates)) {}

  GeneratorResponse generate(const GeneratorRequest& request) override;
  std::string describe() const override { return "knowledge-gated"; }

 private:
  std::map<std::string, Gate> gates_;
};

struct GatedCorpus {
  std::vector<MainQuestion> samples;
  std::vector<int> need;  // 1-based pair index sample j depends on
  std::shared_ptr<KnowledgeGatedOracle> oracle;
};
// Sample j (1-based) needs pair ceil(j / group); every sample carries
// `pairs` ground-truth pairs.
GatedCorpus gated_corpus(std::size_t n, std::size_t group, std::size_t pairs);

// Forwards to another generator after a fixed pause.
class PacedGenerator final : public Generator {
 public:
  PacedGenerator(std::shared_ptr<Generator> inner, int pause_ms) : inner_(std::move(inner)), pause_ms_(pause_ms) {}
  GeneratorResponse generate(const GeneratorRequest& request) override;
  std::string describe() const override { return inner_->describe(); }

 private:
  std::shared_ptr<Generator> inner_;
  int pause_ms_;
};

// Counts calls per role, forwarding to another generator.
class CountingGenerator final : public Generator {
 public:
  explicit CountingGenerator(std::shared_ptr<Generator> inner) : inner_(std::move(inner)) {}
  GeneratorResponse generate(const GeneratorRequest& request) override;
  std::string describe() const override { return inner_->describe(); }
  std::size_t calls() const;
  std::size_t calls(Role role) const;

 private:
  std::shared_ptr<Generator> inner_;
  mutable std::mutex mu_;
  std::map<Role, std::size_t> calls_;
};

// Random printable-ish text with punctuation, digits, articles and number
// words mixed in; used to fuzz the normalizer.
std::string random_answer_text(std::mt19937_64& rng);

// A surface form of one of a handful of answers; forms that share `answer`
// are expected to normalize to the same string.
struct SurfaceForm {
  std::string text;
  int answer = 0;
};
SurfaceForm random_surface_form(std::mt19937_64& rng);

// Independent reference for min(matches / 3, 1) with the fewer-than-three
// rule, counted over answer ids instead of strings.
double counting_oracle(int predicted, const std::vector<int>& annotations);

std::string make_temp_dir(const std::string& tag);

}  // namespace sq::testing
