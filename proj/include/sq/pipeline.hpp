#pragma once

#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sq/backends.hpp"
#include "sq/core.hpp"

namespace sq {

// Number of sub-QAs per dialogue: a fixed count or every available
// ground-truth pair ("max").
class SubQuestionCount {
 public:
  constexpr SubQuestionCount(int k = 0) : k_(k) {}  // NOLINT(google-explicit-constructor)
  static constexpr SubQuestionCount max() { return SubQuestionCount(kMax); }
  static SubQuestionCount parse(std::string_view text);

  constexpr bool is_max() const { return k_ == kMax; }
  constexpr int value() const { return k_; }
  std::string str() const;

  friend constexpr bool operator==(SubQuestionCount, SubQuestionCount) = default;

 private:
  static constexpr int kMax = -1;
  int k_;
};

enum class SubQAMode { generated, ground_truth, none };

std::string_view to_string(SubQAMode mode);
// Accepts "ground_truth" and "ground-truth".
SubQAMode mode_from_string(std::string_view text);

struct PipelineConfig {
  SubQuestionCount k = 3;
  SubQAMode mode = SubQAMode::generated;
  int dedup_retries = 2;
  GenerationParams default_params;
  std::map<Role, GenerationParams> params;  // per-role overrides
  // The baseline role falls back to the reasoner binding.
  std::map<Role, std::shared_ptr<Generator>> backends;
  // Appends the four answer choices to the reasoner prompt.
  bool choices_in_prompt = false;

  const GenerationParams& params_for(Role role) const;
  Generator* backend_for(Role role) const;

  // Throws Error(invalid_input) on inconsistent settings or missing bindings.
  void validate() const;
};

enum class DedupVerdict { accept, retry, accept_with_flag };

// Compares normalized answers; only exact duplicates count.
DedupVerdict dedup_subquestion(std::string_view candidate, std::span<const std::string> priors,
                               int retries_left);

// First min(k, m) ground-truth pairs, reindexed from 1.
std::vector<SubQA> take_ground_truth(const MainQuestion& sample, SubQuestionCount k);

// Runs one self-questioning dialogue. Backend failures do not throw: the
// dialogue comes back with error set and the transcript up to the failing
// call. Configuration problems throw Error(invalid_input).
Dialogue run_dialogue(const MainQuestion& sample, const PipelineConfig& config);

}  // namespace sq
