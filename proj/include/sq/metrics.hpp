#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sq {

enum class MetricKind { exact, vqa_soft, mc, direct_answer };

std::string_view to_string(MetricKind kind);
// Accepts both "vqa_soft" and the CLI spelling "vqa-soft"; "direct" is an
// alias of "direct_answer".
MetricKind metric_from_string(std::string_view text);

struct EvalResult {
  std::string question_id;
  double score = 0.0;
  MetricKind metric = MetricKind::exact;
  std::string predicted;
  // Present iff metric == mc; -1 when the dialogue errored before answering.
  std::optional<int> selected_choice_index;

  friend bool operator==(const EvalResult&, const EvalResult&) = default;
};

// Lowercase, punctuation strip (commas inside digit groups are dropped,
// decimal points between digits are kept), article removal, number words
// zero..ten to digits, whitespace collapse. Idempotent.
std::string normalize_answer(std::string_view text);

double exact_match(std::string_view predicted, std::string_view ground_truth);

// min(matches / 3, 1). With fewer than three annotations a single match
// scores 1. Throws on an empty annotation list.
double vqa_soft_accuracy(std::string_view predicted, std::span<const std::string> annotations);

// min(matches / 3, 1) over the direct answers. Throws when empty.
double direct_answer_accuracy(std::string_view predicted,
                              std::span<const std::string> direct_answers);

// Similarity of a free-form generation to one answer choice: 2 for
// normalized equality, 1 when either token set contains the other, otherwise
// the Jaccard overlap of the token sets (always < 1 in that branch).
double choice_similarity(std::string_view generated, std::string_view choice);

// Index of the most similar choice; ties go to the lowest index.
int mc_select(std::string_view generated, std::span<const std::string> choices);

// Most frequent normalized answer, ties broken by first occurrence. Used as
// the single reference for exact-match scoring.
std::string majority_answer(std::span<const std::string> answers);

// 100 * mean(score). Unrounded; use format_percentage for display. Throws on
// empty input or mixed metric kinds.
double aggregate(std::span<const EvalResult> results);

// Two decimals, round-half-up.
std::string format_percentage(double value);

}  // namespace sq
