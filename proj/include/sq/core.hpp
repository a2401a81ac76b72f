#pragma once

// Domain types for a self-questioning VQA dialogue and the prompt builders
// for each pipeline role.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sq/error.hpp"

namespace sq {

enum class Role { questioner, answerer, reasoner, baseline };
enum class Provenance { generated, ground_truth, scripted };

std::string_view to_string(Role role);
std::string_view to_string(Provenance provenance);
Role role_from_string(std::string_view text);
Provenance provenance_from_string(std::string_view text);

struct ImageRef {
  std::string image_id;
  std::string locator;                 // file path or URI
  std::optional<std::string> payload;  // raw bytes

  bool resolvable() const { return !locator.empty() || payload.has_value(); }

  friend bool operator==(const ImageRef&, const ImageRef&) = default;
};

struct SubQA {
  int index = 0;  // 1-based position in its containing list
  std::string sub_question;
  std::string sub_answer;
  Provenance provenance = Provenance::generated;

  friend bool operator==(const SubQA&, const SubQA&) = default;
};

inline constexpr std::size_t kChoiceCount = 4;

struct MainQuestion {
  std::string question_id;
  ImageRef image;
  std::string text;
  std::vector<std::string> gt_answers;
  std::optional<std::vector<std::string>> choices;
  std::optional<int> correct_choice_index;
  std::optional<std::vector<SubQA>> gt_sub_qas;

  friend bool operator==(const MainQuestion&, const MainQuestion&) = default;
};

// Throws Error(invalid_input) naming the violated invariant.
void validate(const MainQuestion& question);

struct TranscriptEntry {
  Role role = Role::questioner;
  std::string prompt;
  std::string response;

  friend bool operator==(const TranscriptEntry&, const TranscriptEntry&) = default;
};

struct Dialogue {
  MainQuestion main;
  std::vector<SubQA> sub_qas;
  std::optional<std::string> final_answer;
  std::vector<TranscriptEntry> transcript;
  // Set when the questioner kept repeating a prior sub-question and the
  // duplicate was accepted after retries ran out.
  bool duplicate_flag = false;
  // Set when a backend call aborted the dialogue; transcript is partial.
  std::optional<std::string> error;

  friend bool operator==(const Dialogue&, const Dialogue&) = default;
};

// Prompt builders. All are pure and throw Error(invalid_input) on empty
// question text or malformed sub-QA lists.

std::string build_questioner_prompt(std::string_view question,
                                    std::span<const std::string> prior_sub_questions);

std::string build_answerer_prompt(std::string_view sub_question);

// Falls back to build_baseline_prompt when sub_qas is empty.
std::string build_reasoner_prompt(std::string_view question, std::span<const SubQA> sub_qas);

std::string build_baseline_prompt(std::string_view question);

// Inserts "Choices: c0, c1, c2, c3." before the trailing answer cue. Only
// used when multiple-choice options are put in the prompt explicitly.
std::string with_choices(std::string_view prompt, std::span<const std::string> choices);

}  // namespace sq
