#include "sq/core.hpp"

namespace sq {

namespace {

constexpr std::string_view kQuestionerFirst =
    "Generate 1 sub-question about image that will help answer the main-question, "
    "when main-question is '";
constexpr std::string_view kQuestionerFollowup =
    "Create a question that asks about different information than the following questions.";
constexpr std::string_view kReasonerInstruction =
    "Use the following Q&A results to answer the main-question. If it's not useful, just ignore it.";
constexpr std::string_view kBaselineLead = "main-question: ";
constexpr std::string_view kAnswerCue = " A:";

void require_text(std::string_view text, std::string_view what) {
  if (text.empty()) {
    throw Error(ErrorKind::invalid_input, std::string(what) + " must be non-empty");
  }
}

}  // namespace

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid_input";
    case ErrorKind::backend_unavailable: return "backend_unavailable";
    case ErrorKind::request_rejected: return "request_rejected";
    case ErrorKind::malformed_response: return "malformed_response";
    case ErrorKind::timeout: return "timeout";
    case ErrorKind::script_miss: return "script_miss";
    case ErrorKind::parse: return "parse";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

std::string_view to_string(Role role) {
  switch (role) {
    case Role::questioner: return "questioner";
    case Role::answerer: return "answerer";
    case Role::reasoner: return "reasoner";
    case Role::baseline: return "baseline";
  }
  return "unknown";
}

std::string_view to_string(Provenance provenance) {
  switch (provenance) {
    case Provenance::generated: return "generated";
    case Provenance::ground_truth: return "ground_truth";
    case Provenance::scripted: return "scripted";
  }
  return "unknown";
}

Role role_from_string(std::string_view text) {
  for (Role r : {Role::questioner, Role::answerer, Role::reasoner, Role::baseline}) {
    if (to_string(r) == text) return r;
  }
  throw Error(ErrorKind::invalid_input, "unknown role '" + std::string(text) + "'");
}

Provenance provenance_from_string(std::string_view text) {
  for (Provenance p : {Provenance::generated, Provenance::ground_truth, Provenance::scripted}) {
    if (to_string(p) == text) return p;
  }
  throw Error(ErrorKind::invalid_input, "unknown provenance '" + std::string(text) + "'");
}

void validate(const MainQuestion& question) {
  const std::string where = "question " + question.question_id + ": ";
  if (question.text.empty()) {
    throw Error(ErrorKind::invalid_input, where + "text is empty");
  }
  if (question.image.image_id.empty()) {
    throw Error(ErrorKind::invalid_input, where + "image_id is empty");
  }
  if (question.choices) {
    if (question.choices->size() != kChoiceCount) {
      throw Error(ErrorKind::invalid_input, where + "expected 4 choices, got " +
                                                std::to_string(question.choices->size()));
    }
    if (!question.correct_choice_index || *question.correct_choice_index < 0 ||
        *question.correct_choice_index > 3) {
      throw Error(ErrorKind::invalid_input, where + "correct_choice_index must be in [0,3]");
    }
  } else if (question.correct_choice_index) {
    throw Error(ErrorKind::invalid_input, where + "correct_choice_index without choices");
  }
  if (question.gt_sub_qas) {
    int expected = 1;
    for (const SubQA& qa : *question.gt_sub_qas) {
      if (qa.index != expected++) {
        throw Error(ErrorKind::invalid_input, where + "gt_sub_qas indices are not 1..m contiguous");
      }
      if (qa.sub_question.empty() || qa.sub_answer.empty()) {
        throw Error(ErrorKind::invalid_input, where + "gt_sub_qas entry " +
                                                  std::to_string(qa.index) + " is incomplete");
      }
    }
  }
}

std::string build_questioner_prompt(std::string_view question,
                                    std::span<const std::string> prior_sub_questions) {
  require_text(question, "main-question");
  std::string out;
  out.append(kQuestionerFirst).append(question).push_back('\'');
  if (prior_sub_questions.empty()) return out;

  out.push_back(' ');
  out.append(kQuestionerFollowup);
  out.push_back(' ');
  for (std::size_t i = 0; i < prior_sub_questions.size(); ++i) {
    require_text(prior_sub_questions[i], "prior sub-question");
    if (i > 0) out.append(", ");
    out.append(prior_sub_questions[i]);
  }
  out.push_back('.');
  return out;
}

std::string build_answerer_prompt(std::string_view sub_question) {
  require_text(sub_question, "sub-question");
  return std::string(sub_question);
}

std::string build_baseline_prompt(std::string_view question) {
  require_text(question, "main-question");
  std::string out;
  out.append(kBaselineLead).append(question).append(kAnswerCue);
  return out;
}

std::string build_reasoner_prompt(std::string_view question, std::span<const SubQA> sub_qas) {
  require_text(question, "main-question");
  if (sub_qas.empty()) return build_baseline_prompt(question);

  std::string out(kReasonerInstruction);
  int expected = 1;
  for (const SubQA& qa : sub_qas) {
    if (qa.index != expected++) {
      throw Error(ErrorKind::invalid_input, "sub-QA list is not in index order");
    }
    if (qa.sub_question.empty()) {
      throw Error(ErrorKind::invalid_input, "sub-QA " + std::to_string(qa.index) + " has no question");
    }
    if (qa.sub_answer.empty()) {
      throw Error(ErrorKind::invalid_input, "sub-QA " + std::to_string(qa.index) + " is unanswered");
    }
    out.push_back(' ');
    out.append(qa.sub_question).push_back(' ');
    out.append(qa.sub_answer).push_back('.');
  }
  out.push_back(' ');
  out.append(build_baseline_prompt(question));
  return out;
}

std::string with_choices(std::string_view prompt, std::span<const std::string> choices) {
  if (!prompt.ends_with(kAnswerCue)) {
    throw Error(ErrorKind::invalid_input, "prompt does not end with the answer cue");
  }
  std::string out(prompt.substr(0, prompt.size() - kAnswerCue.size()));
  out.append(" Choices: ");
  for (std::size_t i = 0; i < choices.size(); ++i) {
    if (i > 0) out.append(", ");
    out.append(choices[i]);
  }
  out.push_back('.');
  out.append(kAnswerCue);
  return out;
}

}  // namespace sq
