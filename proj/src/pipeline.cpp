#include "sq/pipeline.hpp"

#include <algorithm>
#include <charconv>

#include "sq/metrics.hpp"

namespace sq {

SubQuestionCount SubQuestionCount::parse(std::string_view text) {
  if (text == "max" || text == "Max" || text == "MAX") return max();
  int k = 0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), k);
  if (ec != std::errc() || ptr != text.data() + text.size() || k < 0) {
    throw Error(ErrorKind::invalid_input, "k must be a non-negative integer or 'max', got '" + std::string(text) + "'");
  }
  return SubQuestionCount(k);
}

std::string SubQuestionCount::str() const { return is_max() ? "max" : std::to_string(k_); }

std::string_view to_string(SubQAMode mode) {
  switch (mode) {
    case SubQAMode::generated: return "generated";
    case SubQAMode::ground_truth: return "ground_truth";
    case SubQAMode::none: return "none";
  }
  return "none";
}

SubQAMode mode_from_string(std::string_view text) {
  if (text == "generated") return SubQAMode::generated;
  if (text == "ground_truth" || text == "ground-truth") return SubQAMode::ground_truth;
  if (text == "none") return SubQAMode::none;
  throw Error(ErrorKind::invalid_input, "unknown mode '" + std::string(text) + "'");
}

const GenerationParams& PipelineConfig::params_for(Role role) const {
  if (auto it = params.find(role); it != params.end()) return it->second;
  if (role == Role::baseline) {
    if (auto it = params.find(Role::reasoner); it != params.end()) return it->second;
  }
  return default_params;
}

Generator* PipelineConfig::backend_for(Role role) const {
  if (auto it = backends.find(role); it != backends.end() && it->second) return it->second.get();
  if (role == Role::baseline) return backend_for(Role::reasoner);
  return nullptr;
}

void PipelineConfig::validate() const {
  if (dedup_retries < 0) throw Error(ErrorKind::invalid_input, "dedup_retries must be >= 0");
  if (!k.is_max() && k.value() < 0) throw Error(ErrorKind::invalid_input, "k must be >= 0");
  if (mode == SubQAMode::none && k != SubQuestionCount(0)) {
    throw Error(ErrorKind::invalid_input, "mode none requires k = 0");
  }
  if (k.is_max() && mode != SubQAMode::ground_truth) {
    throw Error(ErrorKind::invalid_input, "k = max is only valid in ground_truth mode");
  }
  default_params.validate();
  for (const auto& [role, p] : params) p.validate();

  std::vector<Role> needed;
  switch (mode) {
    case SubQAMode::generated: needed = {Role::questioner, Role::answerer, Role::reasoner}; break;
    case SubQAMode::ground_truth: needed = {Role::reasoner}; break;
    case SubQAMode::none: needed = {Role::baseline}; break;
  }
  for (Role r : needed) {
    if (backend_for(r) == nullptr) {
      throw Error(ErrorKind::invalid_input, "no backend bound for role " + std::string(to_string(r)));
    }
  }
}

DedupVerdict dedup_subquestion(std::string_view candidate, std::span<const std::string> priors, int retries_left) {
  const std::string norm = normalize_answer(candidate);
  const bool duplicate =
      std::any_of(priors.begin(), priors.end(), [&](const std::string& p) { return normalize_answer(p) == norm; });
  if (!duplicate) return DedupVerdict::accept;
  return retries_left > 0 ? DedupVerdict::retry : DedupVerdict::accept_with_flag;
}

std::vector<SubQA> take_ground_truth(const MainQuestion& sample, SubQuestionCount k) {
  if (!sample.gt_sub_qas) {
    throw Error(ErrorKind::invalid_input, "question " + sample.question_id + " has no ground-truth sub-QAs");
  }
  const auto& all = *sample.gt_sub_qas;
  const std::size_t take = k.is_max() ? all.size() : std::min<std::size_t>(all.size(), static_cast<std::size_t>(k.value()));
  std::vector<SubQA> out(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take));
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i].index = static_cast<int>(i) + 1;
    out[i].provenance = Provenance::ground_truth;
  }
  return out;
}

namespace {

class DialogueRunner {
 public:
  DialogueRunner(const MainQuestion& sample, const PipelineConfig& config) : config_(config) {
    dialogue_.main = sample;
  }

  Dialogue run() {
    switch (config_.mode) {
      case SubQAMode::generated: run_generated(); break;
      case SubQAMode::ground_truth:
        dialogue_.sub_qas = take_ground_truth(dialogue_.main, config_.k);
        reason(Role::reasoner);
        break;
      case SubQAMode::none: reason(Role::baseline); break;
    }
    return std::move(dialogue_);
  }

 private:
  // Issues one backend call and records it. Returns nullopt after marking
  // the dialogue as errored.
  std::optional<std::string> call(Role role, const std::string& prompt, const GenerationParams& params) {
    GeneratorRequest request{dialogue_.main.image, prompt, params, role};
    try {
      GeneratorResponse response = config_.backend_for(role)->generate(request);
      if (response.finish_reason == FinishReason::error) {
        throw Error(ErrorKind::malformed_response, "backend reported finish_reason=error");
      }
      std::string text = trim(response.text);
      if (text.empty()) throw Error(ErrorKind::malformed_response, "backend returned empty text");
      dialogue_.transcript.push_back({role, prompt, text});
      return text;
    } catch (const Error& e) {
      dialogue_.error = std::string(to_string(role)) + ": " + std::string(to_string(e.kind())) + ": " + e.what();
    } catch (const std::exception& e) {
      dialogue_.error = std::string(to_string(role)) + ": " + e.what();
    }
    return std::nullopt;
  }

  void run_generated() {
    const std::string& q = dialogue_.main.text;
    const Provenance provenance = config_.backend_for(Role::questioner)->describe().starts_with("scripted:")
                                      ? Provenance::scripted
                                      : Provenance::generated;
    std::vector<std::string> priors;
    for (int i = 1; i <= config_.k.value(); ++i) {
      const std::string prompt = build_questioner_prompt(q, priors);
      GenerationParams params = config_.params_for(Role::questioner);
      int retries_left = config_.dedup_retries;
      std::optional<std::string> sub_question;
      while (true) {
        sub_question = call(Role::questioner, prompt, params);
        if (!sub_question) return;
        const DedupVerdict verdict = dedup_subquestion(*sub_question, priors, retries_left);
        if (verdict == DedupVerdict::accept) break;
        if (verdict == DedupVerdict::accept_with_flag) {
          dialogue_.duplicate_flag = true;
          break;
        }
        --retries_left;
        if (params.seed) ++*params.seed;
      }

      const auto answer = call(Role::answerer, build_answerer_prompt(*sub_question), config_.params_for(Role::answerer));
      if (!answer) return;
      dialogue_.sub_qas.push_back({i, *sub_question, *answer, provenance});
      priors.push_back(*sub_question);
    }
    reason(Role::reasoner);
  }

  void reason(Role role) {
    std::string prompt = role == Role::baseline ? build_baseline_prompt(dialogue_.main.text)
                                                : build_reasoner_prompt(dialogue_.main.text, dialogue_.sub_qas);
    if (config_.choices_in_prompt && dialogue_.main.choices) prompt = with_choices(prompt, *dialogue_.main.choices);
    if (auto answer = call(role, prompt, config_.params_for(role))) dialogue_.final_answer = std::move(answer);
  }

  const PipelineConfig& config_;
  Dialogue dialogue_;
};

}  // namespace

Dialogue run_dialogue(const MainQuestion& sample, const PipelineConfig& config) {
  config.validate();
  validate(sample);
  if (config.mode == SubQAMode::ground_truth && !sample.gt_sub_qas) {
    throw Error(ErrorKind::invalid_input, "question " + sample.question_id + " has no ground-truth sub-QAs");
  }
  return DialogueRunner(sample, config).run();
}

}  // namespace sq
