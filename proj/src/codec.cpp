#include "codec.hpp"

namespace sq::detail {

namespace {

SubQA sub_qa_from_json(const json& p) {
  return {p.at("index").get<int>(), p.at("sub_question").get<std::string>(), p.at("sub_answer").get<std::string>(),
          provenance_from_string(p.at("provenance").get<std::string>())};
}

json sub_qa_to_json(const SubQA& qa) {
  json p;
  p["index"] = qa.index;
  p["sub_question"] = qa.sub_question;
  p["sub_answer"] = qa.sub_answer;
  p["provenance"] = to_string(qa.provenance);
  return p;
}

}  // namespace

json sample_to_json(const MainQuestion& sample) {
  json j;
  j["question_id"] = sample.question_id;
  j["image_id"] = sample.image.image_id;
  j["question"] = sample.text;
  j["gt_answers"] = sample.gt_answers;
  j["choices"] = sample.choices ? json(*sample.choices) : json(nullptr);
  j["correct_choice_index"] = sample.correct_choice_index ? json(*sample.correct_choice_index) : json(nullptr);
  if (sample.gt_sub_qas) {
    json pairs = json::array();
    for (const SubQA& qa : *sample.gt_sub_qas) pairs.push_back(sub_qa_to_json(qa));
    j["gt_sub_qas"] = std::move(pairs);
  } else {
    j["gt_sub_qas"] = nullptr;
  }
  return j;
}

MainQuestion sample_from_json(const json& j) {
  MainQuestion q;
  q.question_id = j.at("question_id").get<std::string>();
  q.image.image_id = j.at("image_id").get<std::string>();
  q.image.locator = q.image.image_id;
  q.text = j.at("question").get<std::string>();
  q.gt_answers = j.at("gt_answers").get<std::vector<std::string>>();
  if (!j.at("choices").is_null()) q.choices = j["choices"].get<std::vector<std::string>>();
  if (!j.at("correct_choice_index").is_null()) q.correct_choice_index = j["correct_choice_index"].get<int>();
  if (!j.at("gt_sub_qas").is_null()) {
    std::vector<SubQA> pairs;
    for (const json& p : j["gt_sub_qas"]) pairs.push_back(sub_qa_from_json(p));
    q.gt_sub_qas = std::move(pairs);
  }
  return q;
}

json dialogue_to_json(const Dialogue& dialogue) {
  json j;
  j["main"] = sample_to_json(dialogue.main);
  j["image_locator"] = dialogue.main.image.locator;
  json pairs = json::array();
  for (const SubQA& qa : dialogue.sub_qas) pairs.push_back(sub_qa_to_json(qa));
  j["sub_qas"] = std::move(pairs);
  j["final_answer"] = dialogue.final_answer ? json(*dialogue.final_answer) : json(nullptr);
  json transcript = json::array();
  for (const TranscriptEntry& t : dialogue.transcript) {
    json e;
    e["role"] = to_string(t.role);
    e["prompt"] = t.prompt;
    e["response"] = t.response;
    transcript.push_back(std::move(e));
  }
  j["transcript"] = std::move(transcript);
  j["duplicate_flag"] = dialogue.duplicate_flag;
  j["error"] = dialogue.error ? json(*dialogue.error) : json(nullptr);
  return j;
}

Dialogue dialogue_from_json(const json& j) {
  Dialogue d;
  d.main = sample_from_json(j.at("main"));
  d.main.image.locator = j.at("image_locator").get<std::string>();
  for (const json& p : j.at("sub_qas")) d.sub_qas.push_back(sub_qa_from_json(p));
  if (!j.at("final_answer").is_null()) d.final_answer = j["final_answer"].get<std::string>();
  for (const json& e : j.at("transcript")) {
    d.transcript.push_back({role_from_string(e.at("role").get<std::string>()), e.at("prompt").get<std::string>(),
                            e.at("response").get<std::string>()});
  }
  d.duplicate_flag = j.at("duplicate_flag").get<bool>();
  if (!j.at("error").is_null()) d.error = j["error"].get<std::string>();
  return d;
}

json eval_to_json(const EvalResult& result) {
  json j;
  j["question_id"] = result.question_id;
  j["metric"] = to_string(result.metric);
  j["score"] = result.score;
  j["predicted"] = result.predicted;
  j["selected_choice_index"] = result.selected_choice_index ? json(*result.selected_choice_index) : json(nullptr);
  return j;
}

EvalResult eval_from_json(const json& j) {
  EvalResult r;
  r.question_id = j.at("question_id").get<std::string>();
  r.metric = metric_from_string(j.at("metric").get<std::string>());
  r.score = j.at("score").get<double>();
  r.predicted = j.at("predicted").get<std::string>();
  if (!j.at("selected_choice_index").is_null()) r.selected_choice_index = j["selected_choice_index"].get<int>();
  return r;
}

json params_to_json(const GenerationParams& params) {
  json j;
  j["beam_width"] = params.beam_width;
  j["max_new_tokens"] = params.max_new_tokens;
  j["min_new_tokens"] = params.min_new_tokens;
  j["temperature"] = params.temperature;
  j["seed"] = params.seed ? json(*params.seed) : json(nullptr);
  return j;
}

}  // namespace sq::detail
