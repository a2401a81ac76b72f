#include "sq/datasets.hpp"

#include <algorithm>
#include <fstream>
#include <json.hpp>
#include <set>

#include "codec.hpp"
#include "util.hpp"

namespace sq {

using json = nlohmann::ordered_json;

namespace {

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

json parse_json(std::string_view text, std::string_view source) {
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string(source) + ":" +
                                      std::to_string(detail::line_of_offset(text, e.byte)) + ": " + e.what());
  }
}

[[noreturn]] void missing(std::string_view source, const std::string& path, const std::string& field) {
  throw Error(ErrorKind::parse, std::string(source) + ": " + path + ": missing or invalid field '" + field + "'");
}

std::string string_field(const json& obj, const char* name, std::string_view source, const std::string& path) {
  if (!obj.contains(name) || !obj[name].is_string()) missing(source, path, name);
  return obj[name].get<std::string>();
}

// Ids show up as either numbers or strings in the upstream releases.
std::string id_field(const json& obj, const char* name, std::string_view source, const std::string& path) {
  if (obj.contains(name)) {
    const json& v = obj[name];
    if (v.is_string() && !v.get<std::string>().empty()) return v.get<std::string>();
    if (v.is_number_integer()) return std::to_string(v.get<long long>());
  }
  missing(source, path, name);
}

std::vector<std::string> answer_list(const json& v) {
  std::vector<std::string> out;
  if (!v.is_array()) return out;
  for (const json& a : v) {
    if (a.is_string()) out.push_back(a.get<std::string>());
    else if (a.is_object() && a.contains("answer") && a["answer"].is_string()) out.push_back(a["answer"].get<std::string>());
  }
  return out;
}

template <typename Record, typename Key>
void sort_by_id(std::vector<Record>& records, Key key) {
  std::stable_sort(records.begin(), records.end(),
                   [&](const Record& a, const Record& b) { return question_id_less(key(a), key(b)); });
}

}  // namespace

bool question_id_less(std::string_view a, std::string_view b) {
  const bool da = all_digits(a);
  const bool db = all_digits(b);
  if (da != db) return da;
  if (da) {
    const auto strip = [](std::string_view s) {
      const auto nz = s.find_first_not_of('0');
      return nz == std::string_view::npos ? std::string_view("0") : s.substr(nz);
    };
    const auto sa = strip(a);
    const auto sb = strip(b);
    if (sa.size() != sb.size()) return sa.size() < sb.size();
    if (sa != sb) return sa < sb;
  }
  return a < b;
}

Loaded<IntrospectRecord> parse_introspect(std::string_view json_text, std::string_view source) {
  const json doc = parse_json(json_text, source);
  if (!doc.is_object()) throw Error(ErrorKind::parse, std::string(source) + ": expected a top-level object");

  Loaded<IntrospectRecord> out;
  std::set<std::string> images;
  for (const auto& [qid, entry] : doc.items()) {
    const std::string path = "/" + qid;
    if (!entry.is_object()) throw Error(ErrorKind::parse, std::string(source) + ": " + path + ": expected an object");
    IntrospectRecord rec;
    rec.question_id = qid;
    rec.image_id = id_field(entry, "image_id", source, path);
    rec.reasoning_question = string_field(entry, "reasoning_question", source, path);
    if (rec.reasoning_question.empty()) missing(source, path, "reasoning_question");
    rec.reasoning_answer_most_common = string_field(entry, "reasoning_answer_most_common", source, path);
    if (entry.contains("reasoning_answers")) rec.all_answers = answer_list(entry["reasoning_answers"]);
    else if (entry.contains("all_answers")) rec.all_answers = answer_list(entry["all_answers"]);

    if (!entry.contains("introspect") || !entry["introspect"].is_array()) missing(source, path, "introspect");
    std::set<std::string> seen;
    for (const json& annotation : entry["introspect"]) {
      if (!annotation.is_object() || !annotation.contains("sub_qa")) continue;
      const json& pairs = annotation["sub_qa"];
      if (!pairs.is_array()) continue;
      for (const json& pair : pairs) {
        if (!pair.is_object()) continue;
        const std::string sq = pair.value("sub_question", "");
        const std::string sa = pair.value("sub_answer", "");
        if (sq.empty() || sa.empty()) continue;
        if (!seen.insert(sq).second) continue;
        rec.sub_qas.emplace_back(sq, sa);
      }
    }
    out.stats.sub_qas += rec.sub_qas.size();
    images.insert(rec.image_id);
    out.records.push_back(std::move(rec));
  }
  sort_by_id(out.records, [](const IntrospectRecord& r) -> const std::string& { return r.question_id; });
  out.stats.records = out.records.size();
  out.stats.images = images.size();
  return out;
}

Loaded<IntrospectRecord> load_introspect(const std::string& path) {
  return parse_introspect(detail::read_file(path), path);
}

Loaded<AOKVQARecord> parse_aokvqa(std::string_view json_text, std::string_view source) {
  const json doc = parse_json(json_text, source);
  if (!doc.is_array()) throw Error(ErrorKind::parse, std::string(source) + ": expected a top-level array");

  Loaded<AOKVQARecord> out;
  std::set<std::string> images;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& entry = doc[i];
    std::string path = "/" + std::to_string(i);
    if (!entry.is_object()) throw Error(ErrorKind::parse, std::string(source) + ": " + path + ": expected an object");
    AOKVQARecord rec;
    rec.question_id = id_field(entry, "question_id", source, path);
    path += " (question " + rec.question_id + ")";
    rec.image_id = id_field(entry, "image_id", source, path);
    rec.question = string_field(entry, "question", source, path);
    if (rec.question.empty()) missing(source, path, "question");

    if (!entry.contains("choices") || !entry["choices"].is_array()) missing(source, path, "choices");
    for (const json& c : entry["choices"]) {
      if (!c.is_string()) missing(source, path, "choices");
      rec.choices.push_back(c.get<std::string>());
    }
    if (rec.choices.size() != kChoiceCount) {
      throw Error(ErrorKind::parse, std::string(source) + ": " + path + ": expected 4 choices, got " +
                                        std::to_string(rec.choices.size()));
    }
    if (!entry.contains("correct_choice_idx") || !entry["correct_choice_idx"].is_number_integer()) {
      missing(source, path, "correct_choice_idx");
    }
    const long long idx = entry["correct_choice_idx"].get<long long>();
    if (idx < 0 || idx > 3) {
      throw Error(ErrorKind::parse, std::string(source) + ": " + path + ": correct_choice_idx out of range");
    }
    rec.correct_choice_index = static_cast<int>(idx);
    if (entry.contains("direct_answers")) rec.direct_answers = answer_list(entry["direct_answers"]);
    if (entry.contains("difficult_direct_answer") && entry["difficult_direct_answer"].is_boolean()) {
      rec.difficult_direct_answer = entry["difficult_direct_answer"].get<bool>();
    }
    images.insert(rec.image_id);
    out.records.push_back(std::move(rec));
  }
  sort_by_id(out.records, [](const AOKVQARecord& r) -> const std::string& { return r.question_id; });
  out.stats.records = out.records.size();
  out.stats.images = images.size();
  return out;
}

Loaded<AOKVQARecord> load_aokvqa(const std::string& path) { return parse_aokvqa(detail::read_file(path), path); }

MainQuestion to_canonical(const IntrospectRecord& record) {
  MainQuestion q;
  q.question_id = record.question_id;
  q.image = {record.image_id, record.image_id, std::nullopt};
  q.text = record.reasoning_question;
  q.gt_answers = record.all_answers;
  if (q.gt_answers.empty() && !record.reasoning_answer_most_common.empty()) {
    q.gt_answers.push_back(record.reasoning_answer_most_common);
  }
  std::vector<SubQA> pairs;
  for (const auto& [sq, sa] : record.sub_qas) {
    pairs.push_back({static_cast<int>(pairs.size()) + 1, sq, sa, Provenance::ground_truth});
  }
  q.gt_sub_qas = std::move(pairs);
  validate(q);
  return q;
}

MainQuestion to_canonical(const AOKVQARecord& record) {
  MainQuestion q;
  q.question_id = record.question_id;
  q.image = {record.image_id, record.image_id, std::nullopt};
  q.text = record.question;
  q.gt_answers = record.direct_answers;
  q.choices = record.choices;
  q.correct_choice_index = record.correct_choice_index;
  validate(q);
  return q;
}

std::string canonical_line(const MainQuestion& sample) { return detail::sample_to_json(sample).dump(); }

std::string to_canonical_jsonl(std::span<const MainQuestion> samples) {
  std::string out;
  for (const MainQuestion& s : samples) out += canonical_line(s) + "\n";
  return out;
}

std::vector<MainQuestion> parse_canonical_jsonl(std::string_view text, std::string_view source) {
  std::vector<MainQuestion> out;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start < text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    const std::string_view line = text.substr(start, end - start);
    start = end + 1;
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string_view::npos) continue;

    const std::string where = std::string(source) + ":" + std::to_string(line_no);
    try {
      MainQuestion q = detail::sample_from_json(json::parse(line));
      validate(q);
      out.push_back(std::move(q));
    } catch (const json::exception& e) {
      throw Error(ErrorKind::parse, where + ": " + e.what());
    } catch (const Error& e) {
      throw Error(ErrorKind::parse, where + ": " + e.what());
    }
  }
  return out;
}

std::vector<MainQuestion> load_canonical(const std::string& path) {
  return parse_canonical_jsonl(detail::read_file(path), path);
}

void write_canonical(const std::string& path, std::span<const MainQuestion> samples) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorKind::io, "cannot write " + path);
  out << to_canonical_jsonl(samples);
  if (!out) throw Error(ErrorKind::io, "write failed: " + path);
}

DatasetKind dataset_kind_from_string(std::string_view text) {
  if (text == "introspect") return DatasetKind::introspect;
  if (text == "aokvqa") return DatasetKind::aokvqa;
  if (text == "canonical") return DatasetKind::canonical;
  throw Error(ErrorKind::invalid_input, "unknown dataset kind '" + std::string(text) + "'");
}

std::vector<MainQuestion> load_dataset(const std::string& path, DatasetKind kind, const std::string& image_root) {
  std::vector<MainQuestion> samples;
  switch (kind) {
    case DatasetKind::introspect:
      for (const auto& r : load_introspect(path).records) samples.push_back(to_canonical(r));
      break;
    case DatasetKind::aokvqa:
      for (const auto& r : load_aokvqa(path).records) samples.push_back(to_canonical(r));
      break;
    case DatasetKind::canonical:
      samples = load_canonical(path);
      sort_by_id(samples, [](const MainQuestion& q) -> const std::string& { return q.question_id; });
      break;
  }
  if (!image_root.empty()) {
    for (MainQuestion& q : samples) q.image.locator = image_root + "/" + q.image.image_id;
  }
  return samples;
}

}  // namespace sq
