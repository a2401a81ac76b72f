#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

#include "sq/core.hpp"

namespace sq {

struct IntrospectRecord {
  std::string question_id;
  std::string image_id;
  std::string reasoning_question;
  std::string reasoning_answer_most_common;
  std::vector<std::string> all_answers;
  std::vector<std::pair<std::string, std::string>> sub_qas;

  friend bool operator==(const IntrospectRecord&, const IntrospectRecord&) = default;
};

struct AOKVQARecord {
  std::string question_id;
  std::string image_id;
  std::string question;
  std::vector<std::string> choices;
  int correct_choice_index = 0;
  std::vector<std::string> direct_answers;
  bool difficult_direct_answer = false;

  friend bool operator==(const AOKVQARecord&, const AOKVQARecord&) = default;
};

struct LoadStats {
  std::size_t records = 0;
  std::size_t images = 0;
  std::size_t sub_qas = 0;
};

template <typename Record>
struct Loaded {
  std::vector<Record> records;
  LoadStats stats;
};

// Numeric-aware id order: all-digit ids compare as integers, otherwise
// lexicographically; digit ids sort before the rest.
bool question_id_less(std::string_view a, std::string_view b);

// VQA-Introspect release layout: a JSON object keyed by question_id.
// Duplicate sub-questions across introspect entries keep the first copy.
Loaded<IntrospectRecord> parse_introspect(std::string_view json_text, std::string_view source = "<memory>");
Loaded<IntrospectRecord> load_introspect(const std::string& path);

// A-OKVQA release layout: a JSON array of question objects.
Loaded<AOKVQARecord> parse_aokvqa(std::string_view json_text, std::string_view source = "<memory>");
Loaded<AOKVQARecord> load_aokvqa(const std::string& path);

MainQuestion to_canonical(const IntrospectRecord& record);
MainQuestion to_canonical(const AOKVQARecord& record);

// Canonical JSONL, one MainQuestion per line.
std::string to_canonical_jsonl(std::span<const MainQuestion> samples);
std::string canonical_line(const MainQuestion& sample);
std::vector<MainQuestion> parse_canonical_jsonl(std::string_view text, std::string_view source = "<memory>");
std::vector<MainQuestion> load_canonical(const std::string& path);
void write_canonical(const std::string& path, std::span<const MainQuestion> samples);

enum class DatasetKind { introspect, aokvqa, canonical };
DatasetKind dataset_kind_from_string(std::string_view text);

// Loads any supported layout into canonical samples sorted by question_id.
// image_root, when non-empty, becomes the prefix of every image locator.
std::vector<MainQuestion> load_dataset(const std::string& path, DatasetKind kind,
                                       const std::string& image_root = "");

// Keeps positions 0, n, 2n, ... Input is expected to be sorted already.
template <typename T>
std::vector<T> sample_every_nth(std::span<const T> samples, std::size_t n) {
  if (n == 0) throw Error(ErrorKind::invalid_input, "sample_every_nth: n must be positive");
  std::vector<T> out;
  out.reserve((samples.size() + n - 1) / n);
  for (std::size_t i = 0; i < samples.size(); i += n) out.push_back(samples[i]);
  return out;
}

}  // namespace sq
