#include "sq/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>

#include "sq/error.hpp"

namespace sq {

namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }
bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}
bool is_punct(char c) {
  const auto u = static_cast<unsigned char>(c);
  return (u >= 33 && u <= 47) || (u >= 58 && u <= 64) || (u >= 91 && u <= 96) ||
         (u >= 123 && u <= 126);
}

constexpr std::array<std::string_view, 11> kNumberWords = {
    "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten"};

std::vector<std::string> split_tokens(std::string_view normalized) {
  std::vector<std::string> tokens;
  std::size_t start = 0;
  while (start < normalized.size()) {
    std::size_t end = normalized.find(' ', start);
    if (end == std::string_view::npos) end = normalized.size();
    if (end > start) tokens.emplace_back(normalized.substr(start, end - start));
    start = end + 1;
  }
  return tokens;
}

std::size_t count_matches(std::string_view predicted, std::span<const std::string> answers) {
  const std::string pred = normalize_answer(predicted);
  return static_cast<std::size_t>(std::count_if(answers.begin(), answers.end(), [&](const std::string& a) {
    return normalize_answer(a) == pred;
  }));
}

}  // namespace

std::string_view to_string(MetricKind kind) {
  switch (kind) {
    case MetricKind::exact: return "exact";
    case MetricKind::vqa_soft: return "vqa_soft";
    case MetricKind::mc: return "mc";
    case MetricKind::direct_answer: return "direct_answer";
  }
  return "unknown";
}

MetricKind metric_from_string(std::string_view text) {
  if (text == "exact") return MetricKind::exact;
  if (text == "vqa_soft" || text == "vqa-soft") return MetricKind::vqa_soft;
  if (text == "mc") return MetricKind::mc;
  if (text == "direct" || text == "direct_answer" || text == "direct-answer") {
    return MetricKind::direct_answer;
  }
  throw Error(ErrorKind::invalid_input, "unknown metric '" + std::string(text) + "'");
}

std::string normalize_answer(std::string_view text) {
  std::string lowered(text);
  for (char& c : lowered) {
    if (c >= 'A' && c <= 'Z') c = static_cast<char>(c - 'A' + 'a');
  }

  std::string stripped;
  stripped.reserve(lowered.size());
  for (std::size_t i = 0; i < lowered.size(); ++i) {
    const char c = lowered[i];
    if (!is_punct(c)) {
      stripped.push_back(is_space(c) ? ' ' : c);
      continue;
    }
    const bool between_digits =
        i > 0 && i + 1 < lowered.size() && is_digit(lowered[i - 1]) && is_digit(lowered[i + 1]);
    if (between_digits && c == ',') continue;  // "1,000" -> "1000"
    if (between_digits && c == '.') {
      stripped.push_back(c);  // decimals
      continue;
    }
    stripped.push_back(' ');
  }

  std::string out;
  for (const std::string& token : split_tokens(stripped)) {
    if (token == "a" || token == "an" || token == "the") continue;
    std::string_view mapped = token;
    for (std::size_t n = 0; n < kNumberWords.size(); ++n) {
      if (token == kNumberWords[n]) {
        static const std::array<std::string, 11> digits = {"0", "1", "2", "3", "4", "5",
                                                            "6", "7", "8", "9", "10"};
        mapped = digits[n];
        break;
      }
    }
    if (!out.empty()) out.push_back(' ');
    out.append(mapped);
  }
  return out;
}

double exact_match(std::string_view predicted, std::string_view ground_truth) {
  return normalize_answer(predicted) == normalize_answer(ground_truth) ? 1.0 : 0.0;
}

double vqa_soft_accuracy(std::string_view predicted, std::span<const std::string> annotations) {
  if (annotations.empty()) {
    throw Error(ErrorKind::invalid_input, "vqa_soft_accuracy needs at least one annotation");
  }
  const std::size_t matches = count_matches(predicted, annotations);
  if (annotations.size() < 3) return matches > 0 ? 1.0 : 0.0;
  return std::min(static_cast<double>(matches) / 3.0, 1.0);
}

double direct_answer_accuracy(std::string_view predicted,
                              std::span<const std::string> direct_answers) {
  if (direct_answers.empty()) {
    throw Error(ErrorKind::invalid_input, "direct_answer_accuracy needs direct answers");
  }
  return std::min(static_cast<double>(count_matches(predicted, direct_answers)) / 3.0, 1.0);
}

double choice_similarity(std::string_view generated, std::string_view choice) {
  const std::string gen = normalize_answer(generated);
  const std::string cho = normalize_answer(choice);
  if (gen == cho) return 2.0;

  const auto gen_tokens = split_tokens(gen);
  const auto cho_tokens = split_tokens(cho);
  const std::set<std::string> a(gen_tokens.begin(), gen_tokens.end());
  const std::set<std::string> b(cho_tokens.begin(), cho_tokens.end());
  if (a.empty() || b.empty()) return 0.0;
  if (std::includes(a.begin(), a.end(), b.begin(), b.end()) ||
      std::includes(b.begin(), b.end(), a.begin(), a.end())) {
    return 1.0;
  }
  std::vector<std::string> common;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(common));
  const std::size_t union_size = a.size() + b.size() - common.size();
  return static_cast<double>(common.size()) / static_cast<double>(union_size);
}

int mc_select(std::string_view generated, std::span<const std::string> choices) {
  int best = 0;
  double best_score = -1.0;
  for (std::size_t i = 0; i < choices.size(); ++i) {
    const double s = choice_similarity(generated, choices[i]);
    if (s > best_score) {
      best_score = s;
      best = static_cast<int>(i);
    }
  }
  return best;
}

std::string majority_answer(std::span<const std::string> answers) {
  if (answers.empty()) {
    throw Error(ErrorKind::invalid_input, "majority_answer needs at least one answer");
  }
  std::map<std::string, std::size_t> counts;
  std::vector<std::string> order;
  for (const std::string& a : answers) {
    std::string n = normalize_answer(a);
    if (counts[n]++ == 0) order.push_back(n);
  }
  std::string best = order.front();
  for (const std::string& n : order) {
    if (counts[n] > counts[best]) best = n;
  }
  return best;
}

double aggregate(std::span<const EvalResult> results) {
  if (results.empty()) {
    throw Error(ErrorKind::invalid_input, "aggregate over an empty result list");
  }
  double sum = 0.0;
  for (const EvalResult& r : results) {
    if (r.metric != results.front().metric) {
      throw Error(ErrorKind::invalid_input, "aggregate over mixed metric kinds");
    }
    sum += r.score;
  }
  return 100.0 * sum / static_cast<double>(results.size());
}

std::string format_percentage(double value) {
  const double rounded = std::floor(value * 100.0 + 0.5 + 1e-9) / 100.0;
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", rounded);
  return buf;
}

}  // namespace sq
