#include "sq/backends.hpp"

#include <httplib.h>

#include <cstdlib>
#include <json.hpp>
#include <map>

#include "util.hpp"

namespace sq {

using json = nlohmann::ordered_json;

namespace {

bool rules_overlap(const ScriptRule& a, const ScriptRule& b) {
  if (a.kind == MatchKind::exact && b.kind == MatchKind::exact) return a.pattern == b.pattern;
  if (a.kind == MatchKind::exact) return a.pattern.starts_with(b.pattern);
  if (b.kind == MatchKind::exact) return b.pattern.starts_with(a.pattern);
  return a.pattern.starts_with(b.pattern) || b.pattern.starts_with(a.pattern);
}

bool rule_matches(const ScriptRule& rule, std::string_view prompt) {
  return rule.kind == MatchKind::exact ? prompt == rule.pattern : prompt.starts_with(rule.pattern);
}

std::string single_quoted(std::string_view s) { return "'" + std::string(s) + "'"; }

}  // namespace

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::stop: return "stop";
    case FinishReason::length: return "length";
    case FinishReason::error: return "error";
  }
  return "error";
}

void GenerationParams::validate() const {
  if (beam_width < 1) throw Error(ErrorKind::invalid_input, "beam_width must be positive");
  if (max_new_tokens < 1) throw Error(ErrorKind::invalid_input, "max_new_tokens must be positive");
  if (min_new_tokens < 0 || min_new_tokens > max_new_tokens) {
    throw Error(ErrorKind::invalid_input, "min_new_tokens must be in [0, max_new_tokens]");
  }
  if (!(temperature >= 0.0)) throw Error(ErrorKind::invalid_input, "temperature must be >= 0");
}

std::string trim(std::string_view text) {
  constexpr std::string_view ws = " \t\n\r\f\v";
  const auto first = text.find_first_not_of(ws);
  if (first == std::string_view::npos) return {};
  const auto last = text.find_last_not_of(ws);
  return std::string(text.substr(first, last - first + 1));
}

// --- scripted oracle ---------------------------------------------------------

std::vector<ScriptRule> parse_script(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, "oracle script, line " +
                                      std::to_string(detail::line_of_offset(json_text, e.byte)) +
                                      ": " + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::parse, "oracle script must be a JSON array");

  std::vector<ScriptRule> rules;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& entry = doc[i];
    const std::string where = "oracle script entry " + std::to_string(i) + ": ";
    auto field = [&](const json& obj, const char* name) -> std::string {
      if (!obj.is_object() || !obj.contains(name) || !obj[name].is_string()) {
        throw Error(ErrorKind::parse, where + "missing string field '" + name + "'");
      }
      return obj[name].get<std::string>();
    };
    ScriptRule rule;
    rule.image_id = field(entry, "image_id");
    rule.response = field(entry, "response");
    if (!entry.contains("match") || !entry["match"].is_object() || entry["match"].size() != 1) {
      throw Error(ErrorKind::parse, where + "'match' must hold exactly one of exact/prefix");
    }
    const json& match = entry["match"];
    if (match.contains("exact")) {
      rule.kind = MatchKind::exact;
      rule.pattern = field(match, "exact");
    } else if (match.contains("prefix")) {
      rule.kind = MatchKind::prefix;
      rule.pattern = field(match, "prefix");
    } else {
      throw Error(ErrorKind::parse, where + "'match' must hold exactly one of exact/prefix");
    }
    rules.push_back(std::move(rule));
  }
  return rules;
}

std::vector<ScriptRule> load_script_file(const std::string& path) {
  try {
    return parse_script(detail::read_file(path));
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::parse) throw Error(ErrorKind::parse, path + ": " + e.what());
    throw;
  }
}

ScriptedOracle::ScriptedOracle(std::vector<ScriptRule> rules, Strictness strictness)
    : rules_(std::move(rules)), strictness_(strictness) {
  std::map<std::string_view, std::vector<std::size_t>> by_image;
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    const ScriptRule& rule = rules_[i];
    if (rule.image_id.empty()) {
      throw Error(ErrorKind::invalid_input, "script rule " + std::to_string(i) + " has no image_id");
    }
    if (rule.kind == MatchKind::exact && rule.pattern.empty()) {
      throw Error(ErrorKind::invalid_input, "script rule " + std::to_string(i) + " matches an empty prompt");
    }
    auto& group = by_image[rule.image_id];
    for (std::size_t j : group) {
      if (rules_overlap(rules_[j], rule)) {
        throw Error(ErrorKind::invalid_input,
                    "ambiguous script: rules " + std::to_string(j) + " and " + std::to_string(i) +
                        " both match prompts for image " + single_quoted(rule.image_id));
      }
    }
    group.push_back(i);
  }
}

GeneratorResponse ScriptedOracle::generate(const GeneratorRequest& request) {
  for (const ScriptRule& rule : rules_) {
    if (rule.image_id == request.image.image_id && rule_matches(rule, request.prompt)) {
      return {trim(rule.response), FinishReason::stop, 0};
    }
  }
  if (strictness_ == Strictness::fallback) {
    return {std::string(kFallbackText), FinishReason::stop, 0};
  }
  throw Error(ErrorKind::script_miss, "no script rule for image " + single_quoted(request.image.image_id) +
                                          " and prompt " + single_quoted(request.prompt));
}

std::string ScriptedOracle::describe() const {
  json rules = json::array();
  for (const ScriptRule& r : rules_) {
    rules.push_back({{"image_id", r.image_id},
                     {"kind", r.kind == MatchKind::exact ? "exact" : "prefix"},
                     {"pattern", r.pattern},
                     {"response", r.response}});
  }
  return std::string("scripted:") + (strictness_ == Strictness::strict ? "strict:" : "fallback:") +
         detail::sha256_hex(rules.dump());
}

// --- remote client -----------------------------------------------------------

int default_http_timeout_ms() {
  if (const char* env = std::getenv("SQ_HTTP_TIMEOUT_MS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0 && v <= 86'400'000) return static_cast<int>(v);
  }
  return 120000;
}

std::string serialize_request(const GeneratorRequest& request) {
  json body;
  body["image_id"] = request.image.image_id;
  if (request.image.payload) {
    body["image_b64"] = detail::base64_encode(*request.image.payload);
    body["image_uri"] = nullptr;
  } else {
    body["image_b64"] = nullptr;
    body["image_uri"] = request.image.locator;
  }
  body["prompt"] = request.prompt;
  body["role"] = to_string(request.role);
  json params;
  params["beam_width"] = request.params.beam_width;
  params["max_new_tokens"] = request.params.max_new_tokens;
  params["min_new_tokens"] = request.params.min_new_tokens;
  params["temperature"] = request.params.temperature;
  params["seed"] = request.params.seed ? json(*request.params.seed) : json(nullptr);
  body["params"] = std::move(params);
  return body.dump();
}

GeneratorResponse parse_response(int status, std::string_view body) {
  if (status != 200) {
    std::string message = "status " + std::to_string(status);
    try {
      const json err = json::parse(body);
      if (err.is_object() && err.contains("error") && err["error"].is_string()) {
        message += ": " + err["error"].get<std::string>();
      }
    } catch (const json::exception&) {
    }
    throw Error(status == 503 ? ErrorKind::backend_unavailable : ErrorKind::request_rejected, message);
  }

  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception&) {
    throw Error(ErrorKind::malformed_response, "response body is not JSON");
  }
  if (!doc.is_object() || !doc.contains("text") || !doc["text"].is_string()) {
    throw Error(ErrorKind::malformed_response, "response lacks a string 'text'");
  }
  if (!doc.contains("finish_reason") || !doc["finish_reason"].is_string()) {
    throw Error(ErrorKind::malformed_response, "response lacks a string 'finish_reason'");
  }
  GeneratorResponse out;
  const std::string reason = doc["finish_reason"].get<std::string>();
  if (reason == "stop") out.finish_reason = FinishReason::stop;
  else if (reason == "length") out.finish_reason = FinishReason::length;
  else if (reason == "error") out.finish_reason = FinishReason::error;
  else throw Error(ErrorKind::malformed_response, "unknown finish_reason '" + reason + "'");

  out.text = trim(doc["text"].get<std::string>());
  if (out.text.empty() && out.finish_reason != FinishReason::error) {
    throw Error(ErrorKind::malformed_response, "response text is empty");
  }
  return out;
}

RemoteGenerator::RemoteGenerator(std::string endpoint, RemoteOptions options)
    : options_(std::move(options)), in_flight_(std::clamp(options_.max_in_flight, 1, 1024)) {
  if (options_.timeout_ms <= 0) throw Error(ErrorKind::invalid_input, "timeout_ms must be positive");
  if (!endpoint.starts_with("http://")) {
    throw Error(ErrorKind::invalid_input, "endpoint must be an http:// URI: " + endpoint);
  }
  while (endpoint.ends_with('/')) endpoint.pop_back();
  const auto slash = endpoint.find('/', 7);
  scheme_host_port_ = endpoint.substr(0, slash);
  path_ = (slash == std::string::npos ? "" : endpoint.substr(slash)) + "/v1/generate";
  if (scheme_host_port_.size() <= 7) throw Error(ErrorKind::invalid_input, "endpoint has no host");
}

std::string RemoteGenerator::describe() const { return "remote:" + scheme_host_port_ + path_; }

GeneratorResponse RemoteGenerator::generate(const GeneratorRequest& request) {
  if (request.prompt.empty()) throw Error(ErrorKind::invalid_input, "request prompt is empty");
  if (!request.image.resolvable()) {
    throw Error(ErrorKind::invalid_input, "image " + single_quoted(request.image.image_id) + " has no locator or payload");
  }
  request.params.validate();
  const std::string body = serialize_request(request);

  in_flight_.acquire();
  struct Release {
    std::counting_semaphore<1024>& s;
    ~Release() { s.release(); }
  } release{in_flight_};

  const auto timeout = std::chrono::milliseconds(options_.timeout_ms);
  const std::size_t max_attempts = options_.backoff_ms.size() + 1;
  Error last(ErrorKind::backend_unavailable, "no attempt made");
  for (std::size_t attempt = 0; attempt < max_attempts; ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(std::chrono::milliseconds(options_.backoff_ms[attempt - 1]));
    }
    ++attempts_;
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    client.set_keep_alive(false);

    const auto started = std::chrono::steady_clock::now();
    auto result = client.Post(path_, body, "application/json");
    const auto elapsed = std::chrono::steady_clock::now() - started;

    if (!result) {
      const auto err = result.error();
      const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                             (err == httplib::Error::Read && elapsed + std::chrono::milliseconds(5) >= timeout);
      last = Error(timed_out ? ErrorKind::timeout : ErrorKind::backend_unavailable,
                   describe() + ": " + (timed_out ? "timed out after " + std::to_string(options_.timeout_ms) + " ms"
                                                  : httplib::to_string(err)) +
                       " (attempt " + std::to_string(attempt + 1) + "/" + std::to_string(max_attempts) + ")");
      continue;
    }
    GeneratorResponse response = parse_response(result->status, result->body);
    response.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count();
    return response;
  }
  throw last;
}

GeneratorResponse remote_generate(const std::string& endpoint, const GeneratorRequest& request,
                                  int timeout_ms) {
  RemoteOptions options;
  options.timeout_ms = timeout_ms;
  RemoteGenerator client(endpoint, options);
  return client.generate(request);
}

}  // namespace sq
