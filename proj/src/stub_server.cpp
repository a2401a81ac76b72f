#include <httplib.h>

#include <condition_variable>
#include <json.hpp>
#include <mutex>

#include "sq/backends.hpp"
#include "util.hpp"

namespace sq {

using json = nlohmann::ordered_json;

std::vector<StubFixture> conformance_fixtures() {
  auto text = [](std::string prompt, std::string text, std::string finish = "stop") {
    StubFixture f;
    f.prompt = std::move(prompt);
    f.text = std::move(text);
    f.finish_reason = std::move(finish);
    return f;
  };
  auto status = [](std::string prompt, int code) {
    StubFixture f;
    f.prompt = std::move(prompt);
    f.status = code;
    return f;
  };
  auto raw = [](std::string prompt, std::string body) {
    StubFixture f;
    f.prompt = std::move(prompt);
    f.raw_body = std::move(body);
    return f;
  };
  auto delayed = [&](std::string prompt, std::string body, int delay_ms, int first) {
    StubFixture f = text(std::move(prompt), std::move(body));
    f.delay_ms = delay_ms;
    f.delay_first = first;
    return f;
  };
  return {
      text("Are there limes in the vase?", "Yes"),
      text("If the pancake was missing a piece?", "Yes"),
      text("sq-conformance: padded", "  Limes \n"),
      text("sq-conformance: length", "a truncated answer", "length"),
      status("sq-conformance: reject", 400),
      status("sq-conformance: unavailable", 503),
      raw("sq-conformance: not-json", "<html>internal error</html>"),
      raw("sq-conformance: missing-text", R"({"finish_reason":"stop"})"),
      raw("sq-conformance: bad-finish", R"({"text":"x","finish_reason":"done"})"),
      text("sq-conformance: empty", ""),
      delayed("sq-conformance: slow", "late", 1500, -1),
      delayed("sq-conformance: flaky", "recovered", 1500, 2),
  };
}

std::vector<StubFixture> parse_stub_fixtures(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::parse, std::string("stub fixtures: ") + e.what());
  }
  if (!doc.is_array()) throw Error(ErrorKind::parse, "stub fixtures must be a JSON array");
  std::vector<StubFixture> out;
  for (std::size_t i = 0; i < doc.size(); ++i) {
    const json& e = doc[i];
    if (!e.is_object() || !e.contains("prompt") || !e["prompt"].is_string()) {
      throw Error(ErrorKind::parse, "stub fixture " + std::to_string(i) + ": missing string 'prompt'");
    }
    StubFixture fx;
    try {
      fx.prompt = e["prompt"].get<std::string>();
      fx.text = e.value("text", "");
      fx.finish_reason = e.value("finish_reason", "stop");
      fx.status = e.value("status", 200);
      if (e.contains("body")) fx.raw_body = e["body"].get<std::string>();
      fx.delay_ms = e.value("delay_ms", 0);
      fx.delay_first = e.value("delay_first", -1);
    } catch (const json::exception& ex) {
      throw Error(ErrorKind::parse, "stub fixture " + std::to_string(i) + ": " + ex.what());
    }
    out.push_back(std::move(fx));
  }
  return out;
}

std::optional<std::string> check_request_schema(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body);
  } catch (const json::exception&) {
    return "request body is not JSON";
  }
  if (!doc.is_object()) return "request body must be an object";
  static const std::vector<std::string> keys = {"image_id", "image_b64", "image_uri", "prompt", "role", "params"};
  for (const auto& [k, v] : doc.items()) {
    if (std::find(keys.begin(), keys.end(), k) == keys.end()) return "unexpected field '" + k + "'";
  }
  for (const auto& k : keys) {
    if (!doc.contains(k)) return "missing field '" + k + "'";
  }
  if (!doc["image_id"].is_string() || doc["image_id"].get<std::string>().empty()) {
    return "'image_id' must be a non-empty string";
  }
  const json& b64 = doc["image_b64"];
  const json& uri = doc["image_uri"];
  if (!b64.is_null() && !b64.is_string()) return "'image_b64' must be a string or null";
  if (!uri.is_null() && !uri.is_string()) return "'image_uri' must be a string or null";
  if (b64.is_null() && uri.is_null()) return "one of 'image_b64' or 'image_uri' is required";
  if (b64.is_string() && !detail::base64_decode(b64.get<std::string>())) return "'image_b64' is not base64";
  if (!doc["prompt"].is_string() || doc["prompt"].get<std::string>().empty()) {
    return "'prompt' must be a non-empty string";
  }
  if (!doc["role"].is_string()) return "'role' must be a string";
  try {
    role_from_string(doc["role"].get<std::string>());
  } catch (const Error&) {
    return "unknown role";
  }
  const json& p = doc["params"];
  if (!p.is_object()) return "'params' must be an object";
  static const std::vector<std::string> pkeys = {"beam_width", "max_new_tokens", "min_new_tokens", "temperature", "seed"};
  for (const auto& k : pkeys) {
    if (!p.contains(k)) return "missing field 'params." + k + "'";
  }
  if (p.size() != pkeys.size()) return "unexpected field in 'params'";
  if (!p["beam_width"].is_number_integer() || p["beam_width"].get<long long>() < 1) return "bad 'beam_width'";
  if (!p["max_new_tokens"].is_number_integer() || p["max_new_tokens"].get<long long>() < 1) return "bad 'max_new_tokens'";
  if (!p["min_new_tokens"].is_number_integer() || p["min_new_tokens"].get<long long>() < 0 ||
      p["min_new_tokens"].get<long long>() > p["max_new_tokens"].get<long long>()) {
    return "bad 'min_new_tokens'";
  }
  if (!p["temperature"].is_number() || p["temperature"].get<double>() < 0.0) return "bad 'temperature'";
  if (!p["seed"].is_null() && !p["seed"].is_number_integer()) return "bad 'seed'";
  return std::nullopt;
}

struct StubServer::Impl {
  std::vector<StubFixture> fixtures;
  std::vector<std::uint64_t> fixture_hits;
  httplib::Server server;
  std::thread thread;
  std::string host = "127.0.0.1";
  int port = 0;
  std::atomic<std::uint64_t> hits{0};

  std::mutex mu;
  std::condition_variable cv;
  bool stopping = false;

  void send_error(httplib::Response& res, int status, const std::string& message) {
    json body;
    body["error"] = message;
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  // Returns false if the server is shutting down.
  bool pause(int ms) {
    std::unique_lock lock(mu);
    return !cv.wait_for(lock, std::chrono::milliseconds(ms), [&] { return stopping; });
  }

  void handle(const httplib::Request& req, httplib::Response& res) {
    ++hits;
    if (auto problem = check_request_schema(req.body)) {
      send_error(res, 400, *problem);
      return;
    }
    const std::string prompt = json::parse(req.body)["prompt"].get<std::string>();

    const StubFixture* fx = nullptr;
    int delay = 0;
    {
      std::lock_guard lock(mu);
      for (std::size_t i = 0; i < fixtures.size(); ++i) {
        if (fixtures[i].prompt != prompt) continue;
        fx = &fixtures[i];
        const std::uint64_t n = fixture_hits[i]++;
        if (fx->delay_first < 0 || n < static_cast<std::uint64_t>(fx->delay_first)) delay = fx->delay_ms;
        break;
      }
    }
    if (delay > 0 && !pause(delay)) {
      send_error(res, 503, "server stopping");
      return;
    }
    if (fx == nullptr) {
      json body;
      body["text"] = prompt;
      body["finish_reason"] = "stop";
      res.set_content(body.dump(), "application/json");
      return;
    }
    if (fx->raw_body) {
      res.status = fx->status;
      res.set_content(*fx->raw_body, "application/json");
      return;
    }
    if (fx->status != 200) {
      send_error(res, fx->status, fx->status == 503 ? "model unavailable" : "request rejected");
      return;
    }
    json body;
    body["text"] = fx->text;
    body["finish_reason"] = fx->finish_reason;
    res.set_content(body.dump(), "application/json");
  }
};

StubServer::StubServer(std::vector<StubFixture> fixtures) : impl_(std::make_unique<Impl>()) {
  impl_->fixture_hits.assign(fixtures.size(), 0);
  impl_->fixtures = std::move(fixtures);
  impl_->server.Post("/v1/generate", [this](const httplib::Request& req, httplib::Response& res) {
    impl_->handle(req, res);
  });
}

StubServer::~StubServer() { stop(); }

int StubServer::bind(const std::string& host, int port) {
  impl_->host = host;
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) throw Error(ErrorKind::io, "cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void StubServer::start() {
  if (impl_->port == 0) bind();
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void StubServer::run() {
  if (impl_->port == 0) bind();
  impl_->server.listen_after_bind();
}

void StubServer::stop() {
  {
    std::lock_guard lock(impl_->mu);
    impl_->stopping = true;
  }
  impl_->cv.notify_all();
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

std::string StubServer::endpoint() const {
  return "http://" + impl_->host + ":" + std::to_string(impl_->port);
}

std::uint64_t StubServer::hits() const { return impl_->hits.load(); }

}  // namespace sq
