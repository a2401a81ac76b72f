#pragma once

// Generator abstraction: every pipeline role talks to a model through
// Generator::generate. Two implementations live here: a scripted lookup
// table used as a deterministic test double, and an HTTP client for the
// /v1/generate wire protocol. StubServer is the reference peer of that
// protocol.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <semaphore>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "sq/core.hpp"

namespace sq {

struct GenerationParams {
  int beam_width = 5;
  int max_new_tokens = 256;
  int min_new_tokens = 1;
  double temperature = 0.0;
  std::optional<std::int64_t> seed;

  void validate() const;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

struct GeneratorRequest {
  ImageRef image;
  std::string prompt;
  GenerationParams params;
  Role role = Role::reasoner;
};

enum class FinishReason { stop, length, error };

std::string_view to_string(FinishReason reason);

struct GeneratorResponse {
  std::string text;  // trimmed
  FinishReason finish_reason = FinishReason::stop;
  std::optional<std::int64_t> latency_ms;
};

class Generator {
 public:
  virtual ~Generator() = default;

  // Must be safe to call concurrently.
  virtual GeneratorResponse generate(const GeneratorRequest& request) = 0;

  // Stable identity string, folded into run fingerprints.
  virtual std::string describe() const = 0;
};

std::string trim(std::string_view text);

// --- scripted oracle ---------------------------------------------------------

enum class MatchKind { exact, prefix };
enum class Strictness { strict, fallback };

struct ScriptRule {
  std::string image_id;
  MatchKind kind = MatchKind::exact;
  std::string pattern;
  std::string response;
};

// Parses the oracle script format:
//   [{"image_id": str, "match": {"exact": str} | {"prefix": str}, "response": str}]
std::vector<ScriptRule> parse_script(std::string_view json_text);
std::vector<ScriptRule> load_script_file(const std::string& path);

class ScriptedOracle final : public Generator {
 public:
  // Throws Error(invalid_input) if two rules for the same image can match
  // the same prompt.
  ScriptedOracle(std::vector<ScriptRule> rules, Strictness strictness);

  GeneratorResponse generate(const GeneratorRequest& request) override;
  std::string describe() const override;

  // Returned in fallback mode when no rule matches.
  static constexpr std::string_view kFallbackText = "unknown";

 private:
  std::vector<ScriptRule> rules_;
  Strictness strictness_;
};

// --- remote client -----------------------------------------------------------

// SQ_HTTP_TIMEOUT_MS when set to a positive integer, else 120000.
int default_http_timeout_ms();

struct RemoteOptions {
  int timeout_ms = default_http_timeout_ms();
  int max_in_flight = 4;
  // One entry per retry; only transport failures and timeouts are retried.
  std::vector<int> backoff_ms = {250, 1000};
};

// Canonical request body: fixed key order, compact, byte-stable.
std::string serialize_request(const GeneratorRequest& request);

// Maps an HTTP status + body to a response or throws the matching Error.
GeneratorResponse parse_response(int status, std::string_view body);

class RemoteGenerator final : public Generator {
 public:
  // endpoint is "http://host:port" with an optional path prefix.
  explicit RemoteGenerator(std::string endpoint, RemoteOptions options = {});

  GeneratorResponse generate(const GeneratorRequest& request) override;
  std::string describe() const override;

  // Total HTTP attempts issued, retries included.
  std::uint64_t attempts() const { return attempts_.load(); }

 private:
  std::string scheme_host_port_;
  std::string path_;
  RemoteOptions options_;
  std::counting_semaphore<1024> in_flight_;
  std::atomic<std::uint64_t> attempts_{0};
};

GeneratorResponse remote_generate(const std::string& endpoint, const GeneratorRequest& request,
                                  int timeout_ms);

// --- conformance stub --------------------------------------------------------

// One canned behaviour, selected by exact prompt. Unmatched prompts are
// echoed back as the response text.
struct StubFixture {
  std::string prompt;
  std::string text;
  std::string finish_reason = "stop";
  int status = 200;
  std::optional<std::string> raw_body;  // sent verbatim instead of JSON
  int delay_ms = 0;
  int delay_first = -1;  // delay only the first N hits; -1 delays every hit
};

std::vector<StubFixture> parse_stub_fixtures(std::string_view json_text);

// Table used by the wire conformance suite.
std::vector<StubFixture> conformance_fixtures();

// Validates a request body against the wire schema. Returns an error
// message, or nullopt when valid.
std::optional<std::string> check_request_schema(std::string_view body);

class StubServer {
 public:
  explicit StubServer(std::vector<StubFixture> fixtures = conformance_fixtures());
  ~StubServer();

  StubServer(const StubServer&) = delete;
  StubServer& operator=(const StubServer&) = delete;

  // Binds and returns the bound port (port 0 picks a free one).
  int bind(const std::string& host = "127.0.0.1", int port = 0);
  void start();  // serve on a background thread
  void run();    // serve on the calling thread until stop()
  void stop();

  std::string endpoint() const;
  std::uint64_t hits() const;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace sq
