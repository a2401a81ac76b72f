#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace sq {

// Every failure surfaced by the library maps to exactly one of these kinds.
enum class ErrorKind {
  invalid_input,
  backend_unavailable,  // connection refused, 503
  request_rejected,     // 400 or any other non-success status
  malformed_response,   // schema-invalid response body, empty text
  timeout,
  script_miss,          // scripted oracle, strict mode
  parse,                // dataset / record / script file contents
  io,
};

std::string_view to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sq
