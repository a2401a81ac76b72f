#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace sq::detail {

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view bytes);
// nullopt on invalid input.
std::optional<std::string> base64_decode(std::string_view text);

std::string read_file(const std::string& path);

// 1-based line number of a byte offset.
std::size_t line_of_offset(std::string_view text, std::size_t offset);

}  // namespace sq::detail
