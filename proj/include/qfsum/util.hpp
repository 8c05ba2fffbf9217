#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace qfsum {

using json = nlohmann::json;

/// Failure categories. The CLI maps them to exit codes and the service to
/// HTTP status codes.
enum class ErrorKind {
  invalid_argument,  // bad flags or request fields
  data,              // malformed or inconsistent input data
  numeric,           // non-finite values during training / scoring
  not_found,         // unknown patient, category, file
  conflict,          // duplicate name, model not loaded
  unprocessable,     // well-formed request that violates a contract
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] void fail(ErrorKind kind, const std::string& what);

/// Shortest decimal representation that parses back to the same bits.
std::string format_float(double value);
std::string format_float(float value);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

/// Reads a line-delimited JSON file. Blank lines are skipped; lines that fail
/// to parse are passed to `on_malformed` (line number, text) instead.
std::vector<json> read_jsonl(
    const std::filesystem::path& path,
    const std::function<void(std::size_t, const std::string&)>& on_malformed = {});
void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

/// Hex SHA-256 of a byte string / file.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string trim(std::string_view s);
std::vector<std::string> split_delimited(std::string_view line, std::string_view delimiters);

}  // namespace qfsum
