#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cde {

/// Shortest decimal representation that parses back to the same double.
std::string format_double(double value);

/// Parses a finite double; the whole token must be consumed.
bool parse_double(std::string_view token, double& out);

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

using KvEntries = std::vector<std::pair<std::string, std::string>>;

// Key-value documents: one `key=value` per line, `#` starts a comment line,
// blank lines ignored, whitespace around key and value trimmed.
KvEntries parse_kv(std::string_view text);
std::string write_kv(const KvEntries& entries);

}  // namespace cde
