#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace clinpath {

std::string read_file(const std::string& path);  // throws on open failure
bool file_exists(const std::string& path);

// write-temp-then-rename so an interrupted run never leaves a partial file
// under its final name
void atomic_write_file(const std::string& path, std::string_view content);

std::vector<std::string_view> split_lines(std::string_view text);
std::vector<std::string> split(std::string_view s, char sep);
std::string_view trim(std::string_view s);
std::string to_lower(std::string_view s);

// collapse runs of whitespace to single spaces and lowercase; the canonical
// form for lexicon keys
std::string canonical_key(std::string_view s);

std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);

}  // namespace clinpath
