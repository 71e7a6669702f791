#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

// `key = value` text files. Blank lines and '#' comments are ignored.
namespace reptfd::kv {

struct Entry {
    std::string key;
    std::string value;
    std::size_t line = 0;
};

std::vector<Entry> parse(std::string_view text);
std::string read_text(const std::string& path);

uint64_t to_u64(const Entry& e);
uint32_t to_u32(const Entry& e);
double to_double(const Entry& e);
bool to_bool(const Entry& e);

}  // namespace reptfd::kv
