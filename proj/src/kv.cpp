#include "reptfd/kv.hpp"

#include <charconv>
#include <fstream>
#include <limits>
#include <sstream>

#include "reptfd/common.hpp"

namespace reptfd::kv {

namespace {

std::string_view trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

[[noreturn]] void bad_value(const Entry& e, const char* expected) {
    throw ConfigError("line " + std::to_string(e.line) + ": " + e.key + " expects " + expected + ", got '" +
                      e.value + "'");
}

}  // namespace

std::vector<Entry> parse(std::string_view text) {
    std::vector<Entry> out;
    std::size_t line_no = 0;
    while (!text.empty()) {
        ++line_no;
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) throw ParseError("expected key = value", line_no);
        Entry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))), line_no};
        if (e.key.empty()) throw ParseError("empty key", line_no);
        out.push_back(std::move(e));
    }
    return out;
}

std::string read_text(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

uint64_t to_u64(const Entry& e) {
    uint64_t v = 0;
    const char* b = e.value.data();
    const char* end = b + e.value.size();
    int base = 10;
    if (e.value.size() > 2 && e.value[0] == '0' && (e.value[1] == 'x' || e.value[1] == 'X')) {
        b += 2;
        base = 16;
    }
    auto [p, ec] = std::from_chars(b, end, v, base);
    if (ec != std::errc{} || p != end) bad_value(e, "an unsigned integer");
    return v;
}

uint32_t to_u32(const Entry& e) {
    const uint64_t v = to_u64(e);
    if (v > std::numeric_limits<uint32_t>::max()) bad_value(e, "a 32-bit unsigned integer");
    return static_cast<uint32_t>(v);
}

double to_double(const Entry& e) {
    double v = 0;
    auto [p, ec] = std::from_chars(e.value.data(), e.value.data() + e.value.size(), v);
    if (ec != std::errc{} || p != e.value.data() + e.value.size()) bad_value(e, "a number");
    return v;
}

bool to_bool(const Entry& e) {
    if (e.value == "1" || e.value == "true" || e.value == "yes") return true;
    if (e.value == "0" || e.value == "false" || e.value == "no") return false;
    bad_value(e, "a boolean");
}

}  // namespace reptfd::kv
