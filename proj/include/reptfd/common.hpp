#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace reptfd {

using CoreId = uint32_t;
using Word = uint32_t;
using Addr = uint32_t;
using Cycle = uint64_t;

enum class InstKind : uint8_t { Load, Store, Alu };
enum class AccessOutcome : uint8_t { Hit, Miss };

inline bool is_memory(InstKind k) { return k != InstKind::Alu; }
const char* to_string(InstKind k);

// One dynamic instruction as it becomes globally performed.
struct CommitEvent {
    CoreId core = 0;
    uint64_t inst_idx = 0;
    std::optional<uint32_t> mem_idx;  // absent for ALU
    InstKind kind = InstKind::Alu;
    Addr addr = 0;
    Word result = 0;
    Cycle gp_time = 0;
    AccessOutcome outcome = AccessOutcome::Hit;

    bool operator==(const CommitEvent&) const = default;
};

struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : std::runtime_error {
    ParseError(const std::string& what, std::size_t line)
        : std::runtime_error("line " + std::to_string(line) + ": " + what), line(line) {}
    std::size_t line;
};

struct LogFormatError : std::runtime_error {
    LogFormatError(const std::string& what, std::size_t offset)
        : std::runtime_error("offset " + std::to_string(offset) + ": " + what), offset(offset) {}
    std::size_t offset;
};

// Replay could not follow the log. Distinct from a detected fault.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t mix3(uint64_t a, uint64_t b, uint64_t c) {
    return splitmix64(a ^ splitmix64(b ^ splitmix64(c)));
}

// FNV-1a, used for state digests.
struct Fnv1a {
    uint64_t h = 0xcbf29ce484222325ULL;
    void add(const void* data, std::size_t n) {
        auto p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    }
    template <typename T>
    void add_value(const T& v) { add(&v, sizeof(v)); }
};

}  // namespace reptfd
