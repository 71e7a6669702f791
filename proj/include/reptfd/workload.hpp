#pragma once

#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "reptfd/common.hpp"

namespace reptfd::workload {

// Shared-pool addresses start at 0; thread-private regions sit above them.
inline constexpr Addr kPoolBase = 0x0;
inline constexpr Addr kPoolLimit = 0x8000;
inline constexpr Addr kPrivateBase = 0x8000;
inline constexpr Addr kPrivateStride = 0x800;

enum class ValueOp : uint8_t { Add, Xor, Mul, Rotl };

// A pure function of the accumulator and one operand. Every op is a
// bijection in the accumulator, so a corrupted accumulator stays corrupted.
struct ValueFn {
    ValueOp op = ValueOp::Add;
    Word imm = 0;

    Word apply(Word acc, Word operand) const;
    bool operator==(const ValueFn&) const = default;
};

struct AddrRule {
    enum class Kind : uint8_t { None, Fixed, Pool };
    Kind kind = Kind::None;
    uint32_t value = 0;  // absolute address, or pool index

    Addr resolve() const { return kind == Kind::Pool ? kPoolBase + value : value; }
    bool operator==(const AddrRule&) const = default;
};

struct InstructionTemplate {
    InstKind kind = InstKind::Alu;
    AddrRule addr;
    ValueFn fn;

    bool operator==(const InstructionTemplate&) const = default;
};

using ThreadProgram = std::vector<InstructionTemplate>;

struct Program {
    std::vector<ThreadProgram> threads;

    std::size_t num_threads() const { return threads.size(); }
    uint64_t total_instructions() const;
    // Sorted, unique addresses touched by any memory instruction.
    std::vector<Addr> footprint() const;
    bool operator==(const Program&) const = default;
};

// Architectural per-thread register state: a single 32-bit accumulator.
Word initial_acc(CoreId thread);

// Executes one instruction against the accumulator. For LOAD, `operand` is the
// loaded value; STORE and ALU ignore it. Returns the instruction result:
// the value loaded, the value stored, or the ALU output.
Word execute(const InstructionTemplate& inst, Word& acc, Word operand);

struct WorkloadParams {
    uint32_t num_threads = 4;
    uint32_t insts_per_thread = 1000;
    uint32_t shared_pool_size = 64;
    double share_ratio = 0.1;
    double write_ratio = 0.3;
    double mem_ratio = 0.35;       // fraction of instructions that access memory
    uint32_t private_words = 96;   // per-thread private working set
    uint64_t seed = 1;

    void validate() const;
};

Program generate(const WorkloadParams& params);

std::string serialize(const Program& program);
Program parse(std::string_view text);
void save(const Program& program, const std::string& path);
Program load(const std::string& path);

// Identifies a memory instruction by its thread and per-thread memory index.
struct MemRef {
    CoreId core = 0;
    uint32_t mem_idx = 0;
    auto operator<=>(const MemRef&) const = default;
};

struct OrderEdge {
    MemRef src;
    MemRef dst;
};

struct OracleResult {
    std::vector<std::vector<Word>> results;  // per thread, per instruction
    std::map<Addr, Word> memory;             // every footprint address
};

// Sequentially consistent execution honoring program order plus `order`.
// Ties are broken by lowest thread id, so an order that covers every
// conflicting pair yields a unique outcome. Throws ConfigError on a cycle.
OracleResult oracle_execute(const Program& program, std::span<const OrderEdge> order);

}  // namespace reptfd::workload
