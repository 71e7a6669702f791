#pragma once

#include <vector>

#include "reptfd/common.hpp"
#include "reptfd/workload.hpp"

namespace reptfd::machine {

// Extra cycles charged after one specific dynamic instruction.
struct ExtraDelay {
    CoreId core = 0;
    uint64_t inst_idx = 0;
    uint32_t cycles = 0;
    bool operator==(const ExtraDelay&) const = default;
};

struct MachineConfig {
    uint32_t num_cores = 8;
    uint32_t sampling_span = 512;
    uint32_t l1_capacity = 512;    // lines; one 32-bit word per line
    uint32_t l1_ways = 4;
    uint32_t llc_capacity = 16384;
    uint32_t llc_ways = 8;
    uint32_t mem_words = 1u << 17;
    uint32_t lat_l1_hit = 1;
    uint32_t lat_miss = 16;
    uint32_t lat_alu = 1;
    uint32_t jitter = 4;           // miss latency varies by +/- jitter cycles
    uint64_t jitter_seed = 1;
    uint32_t perturb = 0;          // additional +/- perturbation, replay group only
    uint64_t perturb_seed = 0;
    Cycle segment_length = 64 * 512;
    std::vector<ExtraDelay> extra_delays;

    void validate() const;
    // True when checkpoints are interchangeable between the two configs.
    bool same_geometry(const MachineConfig& other) const;
    bool operator==(const MachineConfig&) const = default;
};

enum class LineState : uint8_t { Invalid, Shared, Modified };

struct CacheLine {
    Addr addr = 0;
    Word value = 0;
    LineState state = LineState::Invalid;
    bool dirty = false;  // LLC only
    uint64_t last_use = 0;
    bool operator==(const CacheLine&) const = default;
};

struct CoreState {
    Word acc = 0;
    uint64_t pc = 0;          // next instruction index
    uint32_t mem_idx = 0;     // next memory-instruction index
    uint64_t committed = 0;
    Cycle ready_cycle = 1;    // cycle at which the next instruction may perform
    bool operator==(const CoreState&) const = default;
};

struct MachineState {
    Cycle clock = 0;
    Cycle last_commit = 0;
    uint64_t use_tick = 0;
    std::vector<CoreState> cores;
    std::vector<std::vector<CacheLine>> l1;
    std::vector<CacheLine> llc;
    std::vector<Word> memory;
    bool operator==(const MachineState&) const = default;
};

struct Checkpoint {
    MachineConfig config;
    MachineState state;
};

struct AccessResult {
    Word value = 0;
    AccessOutcome outcome = AccessOutcome::Hit;
};

enum class FaultSite : uint8_t {
    RegWriteback,     // core: result of the instruction committing on `locus` at `cycle`
    L1Line,           // core: a valid L1 line of core locus % p, chosen by locus / p
    L1ToLlcEviction,  // uncore: first L1-to-LLC transfer from core `locus` at or after `cycle`
    LlcLine,          // uncore: a valid LLC line, chosen by `locus`
    CoherenceFill,    // uncore: first fill delivered to core `locus` at or after `cycle`
    MemoryWord,       // uncore: memory word at address `locus`
};
inline constexpr int kNumFaultSites = 6;
const char* to_string(FaultSite s);

struct ArmedFault {
    FaultSite site = FaultSite::RegWriteback;
    Cycle cycle = 0;
    uint8_t bit = 0;
    uint32_t locus = 0;
    bool fired = false;   // the single event has happened (or expired)
    bool struck = false;  // it actually corrupted a value
    Cycle strike_cycle = 0;
    Addr strike_addr = 0;
};

// Per-cycle interposition used by the replay engine.
class StepHooks {
public:
    virtual ~StepHooks() = default;
    virtual void begin_cycle(Cycle) {}
    // Called when a core's next instruction is ready; false stalls it one cycle.
    virtual bool may_perform(CoreId, const workload::InstructionTemplate&, const CoreState&) { return true; }
    virtual void on_commit(const CommitEvent&) {}
};

// One group of cores running `program` (thread k on core k). Single-threaded
// and deterministic: config, program and seeds fix the event stream.
class Machine {
public:
    Machine(MachineConfig config, const workload::Program& program);

    // Advances the clock one cycle and performs every ready instruction in
    // ascending core order. A halted machine returns nothing and stays put.
    std::vector<CommitEvent> step();
    void step(std::vector<CommitEvent>& out, StepHooks* hooks);

    // Coherent access by `core` at the current clock, outside the instruction stream.
    AccessResult access(CoreId core, InstKind kind, Addr addr, Word store_value = 0);

    Checkpoint snapshot() const;
    void restore(const Checkpoint& cp);

    bool halted() const;
    bool core_done(CoreId c) const { return state_.cores[c].pc >= program_->threads[c].size(); }
    Cycle clock() const { return state_.clock; }
    // Cycle of the most recent commit; equals the run length once halted.
    Cycle last_commit_cycle() const { return state_.last_commit; }
    uint32_t num_cores() const { return config_.num_cores; }
    const MachineConfig& config() const { return config_; }
    const MachineState& state() const { return state_; }
    const workload::Program& program() const { return *program_; }

    // Value a load by a core without a private copy would observe.
    Word coherent_value(Addr addr) const;
    // Digest over the full machine state.
    uint64_t digest() const;

    void arm_fault(const ArmedFault& fault) { fault_ = fault; fault_armed_ = true; }
    void disarm_fault() { fault_armed_ = false; }
    const ArmedFault* fault() const { return fault_armed_ ? &fault_ : nullptr; }

private:
    CacheLine* l1_find(CoreId c, Addr a);
    CacheLine& l1_allocate(CoreId c, Addr a);
    CacheLine* llc_find(Addr a);
    CacheLine& llc_allocate(Addr a);
    Word llc_read(Addr a);
    void llc_write(Addr a, Word v);
    void writeback(CoreId c, CacheLine& line);
    uint32_t latency(CoreId c, const CoreState& cs, InstKind kind, AccessOutcome outcome) const;
    void strike_state_sites();
    Word maybe_corrupt_transfer(FaultSite site, CoreId c, Addr a, Word v);
    void check_addr(Addr a) const;

    MachineConfig config_;
    const workload::Program* program_;
    MachineState state_;
    uint32_t l1_sets_ = 1;
    uint32_t llc_sets_ = 1;
    ArmedFault fault_;
    bool fault_armed_ = false;
};

// Latency offset in [-amplitude, amplitude], a pure function of its inputs.
int jitter_offset(uint64_t seed, CoreId core, uint64_t inst_idx, uint32_t amplitude);

}  // namespace reptfd::machine
