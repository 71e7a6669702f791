#pragma once

#include <deque>
#include <optional>
#include <vector>

#include "reptfd/machine.hpp"
#include "reptfd/recorder.hpp"

namespace reptfd::replayer {

// grant(s) counts the cores that have finished every block whose pending
// period ends no later than sampling index s.
class GrantArray {
public:
    explicit GrantArray(std::size_t n = 0) : counts_(n, 0) {}
    void increment(uint32_t i) { ++counts_.at(i); }
    uint32_t at(uint32_t i) const { return counts_.at(i); }
    std::size_t size() const { return counts_.size(); }

private:
    std::vector<uint32_t> counts_;
};

struct ReplayRegs {
    uint32_t next_start = 0;
    uint32_t curr_end = 0;
    uint32_t next_end = 0;
};

// Block-end branch: grant(i)++ for i in [curr_end, next_end), then shift.
void end_block(GrantArray& grant, ReplayRegs& regs, uint32_t next_end_new);
// Block-start branch: proceeds iff grant(next_start) == p.
bool start_block(const GrantArray& grant, ReplayRegs& regs, uint32_t num_cores, uint32_t next_start_new);

// Recorded orders whose destination is among this core's next memory instructions.
class OrderBuffer {
public:
    static constexpr std::size_t kCapacity = 16;

    bool full() const { return entries_.size() >= kCapacity; }
    bool empty() const { return entries_.empty(); }
    std::size_t size() const { return entries_.size(); }
    void push(const recorder::OrderRecord& o) { entries_.push_back(o); }
    const recorder::OrderRecord& front() const { return entries_.front(); }
    void pop() { entries_.pop_front(); }

    bool pause = false;

private:
    std::deque<recorder::OrderRecord> entries_;
};

enum class BlockStart { Start, Stall };
enum class OrderDecision { Proceed, Pause };

struct DetectionEvent {
    uint32_t segment = 0;
    CoreId core = 0;
    uint32_t group_idx = 0;
    Word expected = 0;
    Word actual = 0;
    bool operator==(const DetectionEvent&) const = default;
};

struct BlockStall {
    uint32_t segment = 0;
    CoreId core = 0;
    uint32_t block_idx = 0;
    Cycle cycles = 0;
    bool operator==(const BlockStall&) const = default;
};

struct ReplayReport {
    Cycle replay_cycles = 0;
    uint64_t stalled_block_count = 0;
    uint64_t total_block_count = 0;
    Cycle total_stall_cycles = 0;
    Cycle grant_stall_cycles = 0;
    Cycle order_stall_cycles = 0;
    std::vector<Cycle> segment_cycles;
    std::vector<BlockStall> stalled_blocks;
    std::vector<DetectionEvent> detections;

    double mean_stall_per_stalled_block() const;
    double stalled_block_fraction() const;
    void merge(const ReplayReport& other);
};

struct ReplayOptions {
    uint32_t perturb = 0;       // +/- cycles added to each miss latency
    uint64_t perturb_seed = 0;
    std::vector<machine::ExtraDelay> extra_delays;
    Cycle watchdog = 0;         // cycles without progress before declaring divergence; 0 = auto
};

// Enforcement state for one segment of replay. Installs itself as the
// machine's step hooks while running.
class SegmentReplay : public machine::StepHooks {
public:
    SegmentReplay(machine::Machine& m, const recorder::DeterminismLog& det, const recorder::ResultLog& res,
                  uint32_t segment, Cycle watchdog);

    ReplayReport run(std::vector<CommitEvent>* events = nullptr);

    void on_block_end(CoreId core);
    BlockStart try_block_start(CoreId core);
    OrderDecision enforce_order(CoreId core, uint32_t mem_idx);
    std::optional<DetectionEvent> check_checksum(CoreId core, Word checksum, uint32_t group_idx);

    const GrantArray& grant() const { return grant_; }
    const ReplayRegs& regs(CoreId core) const { return cores_[core].regs; }
    const OrderBuffer& order_buffer(CoreId core) const { return cores_[core].buffer; }
    uint32_t current_block(CoreId core) const { return cores_[core].block; }
    bool block_started(CoreId core) const { return cores_[core].started; }
    const ReplayReport& report() const { return report_; }

    void begin_cycle(Cycle now) override;
    bool may_perform(CoreId core, const workload::InstructionTemplate& inst, const machine::CoreState& cs) override;
    void on_commit(const CommitEvent& ev) override;

private:
    struct CoreReplay {
        std::vector<uint16_t> counts;
        uint32_t block = 0;
        bool started = false;
        bool finished = false;
        uint32_t remaining = 0;
        ReplayRegs regs;
        std::deque<recorder::OrderRecord> pending;
        OrderBuffer buffer;
        uint64_t inst_limit = 0;
        bool quota_done = false;
        recorder::ChecksumState sum;
        std::vector<const recorder::ChecksumRecord*> expected;
        uint16_t partial_len = 0;
        Cycle block_stall = 0;
    };

    uint32_t end_of(uint32_t block) const;
    uint32_t start_of(uint32_t block) const;
    void advance(CoreId core);
    void refill(CoreReplay& cr);
    void note_stall(CoreId core, bool grant);
    void finish_quota(CoreId core);

    machine::Machine& machine_;
    uint32_t segment_;
    uint32_t num_blocks_ = 0;
    Cycle watchdog_;
    GrantArray grant_;
    std::vector<CoreReplay> cores_;
    std::vector<uint32_t> mem_totals_;
    ReplayReport report_;
    Cycle last_progress_ = 0;
};

// The redundant group: a second machine replaying segments in order.
class ReplaySession {
public:
    ReplaySession(const machine::MachineConfig& first_run_config, const workload::Program& program,
                  const ReplayOptions& options);

    ReplayReport replay_segment(const recorder::DeterminismLog& det, const recorder::ResultLog& res,
                                std::vector<CommitEvent>* events = nullptr);

    machine::Machine& machine() { return machine_; }
    const machine::Machine& machine() const { return machine_; }
    uint32_t segments_replayed() const { return segment_; }
    machine::Checkpoint snapshot() const { return machine_.snapshot(); }
    void restore(const machine::Checkpoint& cp, uint32_t segment);

private:
    machine::Machine machine_;
    ReplayOptions options_;
    uint32_t segment_ = 0;
};

machine::MachineConfig replay_config(const machine::MachineConfig& first_run, const ReplayOptions& options);

// Single-segment replay on a fresh redundant machine.
ReplayReport replay_segment(const workload::Program& program, const machine::MachineConfig& config,
                            const recorder::DeterminismLog& det, const recorder::ResultLog& res,
                            const ReplayOptions& options, std::vector<CommitEvent>* events = nullptr);

}  // namespace reptfd::replayer
