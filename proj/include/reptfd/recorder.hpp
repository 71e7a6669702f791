#pragma once

#include <vector>

#include "reptfd/common.hpp"
#include "reptfd/machine.hpp"

namespace reptfd::recorder {

inline constexpr uint32_t kChecksumGroup = 1024;

// Relaxed global-clock interval, in sampling indices, in which a block performs.
struct PendingPeriod {
    uint32_t start_sample = 0;
    uint32_t end_sample = 0;
    bool operator==(const PendingPeriod&) const = default;
};

// Block b holds the instructions performed in (b*span, (b+1)*span] of its
// segment; its pending period reaches back one extra span.
inline PendingPeriod block_period(uint32_t block_idx) {
    return {block_idx == 0 ? 0u : block_idx - 1, block_idx + 1};
}

// Physical time order between two blocks. Touching at a sampling instant
// counts as ordered.
inline bool is_inferrable(PendingPeriod u, PendingPeriod v) {
    return u.end_sample <= v.start_sample || v.end_sample <= u.start_sample;
}

struct BlockRecord {
    CoreId core = 0;
    uint32_t block_idx = 0;
    uint16_t mem_inst_count = 0;
    bool operator==(const BlockRecord&) const = default;
};

// A non-inferrable execution order src -> dst.
struct OrderRecord {
    CoreId src_core = 0;
    uint32_t src_mem_idx = 0;
    CoreId dst_core = 0;
    uint32_t dst_mem_idx = 0;
    bool operator==(const OrderRecord&) const = default;
};

struct ConflictEntry {
    InstKind kind = InstKind::Load;
    Addr addr = 0;
    uint32_t mem_idx = 0;
};

// Per-core CAM holding the memory accesses of the last and the current block.
class ConflictWindow {
public:
    explicit ConflictWindow(uint32_t sampling_span) : capacity_(2 * sampling_span) {}

    void insert(const ConflictEntry& e);
    void rotate();  // current block becomes the last one; the older block is dropped
    void clear();
    std::size_t size() const { return last_.size() + current_.size(); }
    std::size_t capacity() const { return capacity_; }

    template <typename Fn>
    void for_each_conflict(Addr addr, InstKind kind, Fn&& fn) const {
        auto scan = [&](const std::vector<ConflictEntry>& v) {
            for (const auto& e : v)
                if (e.addr == addr && (kind == InstKind::Store || e.kind == InstKind::Store)) fn(e);
        };
        scan(last_);
        scan(current_);
    }

private:
    std::size_t capacity_;
    std::vector<ConflictEntry> last_;
    std::vector<ConflictEntry> current_;
};

struct ChecksumState {
    Word checksum = 0;
    uint64_t commit_instructions = 0;
    bool out_valid = false;
};

// XOR-folds one committed result. out_valid is raised on every 1024th commit;
// the caller exports and the next update starts a fresh group.
ChecksumState checksum_update(ChecksumState state, Word result);

struct ChecksumRecord {
    CoreId core = 0;
    uint32_t group_idx = 0;
    Word checksum = 0;
    bool operator==(const ChecksumRecord&) const = default;
};

struct ResultLog {
    uint32_t num_cores = 0;
    std::vector<uint16_t> partial_len;    // per core: length of the final partial group
    std::vector<ChecksumRecord> records;  // per core ascending group_idx, cores interleaved

    uint64_t instructions(CoreId core) const;
    std::size_t full_groups(CoreId core) const;
    const ChecksumRecord* find(CoreId core, uint32_t group_idx) const;
    bool operator==(const ResultLog&) const = default;
};

void checksum_export(ChecksumState& state, CoreId core, ResultLog& log);

struct DeterminismLog {
    uint32_t sampling_span = 0;
    uint32_t num_cores = 0;
    std::vector<BlockRecord> blocks;
    std::vector<OrderRecord> orders;

    uint32_t num_blocks() const;  // per core
    bool operator==(const DeterminismLog&) const = default;
};

struct SegmentLogs {
    uint32_t segment = 0;
    Cycle first_run_cycles = 0;
    DeterminismLog det;
    ResultLog res;
};

// First-run recorder for one group of cores, fed commit events in machine order.
class Recorder {
public:
    Recorder(uint32_t num_cores, uint32_t sampling_span);

    // Checksum, CAM insert and (on a miss) conflict search for one commit.
    void on_event(const CommitEvent& ev);
    // Searches the other cores' windows for accesses conflicting with `ev`.
    std::vector<OrderRecord> on_miss(CoreId core, const CommitEvent& ev);
    // Closes block sample_idx - 1 of `core`.
    BlockRecord on_sample(CoreId core, uint32_t sample_idx);
    void sample_all(uint32_t sample_idx);

    // Seals both logs, flushing partial checksum groups, and resets for the next segment.
    SegmentLogs finalize_segment();

    const ConflictWindow& window(CoreId c) const { return windows_[c]; }
    const ChecksumState& checksum(CoreId c) const { return sums_[c]; }
    uint32_t num_cores() const { return num_cores_; }

private:
    uint32_t num_cores_;
    uint32_t span_;
    uint32_t segment_ = 0;
    std::vector<ConflictWindow> windows_;
    std::vector<uint32_t> block_mem_count_;
    std::vector<ChecksumState> sums_;
    std::vector<uint32_t> group_idx_;
    DeterminismLog det_;
    ResultLog res_;
};

// Drives a machine through first-run segments, feeding the recorder.
class RecordSession {
public:
    RecordSession(const machine::MachineConfig& config, const workload::Program& program);

    // Runs until the segment ends (segment_length cycles) or the machine halts.
    SegmentLogs record_segment(std::vector<CommitEvent>* events = nullptr);
    bool done() const { return machine_.halted(); }
    uint32_t segments_recorded() const { return segment_; }

    machine::Machine& machine() { return machine_; }
    const machine::Machine& machine() const { return machine_; }
    machine::Checkpoint snapshot() const { return machine_.snapshot(); }
    // Rewinds to a checkpoint taken at the start of segment `segment`.
    void restore(const machine::Checkpoint& cp, uint32_t segment);

private:
    machine::Machine machine_;
    Recorder recorder_;
    uint32_t segment_ = 0;
    std::vector<CommitEvent> scratch_;
};

}  // namespace reptfd::recorder
