#include "reptfd/recorder.hpp"

#include <algorithm>
#include <stdexcept>

namespace reptfd::recorder {

void ConflictWindow::insert(const ConflictEntry& e) {
    if (size() >= capacity_) throw std::logic_error("conflict window overflow");
    current_.push_back(e);
}

void ConflictWindow::rotate() {
    last_.swap(current_);
    current_.clear();
}

void ConflictWindow::clear() {
    last_.clear();
    current_.clear();
}

ChecksumState checksum_update(ChecksumState state, Word result) {
    if (state.out_valid) {
        state.checksum = 0;
        state.out_valid = false;
    }
    state.checksum ^= result;
    ++state.commit_instructions;
    state.out_valid = state.commit_instructions % kChecksumGroup == 0;
    return state;
}

void checksum_export(ChecksumState& state, CoreId core, ResultLog& log) {
    const auto group = static_cast<uint32_t>((state.commit_instructions - 1) / kChecksumGroup);
    log.records.push_back({core, group, state.checksum});
    state.checksum = 0;
    state.out_valid = false;
}

uint64_t ResultLog::instructions(CoreId core) const {
    return static_cast<uint64_t>(full_groups(core)) * kChecksumGroup + partial_len.at(core);
}

std::size_t ResultLog::full_groups(CoreId core) const {
    std::size_t n = 0;
    for (const auto& r : records)
        if (r.core == core) ++n;
    if (partial_len.at(core) > 0 && n > 0) --n;
    return n;
}

const ChecksumRecord* ResultLog::find(CoreId core, uint32_t group_idx) const {
    for (const auto& r : records)
        if (r.core == core && r.group_idx == group_idx) return &r;
    return nullptr;
}

uint32_t DeterminismLog::num_blocks() const {
    uint32_t n = 0;
    for (const auto& b : blocks) n = std::max(n, b.block_idx + 1);
    return n;
}

Recorder::Recorder(uint32_t num_cores, uint32_t sampling_span)
    : num_cores_(num_cores),
      span_(sampling_span),
      windows_(num_cores, ConflictWindow(sampling_span)),
      block_mem_count_(num_cores, 0),
      sums_(num_cores),
      group_idx_(num_cores, 0) {
    det_.sampling_span = span_;
    det_.num_cores = num_cores_;
    res_.num_cores = num_cores_;
    res_.partial_len.assign(num_cores_, 0);
}

std::vector<OrderRecord> Recorder::on_miss(CoreId core, const CommitEvent& ev) {
    std::vector<OrderRecord> found;
    for (CoreId other = 0; other < num_cores_; ++other) {
        if (other == core) continue;
        windows_[other].for_each_conflict(ev.addr, ev.kind, [&](const ConflictEntry& e) {
            found.push_back({other, e.mem_idx, core, *ev.mem_idx});
        });
    }
    return found;
}

void Recorder::on_event(const CommitEvent& ev) {
    const CoreId c = ev.core;
    sums_[c] = checksum_update(sums_[c], ev.result);
    if (sums_[c].out_valid) checksum_export(sums_[c], c, res_);

    if (!is_memory(ev.kind)) return;
    if (ev.outcome == AccessOutcome::Miss) {
        for (const auto& o : on_miss(c, ev)) {
            if (!det_.orders.empty() && det_.orders.back() == o) continue;
            det_.orders.push_back(o);
        }
    }
    windows_[c].insert({ev.kind, ev.addr, *ev.mem_idx});
    ++block_mem_count_[c];
}

BlockRecord Recorder::on_sample(CoreId core, uint32_t sample_idx) {
    BlockRecord rec{core, sample_idx - 1, static_cast<uint16_t>(block_mem_count_[core])};
    det_.blocks.push_back(rec);
    block_mem_count_[core] = 0;
    windows_[core].rotate();
    return rec;
}

void Recorder::sample_all(uint32_t sample_idx) {
    for (CoreId c = 0; c < num_cores_; ++c) on_sample(c, sample_idx);
}

SegmentLogs Recorder::finalize_segment() {
    for (CoreId c = 0; c < num_cores_; ++c) {
        auto& s = sums_[c];
        const auto tail = static_cast<uint16_t>(s.commit_instructions % kChecksumGroup);
        res_.partial_len[c] = tail;
        if (tail != 0) {
            res_.records.push_back({c, static_cast<uint32_t>(s.commit_instructions / kChecksumGroup), s.checksum});
        }
        s = ChecksumState{};
        windows_[c].clear();
        block_mem_count_[c] = 0;
    }
    SegmentLogs out;
    out.segment = segment_++;
    out.det = std::move(det_);
    out.res = std::move(res_);
    det_ = DeterminismLog{span_, num_cores_, {}, {}};
    res_ = ResultLog{num_cores_, std::vector<uint16_t>(num_cores_, 0), {}};
    return out;
}

RecordSession::RecordSession(const machine::MachineConfig& config, const workload::Program& program)
    : machine_(config, program), recorder_(config.num_cores, config.sampling_span) {}

SegmentLogs RecordSession::record_segment(std::vector<CommitEvent>* events) {
    const auto& cfg = machine_.config();
    const Cycle start = machine_.clock();
    const Cycle span = cfg.sampling_span;
    while (!machine_.halted() && machine_.clock() < start + cfg.segment_length) {
        machine_.step(scratch_, nullptr);
        for (const auto& ev : scratch_) recorder_.on_event(ev);
        if (events) events->insert(events->end(), scratch_.begin(), scratch_.end());
        const Cycle rel = machine_.clock() - start;
        if (rel % span == 0) recorder_.sample_all(static_cast<uint32_t>(rel / span));
    }
    const Cycle rel = machine_.clock() - start;
    if (rel % span != 0) recorder_.sample_all(static_cast<uint32_t>(rel / span + 1));
    SegmentLogs logs = recorder_.finalize_segment();
    logs.segment = segment_++;
    logs.first_run_cycles = rel;
    return logs;
}

void RecordSession::restore(const machine::Checkpoint& cp, uint32_t segment) {
    machine_.restore(cp);
    recorder_ = Recorder(machine_.num_cores(), machine_.config().sampling_span);
    segment_ = segment;
}

}  // namespace reptfd::recorder
