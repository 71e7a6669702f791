#include "reptfd/replayer.hpp"

#include <algorithm>
#include <string>

namespace reptfd::replayer {

void end_block(GrantArray& grant, ReplayRegs& regs, uint32_t next_end_new) {
    for (uint32_t i = regs.curr_end; i < regs.next_end; ++i) grant.increment(i);
    regs.curr_end = regs.next_end;
    regs.next_end = next_end_new;
}

bool start_block(const GrantArray& grant, ReplayRegs& regs, uint32_t num_cores, uint32_t next_start_new) {
    if (grant.at(regs.next_start) != num_cores) return false;
    regs.next_start = next_start_new;
    return true;
}

double ReplayReport::mean_stall_per_stalled_block() const {
    return stalled_block_count ? static_cast<double>(total_stall_cycles) / stalled_block_count : 0.0;
}

double ReplayReport::stalled_block_fraction() const {
    return total_block_count ? static_cast<double>(stalled_block_count) / total_block_count : 0.0;
}

void ReplayReport::merge(const ReplayReport& o) {
    replay_cycles += o.replay_cycles;
    stalled_block_count += o.stalled_block_count;
    total_block_count += o.total_block_count;
    total_stall_cycles += o.total_stall_cycles;
    grant_stall_cycles += o.grant_stall_cycles;
    order_stall_cycles += o.order_stall_cycles;
    segment_cycles.insert(segment_cycles.end(), o.segment_cycles.begin(), o.segment_cycles.end());
    stalled_blocks.insert(stalled_blocks.end(), o.stalled_blocks.begin(), o.stalled_blocks.end());
    detections.insert(detections.end(), o.detections.begin(), o.detections.end());
}

SegmentReplay::SegmentReplay(machine::Machine& m, const recorder::DeterminismLog& det,
                             const recorder::ResultLog& res, uint32_t segment, Cycle watchdog)
    : machine_(m), segment_(segment), watchdog_(watchdog ? watchdog : Cycle{1} << 20) {
    const uint32_t p = m.num_cores();
    if (det.num_cores != p || res.num_cores != p || res.partial_len.size() != p)
        throw ConfigError("log core count does not match the machine");
    if (det.sampling_span != m.config().sampling_span)
        throw ConfigError("log sampling span does not match the machine");

    num_blocks_ = det.num_blocks();
    grant_ = GrantArray(num_blocks_ + 1);
    cores_.resize(p);
    for (auto& cr : cores_) cr.counts.assign(num_blocks_, 0);
    for (const auto& b : det.blocks) cores_[b.core].counts[b.block_idx] = b.mem_inst_count;

    std::vector<recorder::OrderRecord> orders = det.orders;
    std::stable_sort(orders.begin(), orders.end(),
                     [](const auto& a, const auto& b) { return a.dst_mem_idx < b.dst_mem_idx; });

    const auto& st = m.state();
    mem_totals_.resize(p);
    for (CoreId c = 0; c < p; ++c) {
        uint32_t n = 0;
        for (const auto& inst : m.program().threads[c])
            if (is_memory(inst.kind)) ++n;
        mem_totals_[c] = n;
    }
    for (const auto& o : orders) {
        if (o.src_mem_idx >= mem_totals_[o.src_core])
            throw DivergenceError("order source is absent from the run");
        cores_[o.dst_core].pending.push_back(o);
    }
    for (const auto& r : res.records) {
        auto& ex = cores_[r.core].expected;
        if (ex.size() <= r.group_idx) ex.resize(r.group_idx + 1, nullptr);
        ex[r.group_idx] = &r;
    }

    for (CoreId c = 0; c < p; ++c) {
        auto& cr = cores_[c];
        cr.partial_len = res.partial_len[c];
        cr.inst_limit = st.cores[c].pc + res.instructions(c);
        if (cr.inst_limit > m.program().threads[c].size())
            throw DivergenceError("result log covers more instructions than the program has");
        cr.regs = ReplayRegs{start_of(0), 0, end_of(0)};
        end_block(grant_, cr.regs, end_of(1));
        if (num_blocks_ == 0) cr.finished = true;
        refill(cr);
    }
    for (CoreId c = 0; c < p; ++c)
        if (st.cores[c].pc >= cores_[c].inst_limit) finish_quota(c);
}

uint32_t SegmentReplay::end_of(uint32_t block) const {
    return std::min<uint32_t>(block + 1, static_cast<uint32_t>(grant_.size()));
}

uint32_t SegmentReplay::start_of(uint32_t block) const { return recorder::block_period(block).start_sample; }

void SegmentReplay::on_block_end(CoreId core) {
    auto& cr = cores_[core];
    end_block(grant_, cr.regs, end_of(cr.block + 2));
    ++report_.total_block_count;
    if (cr.block_stall > 0) {
        ++report_.stalled_block_count;
        report_.total_stall_cycles += cr.block_stall;
        report_.stalled_blocks.push_back({segment_, core, cr.block, cr.block_stall});
    }
    cr.block_stall = 0;
    cr.started = false;
    if (++cr.block >= num_blocks_) cr.finished = true;
    last_progress_ = machine_.clock();
}

BlockStart SegmentReplay::try_block_start(CoreId core) {
    auto& cr = cores_[core];
    if (cr.started) return BlockStart::Start;
    if (!start_block(grant_, cr.regs, machine_.num_cores(), start_of(cr.block + 1))) return BlockStart::Stall;
    cr.started = true;
    cr.remaining = cr.counts[cr.block];
    return BlockStart::Start;
}

void SegmentReplay::advance(CoreId core) {
    auto& cr = cores_[core];
    while (!cr.finished) {
        if (cr.started) {
            if (cr.remaining > 0) break;
            on_block_end(core);
        } else if (try_block_start(core) == BlockStart::Stall) {
            break;
        }
    }
}

void SegmentReplay::refill(CoreReplay& cr) {
    while (!cr.buffer.full() && !cr.pending.empty()) {
        cr.buffer.push(cr.pending.front());
        cr.pending.pop_front();
    }
}

OrderDecision SegmentReplay::enforce_order(CoreId core, uint32_t mem_idx) {
    auto& cr = cores_[core];
    const auto& st = machine_.state();
    refill(cr);
    while (!cr.buffer.empty() && cr.buffer.front().dst_mem_idx <= mem_idx) {
        const auto& o = cr.buffer.front();
        if (o.dst_mem_idx == mem_idx && st.cores[o.src_core].mem_idx <= o.src_mem_idx) {
            cr.buffer.pause = true;
            return OrderDecision::Pause;
        }
        cr.buffer.pop();
        refill(cr);
    }
    cr.buffer.pause = false;
    return OrderDecision::Proceed;
}

std::optional<DetectionEvent> SegmentReplay::check_checksum(CoreId core, Word checksum, uint32_t group_idx) {
    const auto& ex = cores_[core].expected;
    if (group_idx >= ex.size() || ex[group_idx] == nullptr)
        throw DivergenceError("result log exhausted on core " + std::to_string(core));
    if (ex[group_idx]->checksum == checksum) return std::nullopt;
    DetectionEvent d{segment_, core, group_idx, ex[group_idx]->checksum, checksum};
    report_.detections.push_back(d);
    return d;
}

void SegmentReplay::note_stall(CoreId core, bool grant) {
    ++cores_[core].block_stall;
    if (grant)
        ++report_.grant_stall_cycles;
    else
        ++report_.order_stall_cycles;
}

void SegmentReplay::finish_quota(CoreId core) {
    auto& cr = cores_[core];
    if (cr.quota_done) return;
    cr.quota_done = true;
    const uint64_t n = cr.sum.commit_instructions;
    if (n % recorder::kChecksumGroup != cr.partial_len)
        throw DivergenceError("partial checksum group length mismatch on core " + std::to_string(core));
    if (cr.partial_len != 0)
        check_checksum(core, cr.sum.checksum, static_cast<uint32_t>(n / recorder::kChecksumGroup));
}

void SegmentReplay::begin_cycle(Cycle) {
    for (CoreId c = 0; c < cores_.size(); ++c) advance(c);
}

bool SegmentReplay::may_perform(CoreId core, const workload::InstructionTemplate& inst,
                                const machine::CoreState& cs) {
    auto& cr = cores_[core];
    if (cs.pc >= cr.inst_limit) return false;  // segment quota reached; waits for the others
    if (!is_memory(inst.kind)) return true;
    advance(core);
    if (cr.finished) throw DivergenceError("determinism log underrun on core " + std::to_string(core));
    if (!cr.started) {
        note_stall(core, true);
        return false;
    }
    if (enforce_order(core, cs.mem_idx) == OrderDecision::Pause) {
        note_stall(core, false);
        return false;
    }
    return true;
}

void SegmentReplay::on_commit(const CommitEvent& ev) {
    auto& cr = cores_[ev.core];
    last_progress_ = ev.gp_time;
    cr.sum = recorder::checksum_update(cr.sum, ev.result);
    if (cr.sum.out_valid) {
        check_checksum(ev.core, cr.sum.checksum,
                       static_cast<uint32_t>((cr.sum.commit_instructions - 1) / recorder::kChecksumGroup));
        cr.sum.checksum = 0;
        cr.sum.out_valid = false;
    }
    if (is_memory(ev.kind)) {
        --cr.remaining;
        advance(ev.core);
    }
    if (ev.inst_idx + 1 >= cr.inst_limit) finish_quota(ev.core);
}

ReplayReport SegmentReplay::run(std::vector<CommitEvent>* events) {
    const Cycle start = machine_.clock();
    last_progress_ = start;
    std::vector<CommitEvent> scratch;
    auto all_done = [&] {
        return std::all_of(cores_.begin(), cores_.end(), [](const CoreReplay& c) { return c.quota_done; });
    };
    while (!all_done()) {
        if (machine_.halted()) throw DivergenceError("program ended before the segment quota");
        machine_.step(scratch, this);
        if (events) events->insert(events->end(), scratch.begin(), scratch.end());
        if (machine_.clock() - last_progress_ > watchdog_)
            throw DivergenceError("replay made no progress for " + std::to_string(watchdog_) + " cycles");
    }
    for (CoreId c = 0; c < cores_.size(); ++c) {
        const auto& cr = cores_[c];
        if (cr.finished) continue;
        const auto rest = cr.counts.begin() + cr.block + (cr.started ? 1 : 0);
        if ((cr.started && cr.remaining > 0) ||
            std::any_of(rest, cr.counts.end(), [](uint16_t n) { return n > 0; }))
            throw DivergenceError("recorded blocks not consumed on core " + std::to_string(c));
    }
    report_.replay_cycles = machine_.clock() - start;
    report_.segment_cycles.push_back(report_.replay_cycles);
    return report_;
}

machine::MachineConfig replay_config(const machine::MachineConfig& first_run, const ReplayOptions& options) {
    machine::MachineConfig c = first_run;
    c.perturb = options.perturb;
    c.perturb_seed = options.perturb_seed;
    c.extra_delays = options.extra_delays;
    return c;
}

ReplaySession::ReplaySession(const machine::MachineConfig& first_run_config, const workload::Program& program,
                             const ReplayOptions& options)
    : machine_(replay_config(first_run_config, options), program), options_(options) {}

ReplayReport ReplaySession::replay_segment(const recorder::DeterminismLog& det, const recorder::ResultLog& res,
                                           std::vector<CommitEvent>* events) {
    SegmentReplay sr(machine_, det, res, segment_, options_.watchdog);
    ReplayReport r = sr.run(events);
    ++segment_;
    return r;
}

void ReplaySession::restore(const machine::Checkpoint& cp, uint32_t segment) {
    machine_.restore(cp);
    segment_ = segment;
}

ReplayReport replay_segment(const workload::Program& program, const machine::MachineConfig& config,
                            const recorder::DeterminismLog& det, const recorder::ResultLog& res,
                            const ReplayOptions& options, std::vector<CommitEvent>* events) {
    ReplaySession s(config, program, options);
    return s.replay_segment(det, res, events);
}

}  // namespace reptfd::replayer
