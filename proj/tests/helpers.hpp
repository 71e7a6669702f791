#pragma once

#include <vector>

#include "reptfd/machine.hpp"
#include "reptfd/recorder.hpp"
#include "reptfd/workload.hpp"

namespace th {

using namespace reptfd;

inline workload::InstructionTemplate alu(Word imm = 1) {
    return {InstKind::Alu, {}, {workload::ValueOp::Add, imm}};
}
inline workload::InstructionTemplate load(Addr a, Word imm = 0) {
    return {InstKind::Load, {workload::AddrRule::Kind::Fixed, a}, {workload::ValueOp::Xor, imm}};
}
inline workload::InstructionTemplate store(Addr a, Word imm = 0) {
    return {InstKind::Store, {workload::AddrRule::Kind::Fixed, a}, {workload::ValueOp::Add, imm}};
}

// Every latency 1 and no jitter: instruction i of a core performs at cycle i+1.
inline machine::MachineConfig unit_config(uint32_t cores, uint32_t span = 512, Cycle segment = 64 * 512) {
    machine::MachineConfig c;
    c.num_cores = cores;
    c.sampling_span = span;
    c.segment_length = segment;
    c.lat_l1_hit = c.lat_miss = c.lat_alu = 1;
    c.jitter = 0;
    return c;
}

inline machine::MachineConfig small_config(uint32_t cores) {
    machine::MachineConfig c;
    c.num_cores = cores;
    c.mem_words = 1u << 16;
    return c;
}

inline workload::Program random_program(uint32_t cores, uint32_t insts, double share, double write, uint64_t seed,
                                        uint32_t pool = 32) {
    workload::WorkloadParams p;
    p.num_threads = cores;
    p.insts_per_thread = insts;
    p.share_ratio = share;
    p.write_ratio = write;
    p.shared_pool_size = pool;
    p.seed = seed;
    return workload::generate(p);
}

struct Recorded {
    std::vector<recorder::SegmentLogs> segments;
    std::vector<std::vector<CommitEvent>> events;  // per segment
    std::vector<Cycle> starts;                     // segment start cycle
    machine::MachineState final_state;
    std::vector<Word> memory;                      // coherent footprint values
};

inline Recorded record_all(const machine::MachineConfig& cfg, const workload::Program& prog) {
    recorder::RecordSession rec(cfg, prog);
    Recorded out;
    while (!rec.done()) {
        out.starts.push_back(rec.machine().clock());
        out.events.emplace_back();
        out.segments.push_back(rec.record_segment(&out.events.back()));
    }
    out.final_state = rec.machine().state();
    for (Addr a : prog.footprint()) out.memory.push_back(rec.machine().coherent_value(a));
    return out;
}

// Two cores, unit latencies, 8 blocks of 512 instructions. Each block has a
// load at span offsets 0 and 480, so a block ends at offset 480.
inline workload::Program late_block_program() {
    workload::Program prog;
    prog.threads.resize(2);
    for (CoreId c = 0; c < 2; ++c) {
        auto& t = prog.threads[c];
        for (uint32_t i = 0; i < 8 * 512; ++i) {
            const uint32_t off = i % 512;
            if (off == 0 || off == 480)
                t.push_back(load(0x8000 + c * 0x800 + (i / 512) * 2 + (off ? 1 : 0)));
            else
                t.push_back(alu(i));
        }
    }
    return prog;
}

}  // namespace th
