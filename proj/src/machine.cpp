#include "reptfd/machine.hpp"

#include <algorithm>

namespace reptfd::machine {

const char* to_string(FaultSite s) {
    switch (s) {
        case FaultSite::RegWriteback: return "REG_WRITEBACK";
        case FaultSite::L1Line: return "L1_LINE";
        case FaultSite::L1ToLlcEviction: return "L1_TO_LLC_EVICTION";
        case FaultSite::LlcLine: return "LLC_LINE";
        case FaultSite::CoherenceFill: return "COHERENCE_FILL";
        case FaultSite::MemoryWord: return "MEMORY_WORD";
    }
    return "?";
}

void MachineConfig::validate() const {
    if (num_cores < 1 || num_cores > 255) throw ConfigError("num_cores must be in [1, 255]");
    if (sampling_span < 2) throw ConfigError("sampling_span must be >= 2");
    if (lat_l1_hit < 1 || lat_miss < 1 || lat_alu < 1) throw ConfigError("latencies must be >= 1");
    if (l1_ways < 1 || l1_capacity < l1_ways || l1_capacity % l1_ways != 0)
        throw ConfigError("l1_capacity must be a positive multiple of l1_ways");
    if (llc_ways < 1 || llc_capacity < llc_ways || llc_capacity % llc_ways != 0)
        throw ConfigError("llc_capacity must be a positive multiple of llc_ways");
    if (mem_words < 1) throw ConfigError("mem_words must be >= 1");
    if (segment_length < sampling_span || segment_length % sampling_span != 0)
        throw ConfigError("segment_length must be a positive multiple of sampling_span");
}

bool MachineConfig::same_geometry(const MachineConfig& o) const {
    return num_cores == o.num_cores && l1_capacity == o.l1_capacity && l1_ways == o.l1_ways &&
           llc_capacity == o.llc_capacity && llc_ways == o.llc_ways && mem_words == o.mem_words;
}

int jitter_offset(uint64_t seed, CoreId core, uint64_t inst_idx, uint32_t amplitude) {
    if (amplitude == 0) return 0;
    uint64_t h = mix3(seed, core, inst_idx);
    return static_cast<int>(h % (2ull * amplitude + 1)) - static_cast<int>(amplitude);
}

namespace {

uint32_t set_index(Addr a, uint32_t sets) {
    return static_cast<uint32_t>((static_cast<uint64_t>(a) * 0x9e3779b1u >> 7) % sets);
}

}  // namespace

Machine::Machine(MachineConfig config, const workload::Program& program)
    : config_(std::move(config)), program_(&program) {
    config_.validate();
    if (program.num_threads() != config_.num_cores)
        throw ConfigError("program thread count must equal num_cores");
    for (const auto& t : program.threads)
        for (const auto& inst : t)
            if (is_memory(inst.kind)) check_addr(inst.addr.resolve());
    l1_sets_ = config_.l1_capacity / config_.l1_ways;
    llc_sets_ = config_.llc_capacity / config_.llc_ways;
    state_.cores.resize(config_.num_cores);
    for (CoreId c = 0; c < config_.num_cores; ++c) state_.cores[c].acc = workload::initial_acc(c);
    state_.l1.assign(config_.num_cores, std::vector<CacheLine>(config_.l1_capacity));
    state_.llc.assign(config_.llc_capacity, CacheLine{});
    state_.memory.assign(config_.mem_words, 0);
}

void Machine::check_addr(Addr a) const {
    if (a >= config_.mem_words)
        throw ConfigError("address " + std::to_string(a) + " outside configured memory");
}

bool Machine::halted() const {
    for (CoreId c = 0; c < config_.num_cores; ++c)
        if (!core_done(c)) return false;
    return true;
}

CacheLine* Machine::l1_find(CoreId c, Addr a) {
    auto& lines = state_.l1[c];
    const uint32_t base = set_index(a, l1_sets_) * config_.l1_ways;
    for (uint32_t w = 0; w < config_.l1_ways; ++w) {
        auto& l = lines[base + w];
        if (l.state != LineState::Invalid && l.addr == a) return &l;
    }
    return nullptr;
}

CacheLine& Machine::l1_allocate(CoreId c, Addr a) {
    auto& lines = state_.l1[c];
    const uint32_t base = set_index(a, l1_sets_) * config_.l1_ways;
    CacheLine* victim = &lines[base];
    for (uint32_t w = 0; w < config_.l1_ways; ++w) {
        auto& l = lines[base + w];
        if (l.state == LineState::Invalid) return l;
        if (l.last_use < victim->last_use) victim = &l;
    }
    if (victim->state == LineState::Modified) writeback(c, *victim);
    victim->state = LineState::Invalid;
    return *victim;
}

CacheLine* Machine::llc_find(Addr a) {
    const uint32_t base = set_index(a, llc_sets_) * config_.llc_ways;
    for (uint32_t w = 0; w < config_.llc_ways; ++w) {
        auto& l = state_.llc[base + w];
        if (l.state != LineState::Invalid && l.addr == a) return &l;
    }
    return nullptr;
}

CacheLine& Machine::llc_allocate(Addr a) {
    const uint32_t base = set_index(a, llc_sets_) * config_.llc_ways;
    CacheLine* victim = &state_.llc[base];
    for (uint32_t w = 0; w < config_.llc_ways; ++w) {
        auto& l = state_.llc[base + w];
        if (l.state == LineState::Invalid) {
            victim = &l;
            break;
        }
        if (l.last_use < victim->last_use) victim = &l;
    }
    if (victim->state != LineState::Invalid && victim->dirty) state_.memory[victim->addr] = victim->value;
    *victim = CacheLine{a, state_.memory[a], LineState::Shared, false, ++state_.use_tick};
    return *victim;
}

Word Machine::llc_read(Addr a) {
    CacheLine* l = llc_find(a);
    if (!l) l = &llc_allocate(a);
    l->last_use = ++state_.use_tick;
    return l->value;
}

void Machine::llc_write(Addr a, Word v) {
    CacheLine* l = llc_find(a);
    if (!l) l = &llc_allocate(a);
    l->value = v;
    l->dirty = true;
    l->last_use = ++state_.use_tick;
}

void Machine::writeback(CoreId c, CacheLine& line) {
    llc_write(line.addr, maybe_corrupt_transfer(FaultSite::L1ToLlcEviction, c, line.addr, line.value));
}

Word Machine::maybe_corrupt_transfer(FaultSite site, CoreId c, Addr a, Word v) {
    if (!fault_armed_ || fault_.fired || fault_.site != site) return v;
    if (state_.clock < fault_.cycle || fault_.locus % config_.num_cores != c) return v;
    fault_.fired = fault_.struck = true;
    fault_.strike_cycle = state_.clock;
    fault_.strike_addr = a;
    return v ^ (1u << fault_.bit);
}

AccessResult Machine::access(CoreId core, InstKind kind, Addr addr, Word store_value) {
    check_addr(addr);
    if (core >= config_.num_cores) throw ConfigError("core id out of range");
    CacheLine* line = l1_find(core, addr);

    if (kind == InstKind::Load) {
        if (line) {
            line->last_use = ++state_.use_tick;
            return {line->value, AccessOutcome::Hit};
        }
        for (CoreId r = 0; r < config_.num_cores; ++r) {
            if (r == core) continue;
            CacheLine* rl = l1_find(r, addr);
            if (rl && rl->state == LineState::Modified) {
                writeback(r, *rl);
                rl->state = LineState::Shared;
            }
        }
        Word v = maybe_corrupt_transfer(FaultSite::CoherenceFill, core, addr, llc_read(addr));
        CacheLine& nl = l1_allocate(core, addr);
        nl = CacheLine{addr, v, LineState::Shared, false, ++state_.use_tick};
        return {v, AccessOutcome::Miss};
    }

    // Store: any remote copy forces an upgrade, and only a Modified line hits.
    for (CoreId r = 0; r < config_.num_cores; ++r) {
        if (r == core) continue;
        if (CacheLine* rl = l1_find(r, addr)) rl->state = LineState::Invalid;
    }
    AccessOutcome outcome =
        (line && line->state == LineState::Modified) ? AccessOutcome::Hit : AccessOutcome::Miss;
    if (!line) line = &l1_allocate(core, addr);
    *line = CacheLine{addr, store_value, LineState::Modified, false, ++state_.use_tick};
    return {store_value, outcome};
}

uint32_t Machine::latency(CoreId c, const CoreState& cs, InstKind kind, AccessOutcome outcome) const {
    int64_t lat;
    if (kind == InstKind::Alu) {
        lat = config_.lat_alu;
    } else if (outcome == AccessOutcome::Hit) {
        lat = config_.lat_l1_hit;
    } else {
        // Perturbation has a per-access part and a part shared by a window of
        // 64 instructions, so replay drift is not averaged away over a block.
        lat = static_cast<int64_t>(config_.lat_miss) +
              jitter_offset(config_.jitter_seed, c, cs.pc, config_.jitter) +
              jitter_offset(config_.perturb_seed ^ 0x7e57ull, c, cs.pc, config_.perturb) +
              jitter_offset(config_.perturb_seed ^ 0xb1a5ull, c, cs.pc >> 6, config_.perturb);
    }
    for (const auto& d : config_.extra_delays)
        if (d.core == c && d.inst_idx == cs.pc) lat += d.cycles;
    return static_cast<uint32_t>(std::max<int64_t>(lat, 1));
}

void Machine::strike_state_sites() {
    if (state_.clock < fault_.cycle) return;
    const Word mask = 1u << fault_.bit;
    auto strike = [&](Word& w, Addr a) {
        w ^= mask;
        fault_.struck = true;
        fault_.strike_cycle = state_.clock;
        fault_.strike_addr = a;
    };
    switch (fault_.site) {
        case FaultSite::L1Line: {
            fault_.fired = true;
            const CoreId c = fault_.locus % config_.num_cores;
            std::vector<CacheLine*> valid;
            for (auto& l : state_.l1[c])
                if (l.state != LineState::Invalid) valid.push_back(&l);
            if (!valid.empty()) {
                CacheLine* l = valid[(fault_.locus / config_.num_cores) % valid.size()];
                strike(l->value, l->addr);
            }
            break;
        }
        case FaultSite::LlcLine: {
            fault_.fired = true;
            std::vector<CacheLine*> valid;
            for (auto& l : state_.llc)
                if (l.state != LineState::Invalid) valid.push_back(&l);
            if (!valid.empty()) {
                CacheLine* l = valid[fault_.locus % valid.size()];
                strike(l->value, l->addr);
            }
            break;
        }
        case FaultSite::MemoryWord:
            fault_.fired = true;
            if (fault_.locus < config_.mem_words) strike(state_.memory[fault_.locus], fault_.locus);
            break;
        default:
            break;
    }
}

std::vector<CommitEvent> Machine::step() {
    std::vector<CommitEvent> out;
    step(out, nullptr);
    return out;
}

void Machine::step(std::vector<CommitEvent>& out, StepHooks* hooks) {
    out.clear();
    if (halted()) return;
    ++state_.clock;
    const Cycle now = state_.clock;
    if (hooks) hooks->begin_cycle(now);
    if (fault_armed_ && !fault_.fired) strike_state_sites();

    for (CoreId c = 0; c < config_.num_cores; ++c) {
        CoreState& cs = state_.cores[c];
        const auto& thread = program_->threads[c];
        if (cs.pc >= thread.size() || cs.ready_cycle > now) continue;
        const auto& inst = thread[cs.pc];
        if (hooks && !hooks->may_perform(c, inst, cs)) {
            cs.ready_cycle = now + 1;
            continue;
        }

        const bool reg_fault = fault_armed_ && !fault_.fired && fault_.site == FaultSite::RegWriteback &&
                               fault_.cycle == now && fault_.locus % config_.num_cores == c;
        const Word flip = reg_fault ? (1u << fault_.bit) : 0u;

        CommitEvent ev;
        ev.core = c;
        ev.inst_idx = cs.pc;
        ev.kind = inst.kind;
        ev.gp_time = now;
        if (inst.kind == InstKind::Load) {
            ev.addr = inst.addr.resolve();
            auto r = access(c, InstKind::Load, ev.addr);
            ev.outcome = r.outcome;
            ev.result = workload::execute(inst, cs.acc, r.value ^ flip);
        } else if (inst.kind == InstKind::Store) {
            ev.addr = inst.addr.resolve();
            Word v = workload::execute(inst, cs.acc, 0) ^ flip;
            ev.outcome = access(c, InstKind::Store, ev.addr, v).outcome;
            ev.result = v;
        } else {
            workload::execute(inst, cs.acc, 0);
            cs.acc ^= flip;
            ev.result = cs.acc;
        }
        if (reg_fault) {
            fault_.fired = fault_.struck = true;
            fault_.strike_cycle = now;
            fault_.strike_addr = ev.addr;
        }
        if (is_memory(inst.kind)) ev.mem_idx = cs.mem_idx++;

        cs.ready_cycle = now + latency(c, cs, inst.kind, ev.outcome);
        ++cs.pc;
        ++cs.committed;
        state_.last_commit = now;
        out.push_back(ev);
        if (hooks) hooks->on_commit(ev);
    }
    // A register-writeback fault whose core did not commit that cycle is spent.
    if (fault_armed_ && !fault_.fired && fault_.site == FaultSite::RegWriteback && fault_.cycle <= now)
        fault_.fired = true;
}

Checkpoint Machine::snapshot() const { return Checkpoint{config_, state_}; }

void Machine::restore(const Checkpoint& cp) {
    if (!cp.config.same_geometry(config_) || cp.state.cores.size() != config_.num_cores)
        throw ConfigError("checkpoint was taken on a machine with a different configuration");
    state_ = cp.state;
}

Word Machine::coherent_value(Addr addr) const {
    check_addr(addr);
    const uint32_t base = set_index(addr, l1_sets_) * config_.l1_ways;
    for (CoreId c = 0; c < config_.num_cores; ++c)
        for (uint32_t w = 0; w < config_.l1_ways; ++w) {
            const auto& l = state_.l1[c][base + w];
            if (l.state == LineState::Modified && l.addr == addr) return l.value;
        }
    const uint32_t lbase = set_index(addr, llc_sets_) * config_.llc_ways;
    for (uint32_t w = 0; w < config_.llc_ways; ++w) {
        const auto& l = state_.llc[lbase + w];
        if (l.state != LineState::Invalid && l.addr == addr) return l.value;
    }
    return state_.memory[addr];
}

uint64_t Machine::digest() const {
    Fnv1a h;
    h.add_value(state_.clock);
    h.add_value(state_.last_commit);
    h.add_value(state_.use_tick);
    for (const auto& c : state_.cores) {
        h.add_value(c.acc);
        h.add_value(c.pc);
        h.add_value(c.mem_idx);
        h.add_value(c.committed);
        h.add_value(c.ready_cycle);
    }
    auto add_line = [&](const CacheLine& l) {
        h.add_value(l.addr);
        h.add_value(l.value);
        h.add_value(l.state);
        h.add_value(l.dirty);
        h.add_value(l.last_use);
    };
    for (const auto& lines : state_.l1)
        for (const auto& l : lines) add_line(l);
    for (const auto& l : state_.llc) add_line(l);
    h.add(state_.memory.data(), state_.memory.size() * sizeof(Word));
    return h.h;
}

}  // namespace reptfd::machine
