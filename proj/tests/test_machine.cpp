#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reptfd/machine.hpp"

using namespace reptfd;
using namespace reptfd::machine;

static std::vector<CommitEvent> run_all(Machine& m) {
    std::vector<CommitEvent> all;
    while (!m.halted()) {
        auto ev = m.step();
        all.insert(all.end(), ev.begin(), ev.end());
    }
    return all;
}

TEST_CASE("single ALU commits at the next cycle") {
    workload::Program prog;
    prog.threads = {{th::alu(3)}};
    Machine m(th::unit_config(1), prog);
    auto ev = m.step();
    REQUIRE(ev.size() == 1);
    CHECK(ev[0].gp_time == 1);
    CHECK(ev[0].kind == InstKind::Alu);
    CHECK(ev[0].result == workload::initial_acc(0) + 3);
    CHECK(m.halted());
    CHECK(m.step().empty());
    CHECK(m.clock() == 1);
}

TEST_CASE("same-cycle commits are ordered by core id") {
    workload::Program prog;
    prog.threads = {{th::load(0x8000)}, {th::load(0x9000)}, {th::store(0xa000)}};
    Machine m(th::unit_config(3), prog);
    auto ev = m.step();
    REQUIRE(ev.size() == 3);
    for (CoreId c = 0; c < 3; ++c) {
        CHECK(ev[c].core == c);
        CHECK(ev[c].gp_time == 1);
    }
}

TEST_CASE("two fresh runs give identical event streams") {
    const auto prog = th::random_program(4, 3000, 0.2, 0.4, 5);
    Machine a(th::small_config(4), prog), b(th::small_config(4), prog);
    CHECK(run_all(a) == run_all(b));
    CHECK(a.digest() == b.digest());
}

TEST_CASE("access follows the MSI hand traces") {
    workload::Program prog;
    prog.threads = {{}, {}};
    Machine m(th::unit_config(2), prog);
    const Addr a = 0x40;

    SUBCASE("store then remote load misses and sees the value") {
        CHECK(m.access(0, InstKind::Store, a, 0x5).outcome == AccessOutcome::Miss);
        auto r = m.access(1, InstKind::Load, a);
        CHECK(r.value == 0x5);
        CHECK(r.outcome == AccessOutcome::Miss);
    }
    SUBCASE("repeated local load hits") {
        CHECK(m.access(0, InstKind::Load, a).outcome == AccessOutcome::Miss);
        CHECK(m.access(0, InstKind::Load, a).outcome == AccessOutcome::Hit);
    }
    SUBCASE("store to a line cached remotely is an upgrade miss") {
        m.access(0, InstKind::Load, a);
        CHECK(m.access(1, InstKind::Store, a, 9).outcome == AccessOutcome::Miss);
        // core0's copy is gone; its next access misses and observes the store.
        auto r = m.access(0, InstKind::Load, a);
        CHECK(r.outcome == AccessOutcome::Miss);
        CHECK(r.value == 9);
    }
    SUBCASE("store on an owned line hits") {
        m.access(0, InstKind::Store, a, 1);
        CHECK(m.access(0, InstKind::Store, a, 2).outcome == AccessOutcome::Hit);
        CHECK(m.coherent_value(a) == 2);
    }
    SUBCASE("out-of-range address") {
        CHECK_THROWS_AS(m.access(0, InstKind::Load, m.config().mem_words), ConfigError);
    }
}

TEST_CASE("coherence invariants over a random run") {
    const auto prog = th::random_program(4, 4000, 0.3, 0.5, 21, 16);
    auto cfg = th::small_config(4);
    cfg.l1_capacity = 64;  // force evictions
    cfg.l1_ways = 2;
    Machine m(cfg, prog);
    const auto ev = run_all(m);

    // Positions in the event stream, which is the machine's perform order.
    std::map<Addr, std::pair<CoreId, std::size_t>> last_store;
    std::map<std::pair<CoreId, Addr>, std::size_t> last_access;
    std::map<std::pair<CoreId, Cycle>, int> mem_per_cycle;
    for (std::size_t i = 0; i < ev.size(); ++i) {
        const auto& e = ev[i];
        if (!is_memory(e.kind)) continue;
        CHECK(++mem_per_cycle[{e.core, e.gp_time}] == 1);
        auto st = last_store.find(e.addr);
        if (st != last_store.end() && st->second.first != e.core) {
            // First access after a remote store must miss.
            auto la = last_access.find({e.core, e.addr});
            if (la == last_access.end() || la->second <= st->second.second) CHECK(e.outcome == AccessOutcome::Miss);
        }
        last_access[{e.core, e.addr}] = i;
        if (e.kind == InstKind::Store) last_store[e.addr] = {e.core, i};
    }

    // Values: the run equals the sequentially consistent execution of its own conflict order.
    const auto acc = oracle::accesses(ev, 0, cfg.sampling_span);
    const auto golden = oracle::replay_by_oracle(prog, acc);
    std::vector<std::vector<Word>> got(4);
    for (const auto& e : ev) got[e.core].push_back(e.result);
    CHECK(got == golden.results);
    for (const auto& [a, v] : golden.memory) CHECK(m.coherent_value(a) == v);
}

TEST_CASE("a store's gp_time precedes every load that observes it") {
    const auto prog = th::random_program(4, 3000, 0.5, 0.5, 2, 8);
    Machine m(th::small_config(4), prog);
    const auto ev = run_all(m);
    std::map<std::pair<Addr, Word>, Cycle> stored_at;
    for (const auto& e : ev) {
        if (e.kind == InstKind::Store) stored_at.try_emplace({e.addr, e.result}, e.gp_time);
        if (e.kind == InstKind::Load && e.result != 0) {
            auto it = stored_at.find({e.addr, e.result});
            REQUIRE(it != stored_at.end());
            CHECK(it->second <= e.gp_time);
        }
    }
}

TEST_CASE("snapshot and restore") {
    const auto prog = th::random_program(4, 3000, 0.2, 0.3, 8);
    const auto cfg = th::small_config(4);

    SUBCASE("restore at cycle 0 equals a fresh machine") {
        Machine m(cfg, prog);
        const auto cp = m.snapshot();
        for (int i = 0; i < 500; ++i) m.step();
        m.restore(cp);
        Machine fresh(cfg, prog);
        CHECK(m.state() == fresh.state());
        CHECK(m.digest() == fresh.digest());
    }
    SUBCASE("mid-run restore reproduces the continuation") {
        Machine m(cfg, prog);
        for (int i = 0; i < 700; ++i) m.step();
        const auto cp = m.snapshot();
        std::vector<CommitEvent> first, second;
        for (int i = 0; i < 1000; ++i) {
            auto ev = m.step();
            first.insert(first.end(), ev.begin(), ev.end());
        }
        m.restore(cp);
        for (int i = 0; i < 1000; ++i) {
            auto ev = m.step();
            second.insert(second.end(), ev.begin(), ev.end());
        }
        CHECK(!first.empty());
        CHECK(first == second);
    }
    SUBCASE("restore with a different core count fails") {
        Machine m(cfg, prog);
        const auto prog2 = th::random_program(2, 100, 0.2, 0.3, 8);
        Machine other(th::small_config(2), prog2);
        CHECK_THROWS_AS(m.restore(other.snapshot()), ConfigError);
    }
}

TEST_CASE("config validation") {
    MachineConfig c;
    c.segment_length = c.sampling_span * 3 + 1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.l1_capacity = 10;
    c.l1_ways = 4;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    workload::Program prog;
    prog.threads = {{}};
    CHECK_THROWS_AS(Machine(th::unit_config(2), prog), ConfigError);
}

TEST_CASE("jitter stays within its amplitude and is reproducible") {
    for (uint64_t i = 0; i < 2000; ++i) {
        const int j = jitter_offset(7, 3, i, 5);
        CHECK(j >= -5);
        CHECK(j <= 5);
        CHECK(j == jitter_offset(7, 3, i, 5));
    }
    CHECK(jitter_offset(7, 3, 11, 0) == 0);
}
