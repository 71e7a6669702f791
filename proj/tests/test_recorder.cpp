#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reptfd/recorder.hpp"

using namespace reptfd;
using namespace reptfd::recorder;

TEST_CASE("pending periods") {
    // Block 4 performs in (t4, t5] and may have started at t3.
    CHECK(block_period(4) == PendingPeriod{3, 5});
    CHECK(block_period(0) == PendingPeriod{0, 1});
    CHECK(block_period(1) == PendingPeriod{0, 2});
}

TEST_CASE("is_inferrable") {
    const PendingPeriod A{3, 5}, B{1, 3}, C{2, 4};
    CHECK(is_inferrable(B, A));
    CHECK(is_inferrable(A, B));
    CHECK_FALSE(is_inferrable(C, A));
    CHECK_FALSE(is_inferrable(A, A));
    CHECK(is_inferrable(block_period(0), block_period(2)));
    CHECK_FALSE(is_inferrable(block_period(1), block_period(2)));
}

TEST_CASE("checksum fold") {
    ChecksumState s;
    CHECK(checksum_update(s, 0xdeadbeef).checksum == 0xdeadbeef);
    auto a = checksum_update(checksum_update(s, 0x1234), 0x55);
    CHECK(checksum_update(a, 0x55).checksum == 0x1234);
    auto f = checksum_update(checksum_update(checksum_update(s, 1), 2), 4);
    CHECK(f.checksum == 7);
    CHECK_FALSE(f.out_valid);

    ChecksumState g;
    for (int i = 0; i < 1023; ++i) g = checksum_update(g, 1);
    CHECK_FALSE(g.out_valid);
    g = checksum_update(g, 1);
    CHECK(g.out_valid);
    CHECK(g.checksum == 0);  // 1024 ones cancel
    ResultLog log{1, {0}, {}};
    checksum_export(g, 0, log);
    REQUIRE(log.records.size() == 1);
    CHECK(log.records[0] == ChecksumRecord{0, 0, 0});
    CHECK(checksum_update(g, 9).checksum == 9);
}

TEST_CASE("single-bit flips always change the group checksum, pairs may cancel") {
    std::vector<Word> r(1024);
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = static_cast<Word>(splitmix64(i));
    const Word base = oracle::checksum_groups(r)[0];
    for (int bit = 0; bit < 32; ++bit) {
        auto x = r;
        x[bit * 7] ^= 1u << bit;
        CHECK(oracle::checksum_groups(x)[0] != base);
        x[bit * 7 + 3] ^= 1u << bit;
        CHECK(oracle::checksum_groups(x)[0] == base);
    }
}

TEST_CASE("block records count memory ops per span") {
    // One core, unit latencies: instruction i performs at cycle i + 1.
    workload::ThreadProgram t(3 * 512, th::alu());
    const std::size_t first[] = {0, 100, 200, 300, 511};
    const std::size_t second[] = {512, 513, 600, 700, 800, 900, 1023};
    for (auto i : first) t[i] = th::load(0x8000 + static_cast<Addr>(i));
    for (auto i : second) t[i] = th::store(0x8000 + static_cast<Addr>(i));
    workload::Program prog;
    prog.threads = {t};

    const auto rec = th::record_all(th::unit_config(1), prog);
    REQUIRE(rec.segments.size() == 1);
    const auto& det = rec.segments[0].det;
    const std::vector<BlockRecord> expect{{0, 0, 5}, {0, 1, 7}, {0, 2, 0}};
    CHECK(det.blocks == expect);
    CHECK(det.orders.empty());

    const auto counts = oracle::block_counts(oracle::accesses(rec.events[0], 0, 512));
    for (const auto& b : det.blocks) {
        auto it = counts.find({b.core, b.block_idx});
        CHECK((it == counts.end() ? 0u : it->second) == b.mem_inst_count);
    }
}

TEST_CASE("store then remote load in one span yields exactly one order") {
    workload::Program prog;
    prog.threads = {{th::store(0x100, 3)}, {th::alu(), th::alu(), th::load(0x100)}};
    const auto rec = th::record_all(th::unit_config(2), prog);
    const auto& det = rec.segments[0].det;
    REQUIRE(det.orders.size() == 1);
    CHECK(det.orders[0] == OrderRecord{0, 0, 1, 0});
}

TEST_CASE("on_miss finds exactly the conflicting window entries") {
    Recorder r(3, 512);
    auto ev = [](CoreId c, uint32_t idx, InstKind k, Addr a) {
        CommitEvent e;
        e.core = c;
        e.kind = k;
        e.addr = a;
        e.mem_idx = idx;
        e.outcome = AccessOutcome::Miss;
        return e;
    };
    r.on_event(ev(0, 0, InstKind::Load, 0x10));
    r.on_event(ev(1, 0, InstKind::Load, 0x10));
    r.on_event(ev(1, 1, InstKind::Store, 0x20));
    CHECK(r.on_miss(2, ev(2, 0, InstKind::Load, 0x10)).empty());  // load-load
    CHECK(r.on_miss(2, ev(2, 0, InstKind::Load, 0x30)).empty());  // untouched address
    const auto st = r.on_miss(2, ev(2, 0, InstKind::Store, 0x10));
    CHECK(st == std::vector<OrderRecord>{{0, 0, 2, 0}, {1, 0, 2, 0}});
    CHECK(r.window(1).size() == 2);
    // Two samples later the entries have aged out.
    r.sample_all(1);
    CHECK(r.on_miss(2, ev(2, 0, InstKind::Store, 0x10)).size() == 2);
    r.sample_all(2);
    CHECK(r.on_miss(2, ev(2, 0, InstKind::Store, 0x10)).empty());
}

TEST_CASE("result log and segment finalization") {
    SUBCASE("empty segment") {
        Recorder r(2, 512);
        auto logs = r.finalize_segment();
        CHECK(logs.det.blocks.empty());
        CHECK(logs.det.orders.empty());
        CHECK(logs.res.records.empty());
        CHECK(logs.res.partial_len == std::vector<uint16_t>{0, 0});
    }
    SUBCASE("2048 ALU instructions give two checksums") {
        workload::Program prog;
        prog.threads = {workload::ThreadProgram(2048, th::alu(5))};
        const auto rec = th::record_all(th::unit_config(1), prog);
        REQUIRE(rec.segments.size() == 1);
        const auto& res = rec.segments[0].res;
        CHECK(res.records.size() == 2);
        CHECK(res.partial_len[0] == 0);
        CHECK(res.instructions(0) == 2048);
        std::vector<Word> results;
        for (const auto& e : rec.events[0]) results.push_back(e.result);
        const auto groups = oracle::checksum_groups(results);
        CHECK(res.records[0].checksum == groups[0]);
        CHECK(res.records[1].checksum == groups[1]);
    }
    SUBCASE("partial group is flushed with its length") {
        workload::Program prog;
        prog.threads = {workload::ThreadProgram(1500, th::alu(5))};
        const auto rec = th::record_all(th::unit_config(1), prog);
        const auto& res = rec.segments[0].res;
        CHECK(res.records.size() == 2);
        CHECK(res.partial_len[0] == 1500 - 1024);
        CHECK(res.full_groups(0) == 1);
        CHECK(res.instructions(0) == 1500);
    }
}

TEST_CASE("checksums match an independent fold over every segment") {
    const auto prog = th::random_program(4, 6000, 0.1, 0.3, 17);
    auto cfg = th::small_config(4);
    cfg.segment_length = 8 * cfg.sampling_span;
    const auto rec = th::record_all(cfg, prog);
    CHECK(rec.segments.size() > 1);
    for (std::size_t s = 0; s < rec.segments.size(); ++s) {
        std::vector<std::vector<Word>> per(4);
        for (const auto& e : rec.events[s]) per[e.core].push_back(e.result);
        for (CoreId c = 0; c < 4; ++c) {
            const auto groups = oracle::checksum_groups(per[c]);
            const auto& res = rec.segments[s].res;
            CHECK(res.instructions(c) == per[c].size());
            for (uint32_t g = 0; g < groups.size(); ++g) {
                const auto* r = res.find(c, g);
                REQUIRE(r != nullptr);
                CHECK(r->checksum == groups[g]);
            }
        }
    }
}

TEST_CASE("recording is complete and physically sound on random runs") {
    for (uint64_t seed = 1; seed <= 6; ++seed) {
        const auto prog = th::random_program(3, 3000, 0.3, 0.4, seed, 16);
        auto cfg = th::small_config(3);
        cfg.sampling_span = 64;
        cfg.segment_length = 16 * 64;
        const auto rec = th::record_all(cfg, prog);
        for (std::size_t s = 0; s < rec.segments.size(); ++s) {
            const auto acc = oracle::accesses(rec.events[s], rec.starts[s], cfg.sampling_span);
            const auto check = oracle::check_pairs(acc, rec.segments[s].det);
            CHECK(check.uncovered == 0);
            CHECK(check.pairs == check.inferrable + check.recorded);

            // Inferrable block order implies strictly earlier perform times.
            std::map<std::pair<CoreId, uint32_t>, std::pair<Cycle, Cycle>> span;
            for (const auto& a : acc) {
                auto [it, fresh] = span.try_emplace({a.core, a.block}, a.gp, a.gp);
                it->second.first = std::min(it->second.first, a.gp);
                it->second.second = std::max(it->second.second, a.gp);
            }
            for (const auto& [x, xs] : span)
                for (const auto& [y, ys] : span)
                    if (x.first != y.first && block_period(x.second).end_sample <= block_period(y.second).start_sample)
                        CHECK(xs.second < ys.first);

            const auto counts = oracle::block_counts(acc);
            for (const auto& b : rec.segments[s].det.blocks) {
                auto it = counts.find({b.core, b.block_idx});
                CHECK((it == counts.end() ? 0u : it->second) == b.mem_inst_count);
            }
        }
    }
}

TEST_CASE("conflict window stays within two spans of entries") {
    const auto prog = th::random_program(2, 4000, 0.2, 0.5, 4);
    auto cfg = th::unit_config(2, 32, 32 * 32);
    cfg.l1_capacity = cfg.l1_ways = 4;  // nearly every access misses but still one per cycle
    recorder::RecordSession rec(cfg, prog);
    while (!rec.done()) CHECK_NOTHROW(rec.record_segment());
}

TEST_CASE("recording is deterministic") {
    const auto prog = th::random_program(4, 5000, 0.2, 0.4, 33);
    const auto a = th::record_all(th::small_config(4), prog);
    const auto b = th::record_all(th::small_config(4), prog);
    REQUIRE(a.segments.size() == b.segments.size());
    for (std::size_t s = 0; s < a.segments.size(); ++s) {
        CHECK(a.segments[s].det == b.segments[s].det);
        CHECK(a.segments[s].res == b.segments[s].res);
    }
}
