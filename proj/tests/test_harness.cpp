#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <random>

#include "helpers.hpp"
#include "oracles.hpp"
#include "reptfd/harness.hpp"
#include "reptfd/kv.hpp"
#include "reptfd/log_io.hpp"

using namespace reptfd;
using namespace reptfd::harness;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_config() {
    ExperimentConfig c;
    c.name = "small";
    c.machine.num_cores = c.workload.num_threads = 4;
    c.machine.mem_words = 1u << 16;
    c.machine.segment_length = 8 * c.machine.sampling_span;
    c.workload.insts_per_thread = 6000;
    c.workload.share_ratio = 0.05;
    c.workload.seed = 5;
    return c;
}

fs::path scratch(const std::string& name) {
    auto d = fs::temp_directory_path() / ("reptfd_harness_" + name);
    fs::remove_all(d);
    return d;
}

}  // namespace

TEST_CASE("config parsing") {
    const auto c = parse_config(
        "# experiment\n"
        "name = demo\ncores = 2\nsampling_span = 256\nsegment_length = 0x2000\n"
        "insts_per_thread = 100\nshare_ratio = 0.5\nperturb = 3\nperturb_seed = 77\nmode = pipeline\n");
    CHECK(c.name == "demo");
    CHECK(c.machine.num_cores == 2);
    CHECK(c.workload.num_threads == 2);
    CHECK(c.machine.sampling_span == 256);
    CHECK(c.machine.segment_length == 0x2000);
    CHECK(c.workload.share_ratio == 0.5);
    CHECK(c.replay.perturb == 3);
    CHECK(c.replay.perturb_seed == 77);
    CHECK(c.mode == Mode::Pipeline);
    CHECK(parse_config(serialize_config(c)).machine == c.machine);
    CHECK(serialize_config(parse_config(serialize_config(c))) == serialize_config(c));

    CHECK_THROWS_AS(parse_config("bogus = 1\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("cores = two\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("cores\n"), ParseError);
    CHECK_THROWS_AS(parse_config("sampling_span = 500\nsegment_length = 1200\n"), ConfigError);
    CHECK_THROWS_AS(parse_config("mode = fly\n"), ConfigError);
}

TEST_CASE("kv helpers") {
    const auto e = kv::parse("a = 1  # note\n\n  b=0x10\n");
    REQUIRE(e.size() == 2);
    CHECK(e[0].key == "a");
    CHECK(e[0].value == "1");
    CHECK(kv::to_u64(e[1]) == 16);
    CHECK(e[1].line == 3);
    CHECK_THROWS_AS(kv::to_double(kv::Entry{"x", "1.5z", 1}), ConfigError);
}

TEST_CASE("one core, one segment: logs exist and no orders") {
    auto c = small_config();
    c.machine.num_cores = c.workload.num_threads = 1;
    c.machine.segment_length = 64 * c.machine.sampling_span;
    c.workload.insts_per_thread = 3000;
    const auto dir = scratch("one");
    c.out_dir = dir.string();
    const auto rec = run_record(c, c.program());
    CHECK(rec.segments.size() == 1);
    CHECK(fs::exists(dir / "seg_0000.det"));
    CHECK(fs::exists(dir / "seg_0000.res"));
    CHECK(fs::exists(dir / "config.txt"));
    const auto m = run_replay(c, c.program(), rec).metrics;
    CHECK(m.orders_per_10k_insts == 0.0);
    CHECK(m.instructions == 3000);
    fs::remove_all(dir);
}

TEST_CASE("recording twice writes byte-identical logs, and they load back") {
    auto c = small_config();
    const auto d1 = scratch("a"), d2 = scratch("b");
    c.out_dir = d1.string();
    const auto rec = run_record(c, c.program());
    c.out_dir = d2.string();
    run_record(c, c.program());
    CHECK(rec.segments.size() > 1);
    for (const auto& e : fs::directory_iterator(d1))
        CHECK(log_io::read_file(e.path().string()) == log_io::read_file((d2 / e.path().filename()).string()));

    const auto loaded = load_recorded(d1.string());
    CHECK(loaded.program == c.program());
    REQUIRE(loaded.record.segments.size() == rec.segments.size());
    for (std::size_t s = 0; s < rec.segments.size(); ++s) {
        CHECK(loaded.record.segments[s].det == rec.segments[s].det);
        CHECK(loaded.record.segments[s].res == rec.segments[s].res);
        CHECK(loaded.record.segments[s].first_run_cycles == rec.segments[s].first_run_cycles);
    }
    CHECK(loaded.record.first_run_cycles == rec.first_run_cycles);
    CHECK(loaded.record.instructions == rec.instructions);
    fs::remove_all(d1);
    fs::remove_all(d2);
}

TEST_CASE("replay aggregation sums the segments") {
    const auto c = small_config();
    const auto prog = c.program();
    const auto rec = run_record(c, prog);
    const auto out = run_replay(c, prog, rec);

    replayer::ReplaySession rs(c.machine, prog, c.replay);
    Cycle cycles = 0;
    uint64_t stalled = 0, blocks = 0;
    Cycle stall = 0;
    for (const auto& s : rec.segments) {
        const auto r = rs.replay_segment(s.det, s.res);
        cycles += r.replay_cycles;
        stalled += r.stalled_block_count;
        blocks += r.total_block_count;
        stall += r.total_stall_cycles;
    }
    CHECK(out.report.replay_cycles == cycles);
    CHECK(out.report.stalled_block_count == stalled);
    CHECK(out.report.total_block_count == blocks);
    CHECK(out.report.total_stall_cycles == stall);
    CHECK(out.metrics.replay_slowdown == doctest::Approx(double(cycles) / double(rec.first_run_cycles) - 1));

    // Result-log payload: 4 bytes per group of 1024 instructions per core.
    uint64_t groups = 0;
    for (const auto& s : rec.segments)
        for (CoreId core = 0; core < 4; ++core) groups += (s.res.instructions(core) + 1023) / 1024;
    CHECK(out.metrics.result_log_payload_bytes == 4 * groups);

    auto quiet = c;
    quiet.replay.perturb = 0;
    const auto null = run_replay(quiet, prog, rec);
    CHECK(null.metrics.replay_slowdown == 0.0);
    CHECK(null.report.total_stall_cycles == 0);
}

TEST_CASE("num_segments limits the recorded prefix") {
    auto c = small_config();
    c.num_segments = 2;
    const auto rec = run_record(c, c.program());
    CHECK(rec.segments.size() == 2);
    const auto out = run_replay(c, c.program(), rec);
    CHECK(out.report.segment_cycles.size() == 2);
    CHECK(out.report.detections.empty());
}

TEST_CASE("pipeline schedule") {
    SUBCASE("one segment serializes replay after record") {
        const auto r = pipeline_schedule({1000}, {1000});
        CHECK(r.makespan == 2000);
        CHECK(r.overhead == 1.0);
    }
    SUBCASE("uniformly 10% slower replay tends to 10%") {
        // Makespan is 1000 + 1100 n; overhead = 0.1 + 1/n.
        for (std::size_t n : {10u, 100u, 1000u}) {
            const auto r = pipeline_schedule(std::vector<Cycle>(n, 1000), std::vector<Cycle>(n, 1100));
            CHECK(r.makespan == 1000 + 1100 * n);
            CHECK(r.overhead == doctest::Approx(0.1 + 1.0 / n));
        }
    }
    SUBCASE("faster replay leaves only the last segment exposed") {
        const std::size_t n = 200;
        const auto r = pipeline_schedule(std::vector<Cycle>(n, 1000), std::vector<Cycle>(n, 600));
        CHECK(r.makespan == 1000 * n + 600);
        CHECK(r.overhead == doctest::Approx(600.0 / (1000.0 * n)));
    }
    SUBCASE("matches the tick simulator on irregular stages") {
        std::mt19937_64 rng(3);
        for (int trial = 0; trial < 200; ++trial) {
            const std::size_t n = 1 + rng() % 10;
            std::vector<Cycle> a(n), b(n);
            for (std::size_t i = 0; i < n; ++i) {
                a[i] = rng() % 50;
                b[i] = rng() % 80;
            }
            const auto r = pipeline_schedule(a, b);
            const auto sim = oracle::simulate_pipeline(a, b);
            CHECK(r.makespan == sim.makespan);
            CHECK(r.first_run_total == sim.record_total);
        }
    }
    CHECK_THROWS_AS(pipeline_schedule({1, 2}, {1}), ConfigError);
}

TEST_CASE("metric CSV") {
    CHECK(rows_csv({}) == "workload,metric,value\n");
    CHECK(parse_rows_csv(rows_csv({})).empty());

    const auto c = small_config();
    const auto m = run_experiment(c);
    const auto rows = metric_rows(m);
    const auto back = parse_rows_csv(rows_csv(rows));
    CHECK(back == rows);
    auto value = [&](const char* k) {
        for (const auto& r : back)
            if (r.metric == k) return r.value;
        return -1.0;
    };
    CHECK(value("replay_slowdown") == m.replay_slowdown);
    CHECK(value("mean_stall_cycles") == m.mean_stall_cycles);
    CHECK(value("det_log_bytes_per_KI") == m.det_log_bytes_per_KI);
    CHECK(value("instructions") == double(m.instructions));
    CHECK_THROWS_AS(parse_rows_csv("a,b\n"), ParseError);
    CHECK_THROWS_AS(parse_rows_csv("workload,metric,value\nx,y,zz\n"), ParseError);

    const auto svg = bar_chart_svg(back, "replay_slowdown", "Replay slowdown");
    CHECK(svg.find("<svg") == 0);
    CHECK(svg.find(">small</text>") != std::string::npos);
    const auto dir = scratch("charts");
    CHECK(write_charts(back, dir.string()).size() == 4);
    CHECK(fs::exists(dir / "mean_stall_cycles.svg"));
    fs::remove_all(dir);
}

TEST_CASE("fault runs are deterministic and recover from every detection") {
    auto c = small_config();
    c.workload.insts_per_thread = 3000;
    faults::CampaignParams p;
    p.n = 40;
    p.seed = 12;
    const auto a = run_faults(c, p);
    const auto b = run_faults(c, p);
    CHECK(a.rows == b.rows);
    CHECK(a.rollback_clean == a.rollback_checked);
    CHECK(a.rollback_checked == a.stats.detected_malignant);
    CHECK(a.rollbacks >= a.rollback_checked);
}

TEST_CASE("the default suite") {
    const auto suite = default_suite();
    CHECK(suite.size() == 5);
    for (const auto& c : suite) {
        CHECK(c.machine.num_cores == 8);
        CHECK_NOTHROW(c.validate());
    }
}
