#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "reptfd/harness.hpp"
#include "reptfd/kv.hpp"

namespace fs = std::filesystem;
using namespace reptfd;

namespace {

constexpr int kExitClean = 0;
constexpr int kExitError = 1;
constexpr int kExitDetected = 2;
constexpr int kExitDivergence = 3;

void write_file(const std::string& path, const std::string& text) {
    if (path.empty() || path == "-") {
        std::cout << text;
        return;
    }
    if (auto parent = fs::path(path).parent_path(); !parent.empty()) fs::create_directories(parent);
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

void print_metrics(const harness::MetricsReport& m) {
    std::printf("%-10s insts=%llu segs=%u rec=%llu rep=%llu slowdown=%.4f stalled=%.4f mean_stall=%.2f "
                "orders/10k=%.3f det=%.2fB/KI res=%.3fB/KI pipeline=%.4f detections=%llu\n",
                m.workload.c_str(), static_cast<unsigned long long>(m.instructions), m.segments,
                static_cast<unsigned long long>(m.first_run_cycles), static_cast<unsigned long long>(m.replay_cycles),
                m.replay_slowdown, m.stalled_block_fraction, m.mean_stall_cycles, m.orders_per_10k_insts,
                m.det_log_bytes_per_KI, m.result_log_bytes_per_KI, m.pipeline_makespan_overhead,
                static_cast<unsigned long long>(m.detections));
}

int cmd_record(const std::string& config, const std::string& out) {
    auto cfg = harness::load_config(config);
    cfg.out_dir = out;
    const auto program = cfg.program();
    const auto rec = harness::run_record(cfg, program);
    std::printf("recorded %zu segments, %llu instructions, %llu cycles into %s\n", rec.segments.size(),
                static_cast<unsigned long long>(rec.instructions),
                static_cast<unsigned long long>(rec.first_run_cycles), out.c_str());
    return kExitClean;
}

int cmd_replay(const std::string& logs, uint64_t perturb_seed, const std::optional<uint32_t>& perturb,
               const std::string& csv) {
    auto run = harness::load_recorded(logs);
    run.config.replay.perturb_seed = perturb_seed;
    if (perturb) run.config.replay.perturb = *perturb;
    const auto out = harness::run_replay(run.config, run.program, run.record);
    print_metrics(out.metrics);
    for (const auto& d : out.report.detections)
        std::printf("detection segment=%u core=%u group=%u expected=0x%08x actual=0x%08x\n", d.segment, d.core,
                    d.group_idx, d.expected, d.actual);
    write_file(csv.empty() ? (fs::path(logs) / "metrics.csv").string() : csv,
               harness::rows_csv(harness::metric_rows(out.metrics)));
    return out.report.detections.empty() ? kExitClean : kExitDetected;
}

int cmd_pipeline(const std::string& config) {
    const auto cfg = harness::load_config(config);
    const auto p = harness::run_pipeline(cfg);
    std::printf("segment,record_cycles,replay_cycles\n");
    for (std::size_t m = 0; m < p.record_cycles.size(); ++m)
        std::printf("%zu,%llu,%llu\n", m, static_cast<unsigned long long>(p.record_cycles[m]),
                    static_cast<unsigned long long>(p.replay_cycles[m]));
    std::printf("first_run_total=%llu makespan=%llu overhead=%.6f\n",
                static_cast<unsigned long long>(p.first_run_total), static_cast<unsigned long long>(p.makespan),
                p.overhead);
    return kExitClean;
}

int cmd_faults(const std::string& config, const std::string& campaign, const std::string& csv,
               const std::string& stats_path) {
    const auto cfg = harness::load_config(config);
    const auto params = faults::load_campaign(campaign);
    const auto out = harness::run_faults(cfg, params);
    write_file(csv, faults::campaign_csv(out.rows));
    std::string stats = faults::stats_csv(out.stats);
    stats += "rollback_runs," + std::to_string(out.rollback_checked) + "\n";
    stats += "rollbacks," + std::to_string(out.rollbacks) + "\n";
    stats += "rollback_clean," + std::to_string(out.rollback_clean) + "\n";
    if (stats_path.empty())
        std::cerr << stats;
    else
        write_file(stats_path, stats);
    return out.stats.detected_malignant + out.stats.masked_detected > 0 ? kExitDetected : kExitClean;
}

int cmd_report(const std::string& in, const std::string& csv, const std::string& svg) {
    std::vector<fs::path> files;
    if (fs::is_regular_file(in)) {
        files.push_back(in);
    } else {
        for (const auto& e : fs::recursive_directory_iterator(in))
            if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<harness::MetricRow> rows;
    for (const auto& f : files) {
        auto part = harness::parse_rows_csv(kv::read_text(f.string()));
        rows.insert(rows.end(), part.begin(), part.end());
    }
    write_file(csv, harness::rows_csv(rows));
    if (!svg.empty())
        for (const auto& path : harness::write_charts(rows, svg)) std::printf("wrote %s\n", path.c_str());
    return kExitClean;
}

int cmd_suite(const std::string& out, uint64_t perturb_seed, bool serial) {
    auto suite = harness::default_suite();
    for (auto& c : suite) c.replay.perturb_seed = perturb_seed;
    const auto metrics = serial ? harness::run_suite_serial(suite) : harness::run_suite_parallel(suite);
    std::vector<harness::MetricRow> rows;
    uint64_t detections = 0;
    for (const auto& m : metrics) {
        print_metrics(m);
        auto r = harness::metric_rows(m);
        rows.insert(rows.end(), r.begin(), r.end());
        detections += m.detections;
    }
    if (!out.empty()) {
        write_file((fs::path(out) / "metrics.csv").string(), harness::rows_csv(rows));
        harness::write_charts(rows, out);
    }
    return detections ? kExitDetected : kExitClean;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Replay-based transient fault detection simulator"};
    app.require_subcommand(1);

    std::string config, out, logs, campaign, csv, stats, in, svg;
    uint64_t perturb_seed = 1;
    std::optional<uint32_t> perturb;
    bool serial = false;

    auto* record = app.add_subcommand("record", "Run the checked group and write per-segment logs");
    record->add_option("--config", config, "Experiment config file")->required();
    record->add_option("--out", out, "Output directory")->required();

    auto* replay = app.add_subcommand("replay", "Replay recorded logs on the redundant group");
    replay->add_option("--logs", logs, "Directory written by record")->required();
    replay->add_option("--perturb-seed", perturb_seed, "Replay timing perturbation seed")->required();
    replay->add_option("--perturb", perturb, "Perturbation amplitude in cycles (0 disables)");
    replay->add_option("--csv", csv, "Metrics CSV (default <logs>/metrics.csv)");

    auto* pipeline = app.add_subcommand("pipeline", "Two-stage record/replay pipeline overhead");
    pipeline->add_option("--config", config, "Experiment config file")->required();

    auto* fcmd = app.add_subcommand("faults", "Fault-injection campaign");
    fcmd->add_option("--config", config, "Experiment config file")->required();
    fcmd->add_option("--campaign", campaign, "Campaign spec file")->required();
    fcmd->add_option("--csv", csv, "Per-injection CSV (default stdout)");
    fcmd->add_option("--stats", stats, "Summary CSV (default stderr)");

    auto* report = app.add_subcommand("report", "Merge metrics CSVs and draw charts");
    report->add_option("--in", in, "Directory searched for metrics.csv, or one CSV file")->required();
    report->add_option("--csv", csv, "Merged CSV")->required();
    report->add_option("--svg", svg, "Directory for SVG charts");

    auto* suite = app.add_subcommand("suite", "Run the default 8-core suite");
    suite->add_option("--out", out, "Directory for metrics.csv and charts");
    suite->add_option("--perturb-seed", perturb_seed, "Replay timing perturbation seed");
    suite->add_flag("--serial", serial, "Run workloads one after another");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*record) return cmd_record(config, out);
        if (*replay) return cmd_replay(logs, perturb_seed, perturb, csv);
        if (*pipeline) return cmd_pipeline(config);
        if (*fcmd) return cmd_faults(config, campaign, csv, stats);
        if (*report) return cmd_report(in, csv, svg);
        if (*suite) return cmd_suite(out, perturb_seed, serial);
    } catch (const DivergenceError& e) {
        std::cerr << "divergence: " << e.what() << '\n';
        return kExitDivergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitError;
    }
    return kExitError;
}
