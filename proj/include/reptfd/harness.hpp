#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "reptfd/faults.hpp"
#include "reptfd/recorder.hpp"
#include "reptfd/replayer.hpp"
#include "reptfd/workload.hpp"

namespace reptfd::harness {

enum class Mode : uint8_t { Record, Replay, Pipeline, Faults };

struct ExperimentConfig {
    ExperimentConfig() { workload.num_threads = machine.num_cores; }

    std::string name = "default";
    machine::MachineConfig machine;
    workload::WorkloadParams workload;
    replayer::ReplayOptions replay{16, 1, {}, 0};
    uint32_t num_segments = 0;  // 0 = run the program to completion
    Mode mode = Mode::Record;
    std::string out_dir;
    std::string trace;          // optional trace file replacing the generated workload

    void validate() const;
    workload::Program program() const;
    faults::RunSetup setup() const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::string& path);
std::string serialize_config(const ExperimentConfig& cfg);

struct RecordOutput {
    std::vector<recorder::SegmentLogs> segments;
    Cycle first_run_cycles = 0;
    uint64_t instructions = 0;
};

// Records segments of the checked group. When cfg.out_dir is set, writes
// config.txt, program.trace, meta.txt and seg_NNNN.det / seg_NNNN.res there.
RecordOutput run_record(const ExperimentConfig& cfg, const workload::Program& program);

struct RecordedRun {
    ExperimentConfig config;
    workload::Program program;
    RecordOutput record;
};

RecordedRun load_recorded(const std::string& dir);

struct MetricsReport {
    std::string workload;
    uint64_t instructions = 0;
    uint32_t segments = 0;
    Cycle first_run_cycles = 0;
    Cycle replay_cycles = 0;
    double replay_slowdown = 0;
    double stalled_block_fraction = 0;
    double mean_stall_cycles = 0;
    uint64_t order_records = 0;
    uint64_t block_records = 0;
    double orders_per_10k_insts = 0;
    uint64_t det_log_bytes = 0;
    double det_log_bytes_per_KI = 0;
    uint64_t result_log_payload_bytes = 0;
    double result_log_bytes_per_KI = 0;
    double pipeline_makespan_overhead = 0;
    uint64_t detections = 0;
};

struct ReplayOutput {
    replayer::ReplayReport report;
    MetricsReport metrics;
};

// Replays recorded segments on the redundant group. Throws DivergenceError.
ReplayOutput run_replay(const ExperimentConfig& cfg, const workload::Program& program, const RecordOutput& rec);

// Two-stage pipeline: replay of segment m starts once segment m's first run
// and segment m-1's replay have both finished.
struct PipelineResult {
    std::vector<Cycle> record_cycles;
    std::vector<Cycle> replay_cycles;
    Cycle first_run_total = 0;
    Cycle makespan = 0;
    double overhead = 0;
};

PipelineResult pipeline_schedule(const std::vector<Cycle>& record_cycles, const std::vector<Cycle>& replay_cycles);
PipelineResult run_pipeline(const ExperimentConfig& cfg);

MetricsReport compute_metrics(const std::string& name, const RecordOutput& rec, const replayer::ReplayReport& rep);

// Record, replay and pipeline one workload.
MetricsReport run_experiment(const ExperimentConfig& cfg);

// Low to high sharing, 8 cores.
std::vector<ExperimentConfig> default_suite();
std::vector<MetricsReport> run_suite_serial(const std::vector<ExperimentConfig>& suite);
std::vector<MetricsReport> run_suite_parallel(const std::vector<ExperimentConfig>& suite);

struct MetricRow {
    std::string workload;
    std::string metric;
    double value = 0;
    bool operator==(const MetricRow&) const = default;
};

std::vector<MetricRow> metric_rows(const MetricsReport& m);
std::string rows_csv(const std::vector<MetricRow>& rows);  // workload,metric,value
std::vector<MetricRow> parse_rows_csv(std::string_view text);
// One bar chart per metric across workloads.
std::string bar_chart_svg(const std::vector<MetricRow>& rows, const std::string& metric, const std::string& title);
// Writes the charts for slowdown, stalled fraction, mean stall and log size into dir.
std::vector<std::string> write_charts(const std::vector<MetricRow>& rows, const std::string& dir);

struct FaultsOutput {
    std::vector<faults::CampaignRow> rows;
    faults::CampaignStats stats;
    uint32_t rollbacks = 0;
    uint32_t rollback_checked = 0;
    uint32_t rollback_clean = 0;   // detected faults whose re-execution matched the golden run
};

// Campaign plus a rollback re-execution of every detected fault.
FaultsOutput run_faults(const ExperimentConfig& cfg, const faults::CampaignParams& params);

// True when a rollback-enabled run ends in the golden state.
bool rollback_matches_golden(const faults::RunTrace& trace, const faults::GoldenRun& golden);

}  // namespace reptfd::harness
