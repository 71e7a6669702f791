#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "reptfd/machine.hpp"
#include "reptfd/recorder.hpp"
#include "reptfd/replayer.hpp"

namespace reptfd::faults {

using machine::FaultSite;

enum class TargetGroup : uint8_t { Checked, Redundant };
const char* to_string(TargetGroup g);

struct FaultSpec {
    FaultSite site = FaultSite::RegWriteback;
    TargetGroup group = TargetGroup::Checked;
    Cycle cycle = 1;
    uint8_t bit = 0;
    uint32_t locus = 0;
    bool operator==(const FaultSpec&) const = default;
};

enum class Classification : uint8_t { Masked, Malignant };
const char* to_string(Classification c);

struct Detection {
    uint32_t segment = 0;
    CoreId core = 0;
    uint32_t group_idx = 0;
    bool operator==(const Detection&) const = default;
};

struct FaultOutcome {
    Classification classification = Classification::Masked;
    std::optional<Detection> detected;
    // Checksum groups on the detecting core between its first wrong result and the detection.
    std::optional<uint64_t> detection_latency;
    bool struck = false;  // the flip hit a live value
    Cycle strike_cycle = 0;
    bool operator==(const FaultOutcome&) const = default;
};

// Everything needed to run both groups on one workload.
struct RunSetup {
    machine::MachineConfig machine;
    workload::Program program;
    replayer::ReplayOptions replay;
};

// Arms the single-event fault on the machine of the targeted group.
void inject(machine::Machine& m, const FaultSpec& spec);

struct EngineOptions {
    bool rollback = true;
    uint32_t max_rollbacks = 64;
};

struct RollbackEvent {
    uint32_t detected_segment = 0;
    uint32_t restored_segment = 0;  // execution resumes at the start of this segment
};

// Output of a protected run: segment-by-segment record then replay, with
// checkpoint rollback on detection.
struct RunTrace {
    std::vector<std::vector<Word>> checked_results;    // per core, accepted results
    std::vector<std::vector<Word>> redundant_results;
    std::vector<replayer::DetectionEvent> detections;  // every detection, in order
    std::vector<RollbackEvent> rollbacks;
    // Per segment (of the accepted execution), per core: first instruction
    // index and number of checksum comparisons.
    std::vector<std::vector<uint64_t>> segment_start_pc;
    std::vector<std::vector<uint32_t>> segment_groups;
    machine::MachineState checked_final;
    machine::MachineState redundant_final;
    std::vector<Word> checked_memory;    // coherent value of each footprint address
    std::vector<Word> redundant_memory;
    Cycle first_run_cycles = 0;
    replayer::ReplayReport replay;
    uint32_t segments = 0;
    std::optional<machine::ArmedFault> fault;  // final fault state
};

RunTrace run_protected(const RunSetup& setup, const std::optional<FaultSpec>& fault, const EngineOptions& options);

// Fault-free first run of the checked group alone.
struct GoldenRun {
    std::vector<std::vector<Word>> results;
    std::vector<Word> memory;  // coherent values over the footprint
    machine::MachineState final_state;
    Cycle cycles = 0;
    std::vector<Addr> footprint;
};

GoldenRun run_golden(const RunSetup& setup);

// Derives the outcome from a rollback-free protected run.
FaultOutcome classify(const RunSetup& setup, const GoldenRun& golden, const FaultSpec& spec);
FaultOutcome classify(const RunSetup& setup, const FaultSpec& spec);

struct CampaignParams {
    uint32_t n = 1000;
    uint64_t seed = 1;
    std::array<double, machine::kNumFaultSites> site_weights{1, 1, 1, 1, 1, 1};
    double redundant_fraction = 0.5;

    void validate() const;
};

CampaignParams parse_campaign(std::string_view text);
CampaignParams load_campaign(const std::string& path);

// Fault i of a campaign; a pure function of (params, i, golden).
FaultSpec draw_fault(const CampaignParams& params, uint32_t index, const GoldenRun& golden, uint32_t num_cores);

struct CampaignRow {
    uint32_t index = 0;
    FaultSpec spec;
    FaultOutcome outcome;
    bool operator==(const CampaignRow&) const = default;
};

std::vector<CampaignRow> run_campaign_serial(const RunSetup& setup, const CampaignParams& params);
std::vector<CampaignRow> run_campaign_parallel(const RunSetup& setup, const CampaignParams& params);

struct SiteStats {
    uint32_t injected = 0;
    uint32_t malignant = 0;
    uint32_t detected = 0;
};

struct CampaignStats {
    uint32_t n = 0;
    uint32_t struck = 0;
    uint32_t masked = 0;
    uint32_t malignant = 0;
    uint32_t detected_malignant = 0;
    uint32_t collisions = 0;          // malignant but never detected
    uint32_t masked_detected = 0;     // must stay 0
    double coverage = 1.0;            // detected / malignant (vacuous 1 when no malignant)
    double masked_rate = 0.0;
    double mean_latency = 0.0;
    uint64_t max_latency = 0;
    std::array<SiteStats, machine::kNumFaultSites> per_site{};
};

CampaignStats summarize(const std::vector<CampaignRow>& rows);
std::string campaign_csv(const std::vector<CampaignRow>& rows);
std::string stats_csv(const CampaignStats& stats);

std::optional<FaultSite> parse_site(std::string_view name);

}  // namespace reptfd::faults
