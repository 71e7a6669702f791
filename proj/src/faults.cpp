#include "reptfd/faults.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <random>
#include <sstream>

#include "reptfd/kv.hpp"

namespace reptfd::faults {

const char* to_string(TargetGroup g) { return g == TargetGroup::Checked ? "CHECKED" : "REDUNDANT"; }

const char* to_string(Classification c) { return c == Classification::Masked ? "MASKED" : "MALIGNANT"; }

std::optional<FaultSite> parse_site(std::string_view name) {
    std::string up(name);
    for (auto& ch : up) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    for (int i = 0; i < machine::kNumFaultSites; ++i) {
        const auto s = static_cast<FaultSite>(i);
        if (up == machine::to_string(s)) return s;
    }
    return std::nullopt;
}

void inject(machine::Machine& m, const FaultSpec& spec) {
    if (spec.bit > 31) throw ConfigError("fault bit must be in [0, 31]");
    machine::ArmedFault f;
    f.site = spec.site;
    f.cycle = spec.cycle;
    f.bit = spec.bit;
    f.locus = spec.locus;
    m.arm_fault(f);
}

namespace {

std::vector<Word> footprint_values(const machine::Machine& m, const std::vector<Addr>& footprint) {
    std::vector<Word> out;
    out.reserve(footprint.size());
    for (Addr a : footprint) out.push_back(m.coherent_value(a));
    return out;
}

void append_results(std::vector<std::vector<Word>>& dst, const std::vector<CommitEvent>& events) {
    for (const auto& ev : events) dst[ev.core].push_back(ev.result);
}

void truncate_results(std::vector<std::vector<Word>>& dst, const machine::Checkpoint& cp) {
    for (std::size_t c = 0; c < dst.size(); ++c) dst[c].resize(cp.state.cores[c].pc);
}

}  // namespace

RunTrace run_protected(const RunSetup& setup, const std::optional<FaultSpec>& fault, const EngineOptions& options) {
    const uint32_t p = setup.machine.num_cores;
    recorder::RecordSession rec(setup.machine, setup.program);
    replayer::ReplaySession rep(setup.machine, setup.program, setup.replay);
    if (fault) inject(fault->group == TargetGroup::Checked ? rec.machine() : rep.machine(), *fault);

    RunTrace tr;
    tr.checked_results.assign(p, {});
    tr.redundant_results.assign(p, {});
    std::vector<machine::Checkpoint> cps_rec, cps_rep;
    std::vector<replayer::ReplayReport> reports;
    std::vector<Cycle> first_cycles;
    std::vector<CommitEvent> ev_rec, ev_rep;

    // While re-executing after a rollback, a repeated detection at or before
    // `retry_until` means the restored checkpoint already held the corruption.
    bool retrying = false;
    uint32_t retry_base = 0, retry_until = 0;

    uint32_t m = 0;
    while (!rec.done()) {
        cps_rec.resize(m);
        cps_rep.resize(m);
        reports.resize(m);
        first_cycles.resize(m);
        tr.segment_start_pc.resize(m);
        tr.segment_groups.resize(m);
        cps_rec.push_back(rec.snapshot());
        cps_rep.push_back(rep.snapshot());
        std::vector<uint64_t> start(p);
        for (CoreId c = 0; c < p; ++c) start[c] = rec.machine().state().cores[c].pc;

        ev_rec.clear();
        ev_rep.clear();
        recorder::SegmentLogs logs = rec.record_segment(&ev_rec);
        replayer::ReplayReport r = rep.replay_segment(logs.det, logs.res, &ev_rep);
        append_results(tr.checked_results, ev_rec);
        append_results(tr.redundant_results, ev_rep);
        tr.detections.insert(tr.detections.end(), r.detections.begin(), r.detections.end());

        if (!r.detections.empty() && options.rollback) {
            uint32_t k = m;
            if (retrying && m <= retry_until) {
                if (retry_base == 0) throw std::runtime_error("detection persists after rollback to the first checkpoint");
                k = retry_base - 1;
            } else {
                retry_until = m;
            }
            if (tr.rollbacks.size() >= options.max_rollbacks) throw std::runtime_error("rollback limit exceeded");
            tr.rollbacks.push_back({m, k});
            retrying = true;
            retry_base = k;
            rec.restore(cps_rec[k], k);
            rep.restore(cps_rep[k], k);
            truncate_results(tr.checked_results, cps_rec[k]);
            truncate_results(tr.redundant_results, cps_rep[k]);
            m = k;
            continue;
        }
        if (retrying && m >= retry_until) retrying = false;

        std::vector<uint32_t> groups(p, 0);
        for (const auto& rr : logs.res.records) ++groups[rr.core];
        tr.segment_start_pc.push_back(std::move(start));
        tr.segment_groups.push_back(std::move(groups));
        reports.push_back(std::move(r));
        first_cycles.push_back(logs.first_run_cycles);
        ++m;
    }

    for (const auto& r : reports) tr.replay.merge(r);
    tr.replay.detections = tr.detections;
    for (Cycle c : first_cycles) tr.first_run_cycles += c;
    tr.segments = m;
    tr.checked_final = rec.machine().state();
    tr.redundant_final = rep.machine().state();
    const auto footprint = setup.program.footprint();
    tr.checked_memory = footprint_values(rec.machine(), footprint);
    tr.redundant_memory = footprint_values(rep.machine(), footprint);
    if (fault) {
        const auto& fm = fault->group == TargetGroup::Checked ? rec.machine() : rep.machine();
        tr.fault = *fm.fault();
    }
    return tr;
}

GoldenRun run_golden(const RunSetup& setup) {
    recorder::RecordSession rec(setup.machine, setup.program);
    GoldenRun g;
    g.results.assign(setup.machine.num_cores, {});
    std::vector<CommitEvent> ev;
    while (!rec.done()) {
        ev.clear();
        rec.record_segment(&ev);
        append_results(g.results, ev);
    }
    g.footprint = setup.program.footprint();
    g.memory = footprint_values(rec.machine(), g.footprint);
    g.final_state = rec.machine().state();
    g.cycles = rec.machine().last_commit_cycle();
    return g;
}

FaultOutcome classify(const RunSetup& setup, const GoldenRun& golden, const FaultSpec& spec) {
    const RunTrace tr = run_protected(setup, spec, EngineOptions{false, 0});
    const auto& results = spec.group == TargetGroup::Checked ? tr.checked_results : tr.redundant_results;

    FaultOutcome out;
    out.struck = tr.fault && tr.fault->struck;
    out.strike_cycle = out.struck ? tr.fault->strike_cycle : 0;

    std::vector<std::optional<uint64_t>> first_wrong(results.size());
    for (std::size_t c = 0; c < results.size(); ++c) {
        const auto& a = results[c];
        const auto& b = golden.results.at(c);
        const auto n = std::min(a.size(), b.size());
        for (std::size_t i = 0; i < n; ++i)
            if (a[i] != b[i]) {
                first_wrong[c] = i;
                break;
            }
        if (!first_wrong[c] && a.size() != b.size()) first_wrong[c] = n;
    }
    const bool malignant = std::any_of(first_wrong.begin(), first_wrong.end(), [](const auto& x) { return x.has_value(); });
    out.classification = malignant ? Classification::Malignant : Classification::Masked;

    if (!tr.detections.empty()) {
        const auto& d = tr.detections.front();
        out.detected = Detection{d.segment, d.core, d.group_idx};
        if (const auto& fw = first_wrong[d.core]) {
            // Comparison ordinals run across segments on one core.
            uint64_t base = 0, wrong_ordinal = 0, detect_ordinal = 0;
            for (uint32_t s = 0; s < tr.segments; ++s) {
                const uint64_t start = tr.segment_start_pc[s][d.core];
                const uint64_t next = s + 1 < tr.segments ? tr.segment_start_pc[s + 1][d.core] : UINT64_MAX;
                if (*fw >= start && *fw < next) wrong_ordinal = base + (*fw - start) / recorder::kChecksumGroup;
                if (s == d.segment) detect_ordinal = base + d.group_idx;
                base += tr.segment_groups[s][d.core];
            }
            out.detection_latency = detect_ordinal >= wrong_ordinal ? detect_ordinal - wrong_ordinal : 0;
        }
    }
    return out;
}

FaultOutcome classify(const RunSetup& setup, const FaultSpec& spec) {
    return classify(setup, run_golden(setup), spec);
}

void CampaignParams::validate() const {
    if (n < 1) throw ConfigError("campaign n must be >= 1");
    double total = 0;
    for (double w : site_weights) {
        if (w < 0) throw ConfigError("site weights must be non-negative");
        total += w;
    }
    if (total <= 0) throw ConfigError("at least one site weight must be positive");
    if (redundant_fraction < 0 || redundant_fraction > 1) throw ConfigError("redundant_fraction must be in [0, 1]");
}

CampaignParams parse_campaign(std::string_view text) {
    CampaignParams p;
    for (const auto& e : kv::parse(text)) {
        if (e.key == "n") {
            p.n = kv::to_u32(e);
        } else if (e.key == "seed") {
            p.seed = kv::to_u64(e);
        } else if (e.key == "redundant_fraction") {
            p.redundant_fraction = kv::to_double(e);
        } else if (e.key.rfind("weight.", 0) == 0) {
            const auto site = parse_site(std::string_view(e.key).substr(7));
            if (!site) throw ConfigError("line " + std::to_string(e.line) + ": unknown fault site in " + e.key);
            p.site_weights[static_cast<int>(*site)] = kv::to_double(e);
        } else {
            throw ConfigError("line " + std::to_string(e.line) + ": unknown campaign key " + e.key);
        }
    }
    p.validate();
    return p;
}

CampaignParams load_campaign(const std::string& path) { return parse_campaign(kv::read_text(path)); }

FaultSpec draw_fault(const CampaignParams& params, uint32_t index, const GoldenRun& golden, uint32_t num_cores) {
    std::mt19937_64 rng(mix3(params.seed, index, 0xfa17ull));
    auto unit = [&] { return static_cast<double>(rng() >> 11) * 0x1p-53; };

    double total = 0;
    for (double w : params.site_weights) total += w;
    double pick = unit() * total;
    int site = 0;
    for (; site < machine::kNumFaultSites - 1; ++site) {
        if (pick < params.site_weights[site]) break;
        pick -= params.site_weights[site];
    }
    while (params.site_weights[site] <= 0) --site;  // rounding landed past the last positive weight

    FaultSpec f;
    f.site = static_cast<FaultSite>(site);
    f.group = unit() < params.redundant_fraction ? TargetGroup::Redundant : TargetGroup::Checked;
    f.cycle = 1 + rng() % std::max<Cycle>(golden.cycles, 1);
    f.bit = static_cast<uint8_t>(rng() % 32);
    const uint64_t r = rng();
    if (f.site == FaultSite::MemoryWord && !golden.footprint.empty())
        f.locus = golden.footprint[r % golden.footprint.size()];
    else if (f.site == FaultSite::L1Line || f.site == FaultSite::LlcLine)
        f.locus = static_cast<uint32_t>(r);
    else
        f.locus = static_cast<uint32_t>(r % num_cores);
    return f;
}

std::vector<CampaignRow> run_campaign_serial(const RunSetup& setup, const CampaignParams& params) {
    params.validate();
    const GoldenRun golden = run_golden(setup);
    std::vector<CampaignRow> rows(params.n);
    for (uint32_t i = 0; i < params.n; ++i) {
        rows[i].index = i;
        rows[i].spec = draw_fault(params, i, golden, setup.machine.num_cores);
        rows[i].outcome = classify(setup, golden, rows[i].spec);
    }
    return rows;
}

std::vector<CampaignRow> run_campaign_parallel(const RunSetup& setup, const CampaignParams& params) {
    params.validate();
    const GoldenRun golden = run_golden(setup);
    std::vector<CampaignRow> rows(params.n);
    std::exception_ptr error;
    const auto n = static_cast<int64_t>(params.n);
#pragma omp parallel for schedule(dynamic, 4)
    for (int64_t i = 0; i < n; ++i) {
        try {
            auto& row = rows[i];
            row.index = static_cast<uint32_t>(i);
            row.spec = draw_fault(params, row.index, golden, setup.machine.num_cores);
            row.outcome = classify(setup, golden, row.spec);
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
    return rows;
}

CampaignStats summarize(const std::vector<CampaignRow>& rows) {
    CampaignStats s;
    s.n = static_cast<uint32_t>(rows.size());
    uint64_t latency_sum = 0;
    uint32_t latency_n = 0;
    for (const auto& r : rows) {
        auto& site = s.per_site[static_cast<int>(r.spec.site)];
        ++site.injected;
        if (r.outcome.struck) ++s.struck;
        const bool detected = r.outcome.detected.has_value();
        if (r.outcome.classification == Classification::Masked) {
            ++s.masked;
            if (detected) ++s.masked_detected;
            continue;
        }
        ++s.malignant;
        ++site.malignant;
        if (!detected) {
            ++s.collisions;
            continue;
        }
        ++s.detected_malignant;
        ++site.detected;
        if (r.outcome.detection_latency) {
            latency_sum += *r.outcome.detection_latency;
            ++latency_n;
            s.max_latency = std::max(s.max_latency, *r.outcome.detection_latency);
        }
    }
    s.coverage = s.malignant ? static_cast<double>(s.detected_malignant) / s.malignant : 1.0;
    s.masked_rate = s.n ? static_cast<double>(s.masked) / s.n : 0.0;
    s.mean_latency = latency_n ? static_cast<double>(latency_sum) / latency_n : 0.0;
    return s;
}

std::string campaign_csv(const std::vector<CampaignRow>& rows) {
    std::ostringstream out;
    out << "index,site,group,cycle,bit,locus,classification,detected,segment,core,group_idx,latency,struck\n";
    for (const auto& r : rows) {
        const auto& o = r.outcome;
        out << r.index << ',' << machine::to_string(r.spec.site) << ',' << to_string(r.spec.group) << ','
            << r.spec.cycle << ',' << static_cast<int>(r.spec.bit) << ',' << r.spec.locus << ','
            << to_string(o.classification) << ',' << (o.detected ? 1 : 0) << ',';
        if (o.detected)
            out << o.detected->segment << ',' << o.detected->core << ',' << o.detected->group_idx << ',';
        else
            out << ",,,";
        if (o.detection_latency) out << *o.detection_latency;
        out << ',' << (o.struck ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string stats_csv(const CampaignStats& s) {
    std::ostringstream out;
    out << "metric,value\n"
        << "injections," << s.n << '\n'
        << "struck," << s.struck << '\n'
        << "masked," << s.masked << '\n'
        << "malignant," << s.malignant << '\n'
        << "detected_malignant," << s.detected_malignant << '\n'
        << "collisions," << s.collisions << '\n'
        << "masked_detected," << s.masked_detected << '\n'
        << "coverage," << s.coverage << '\n'
        << "masked_rate," << s.masked_rate << '\n'
        << "mean_detection_latency_groups," << s.mean_latency << '\n'
        << "max_detection_latency_groups," << s.max_latency << '\n';
    for (int i = 0; i < machine::kNumFaultSites; ++i) {
        const auto& ps = s.per_site[i];
        const char* name = machine::to_string(static_cast<FaultSite>(i));
        out << "injected." << name << ',' << ps.injected << '\n'
            << "malignant." << name << ',' << ps.malignant << '\n'
            << "detected." << name << ',' << ps.detected << '\n';
    }
    return out.str();
}

}  // namespace reptfd::faults
