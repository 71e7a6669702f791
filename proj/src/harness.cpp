#include "reptfd/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "reptfd/kv.hpp"
#include "reptfd/log_io.hpp"

namespace fs = std::filesystem;

namespace reptfd::harness {

namespace {

const char* mode_name(Mode m) {
    switch (m) {
        case Mode::Record: return "record";
        case Mode::Replay: return "replay";
        case Mode::Pipeline: return "pipeline";
        case Mode::Faults: return "faults";
    }
    return "record";
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

std::string seg_name(uint32_t s, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "seg_%04u.%s", s, ext);
    return buf;
}

template <typename Fn>
void parallel_for(std::size_t n, Fn&& fn) {
    std::exception_ptr error;
    const auto count = static_cast<int64_t>(n);
#pragma omp parallel for schedule(dynamic, 1)
    for (int64_t i = 0; i < count; ++i) {
        try {
            fn(static_cast<std::size_t>(i));
        } catch (...) {
#pragma omp critical
            if (!error) error = std::current_exception();
        }
    }
    if (error) std::rethrow_exception(error);
}

}  // namespace

void ExperimentConfig::validate() const {
    machine.validate();
    workload.validate();
    if (workload.num_threads != machine.num_cores) throw ConfigError("thread count must equal the core count");
    if (name.empty() || name.find_first_of(",\n") != std::string::npos)
        throw ConfigError("name must be non-empty and free of commas");
}

workload::Program ExperimentConfig::program() const {
    workload::Program p = trace.empty() ? workload::generate(workload) : workload::load(trace);
    if (p.num_threads() != machine.num_cores) throw ConfigError("trace thread count must equal the core count");
    return p;
}

faults::RunSetup ExperimentConfig::setup() const { return {machine, program(), replay}; }

ExperimentConfig parse_config(std::string_view text) {
    ExperimentConfig c;
    auto& m = c.machine;
    auto& w = c.workload;
    using Setter = std::function<void(const kv::Entry&)>;
    const std::map<std::string, Setter> keys = {
        {"name", [&](const kv::Entry& e) { c.name = e.value; }},
        {"cores", [&](const kv::Entry& e) { m.num_cores = w.num_threads = kv::to_u32(e); }},
        {"sampling_span", [&](const kv::Entry& e) { m.sampling_span = kv::to_u32(e); }},
        {"l1_capacity", [&](const kv::Entry& e) { m.l1_capacity = kv::to_u32(e); }},
        {"l1_ways", [&](const kv::Entry& e) { m.l1_ways = kv::to_u32(e); }},
        {"llc_capacity", [&](const kv::Entry& e) { m.llc_capacity = kv::to_u32(e); }},
        {"llc_ways", [&](const kv::Entry& e) { m.llc_ways = kv::to_u32(e); }},
        {"mem_words", [&](const kv::Entry& e) { m.mem_words = kv::to_u32(e); }},
        {"lat_l1_hit", [&](const kv::Entry& e) { m.lat_l1_hit = kv::to_u32(e); }},
        {"lat_miss", [&](const kv::Entry& e) { m.lat_miss = kv::to_u32(e); }},
        {"lat_alu", [&](const kv::Entry& e) { m.lat_alu = kv::to_u32(e); }},
        {"jitter", [&](const kv::Entry& e) { m.jitter = kv::to_u32(e); }},
        {"jitter_seed", [&](const kv::Entry& e) { m.jitter_seed = kv::to_u64(e); }},
        {"segment_length", [&](const kv::Entry& e) { m.segment_length = kv::to_u64(e); }},
        {"insts_per_thread", [&](const kv::Entry& e) { w.insts_per_thread = kv::to_u32(e); }},
        {"shared_pool_size", [&](const kv::Entry& e) { w.shared_pool_size = kv::to_u32(e); }},
        {"share_ratio", [&](const kv::Entry& e) { w.share_ratio = kv::to_double(e); }},
        {"write_ratio", [&](const kv::Entry& e) { w.write_ratio = kv::to_double(e); }},
        {"mem_ratio", [&](const kv::Entry& e) { w.mem_ratio = kv::to_double(e); }},
        {"private_words", [&](const kv::Entry& e) { w.private_words = kv::to_u32(e); }},
        {"workload_seed", [&](const kv::Entry& e) { w.seed = kv::to_u64(e); }},
        {"perturb", [&](const kv::Entry& e) { c.replay.perturb = kv::to_u32(e); }},
        {"perturb_seed", [&](const kv::Entry& e) { c.replay.perturb_seed = kv::to_u64(e); }},
        {"watchdog", [&](const kv::Entry& e) { c.replay.watchdog = kv::to_u64(e); }},
        {"num_segments", [&](const kv::Entry& e) { c.num_segments = kv::to_u32(e); }},
        {"out", [&](const kv::Entry& e) { c.out_dir = e.value; }},
        {"trace", [&](const kv::Entry& e) { c.trace = e.value; }},
        {"mode",
         [&](const kv::Entry& e) {
             for (Mode md : {Mode::Record, Mode::Replay, Mode::Pipeline, Mode::Faults})
                 if (e.value == mode_name(md)) {
                     c.mode = md;
                     return;
                 }
             throw ConfigError("line " + std::to_string(e.line) + ": unknown mode " + e.value);
         }},
    };
    for (const auto& e : kv::parse(text)) {
        auto it = keys.find(e.key);
        if (it == keys.end()) throw ConfigError("line " + std::to_string(e.line) + ": unknown key " + e.key);
        it->second(e);
    }
    c.validate();
    return c;
}

ExperimentConfig load_config(const std::string& path) { return parse_config(kv::read_text(path)); }

std::string serialize_config(const ExperimentConfig& c) {
    const auto& m = c.machine;
    const auto& w = c.workload;
    std::ostringstream o;
    o << "name = " << c.name << '\n'
      << "mode = " << mode_name(c.mode) << '\n'
      << "cores = " << m.num_cores << '\n'
      << "sampling_span = " << m.sampling_span << '\n'
      << "l1_capacity = " << m.l1_capacity << '\n'
      << "l1_ways = " << m.l1_ways << '\n'
      << "llc_capacity = " << m.llc_capacity << '\n'
      << "llc_ways = " << m.llc_ways << '\n'
      << "mem_words = " << m.mem_words << '\n'
      << "lat_l1_hit = " << m.lat_l1_hit << '\n'
      << "lat_miss = " << m.lat_miss << '\n'
      << "lat_alu = " << m.lat_alu << '\n'
      << "jitter = " << m.jitter << '\n'
      << "jitter_seed = " << m.jitter_seed << '\n'
      << "segment_length = " << m.segment_length << '\n'
      << "insts_per_thread = " << w.insts_per_thread << '\n'
      << "shared_pool_size = " << w.shared_pool_size << '\n'
      << "share_ratio = " << fmt_double(w.share_ratio) << '\n'
      << "write_ratio = " << fmt_double(w.write_ratio) << '\n'
      << "mem_ratio = " << fmt_double(w.mem_ratio) << '\n'
      << "private_words = " << w.private_words << '\n'
      << "workload_seed = " << w.seed << '\n'
      << "perturb = " << c.replay.perturb << '\n'
      << "perturb_seed = " << c.replay.perturb_seed << '\n'
      << "watchdog = " << c.replay.watchdog << '\n'
      << "num_segments = " << c.num_segments << '\n';
    if (!c.out_dir.empty()) o << "out = " << c.out_dir << '\n';
    if (!c.trace.empty()) o << "trace = " << c.trace << '\n';
    return o.str();
}

RecordOutput run_record(const ExperimentConfig& cfg, const workload::Program& program) {
    recorder::RecordSession rs(cfg.machine, program);
    RecordOutput out;
    while (!rs.done() && (cfg.num_segments == 0 || out.segments.size() < cfg.num_segments)) {
        out.segments.push_back(rs.record_segment());
        const auto& s = out.segments.back();
        out.first_run_cycles += s.first_run_cycles;
        for (CoreId c = 0; c < cfg.machine.num_cores; ++c) out.instructions += s.res.instructions(c);
    }

    if (!cfg.out_dir.empty()) {
        const fs::path dir(cfg.out_dir);
        fs::create_directories(dir);
        ExperimentConfig stored = cfg;
        stored.out_dir.clear();
        stored.trace = "program.trace";
        write_text(dir / "config.txt", serialize_config(stored));
        workload::save(program, (dir / "program.trace").string());
        std::ostringstream meta;
        meta << "segments = " << out.segments.size() << '\n' << "first_run_cycles = " << out.first_run_cycles << '\n';
        for (const auto& s : out.segments) {
            meta << "segment." << s.segment << ".cycles = " << s.first_run_cycles << '\n';
            log_io::write_file((dir / seg_name(s.segment, "det")).string(), log_io::encode(s.det));
            log_io::write_file((dir / seg_name(s.segment, "res")).string(), log_io::encode(s.res));
        }
        write_text(dir / "meta.txt", meta.str());
    }
    return out;
}

RecordedRun load_recorded(const std::string& dir_str) {
    const fs::path dir(dir_str);
    RecordedRun r;
    r.config = load_config((dir / "config.txt").string());
    if (!r.config.trace.empty() && fs::path(r.config.trace).is_relative())
        r.config.trace = (dir / r.config.trace).string();
    r.program = r.config.program();

    uint32_t nseg = 0;
    std::map<uint32_t, Cycle> seg_cycles;
    for (const auto& e : kv::parse(kv::read_text((dir / "meta.txt").string()))) {
        if (e.key == "segments") {
            nseg = kv::to_u32(e);
        } else if (e.key == "first_run_cycles") {
            r.record.first_run_cycles = kv::to_u64(e);
        } else if (e.key.rfind("segment.", 0) == 0) {
            const auto dot = e.key.find('.', 8);
            kv::Entry idx{e.key, e.key.substr(8, dot - 8), e.line};
            seg_cycles[kv::to_u32(idx)] = kv::to_u64(e);
        }
    }
    for (uint32_t s = 0; s < nseg; ++s) {
        recorder::SegmentLogs logs;
        logs.segment = s;
        logs.first_run_cycles = seg_cycles.count(s) ? seg_cycles[s] : 0;
        logs.det = log_io::decode_determinism_log(log_io::read_file((dir / seg_name(s, "det")).string()));
        logs.res = log_io::decode_result_log(log_io::read_file((dir / seg_name(s, "res")).string()));
        for (CoreId c = 0; c < logs.res.num_cores; ++c) r.record.instructions += logs.res.instructions(c);
        r.record.segments.push_back(std::move(logs));
    }
    return r;
}

MetricsReport compute_metrics(const std::string& name, const RecordOutput& rec, const replayer::ReplayReport& rep) {
    MetricsReport m;
    m.workload = name;
    m.instructions = rec.instructions;
    m.segments = static_cast<uint32_t>(rec.segments.size());
    m.first_run_cycles = rec.first_run_cycles;
    m.replay_cycles = rep.replay_cycles;
    m.replay_slowdown = rec.first_run_cycles
                            ? static_cast<double>(rep.replay_cycles) / static_cast<double>(rec.first_run_cycles) - 1.0
                            : 0.0;
    m.stalled_block_fraction = rep.stalled_block_fraction();
    m.mean_stall_cycles = rep.mean_stall_per_stalled_block();
    std::vector<Cycle> rec_cycles;
    for (const auto& s : rec.segments) {
        m.order_records += s.det.orders.size();
        m.block_records += s.det.blocks.size();
        m.det_log_bytes += log_io::encode(s.det).size();
        m.result_log_payload_bytes += 4 * s.res.records.size();
        rec_cycles.push_back(s.first_run_cycles);
    }
    const double ki = static_cast<double>(m.instructions) / 1000.0;
    if (m.instructions) {
        m.orders_per_10k_insts = static_cast<double>(m.order_records) * 1e4 / static_cast<double>(m.instructions);
        m.det_log_bytes_per_KI = static_cast<double>(m.det_log_bytes) / ki;
        m.result_log_bytes_per_KI = static_cast<double>(m.result_log_payload_bytes) / ki;
    }
    if (!rec_cycles.empty() && rep.segment_cycles.size() == rec_cycles.size())
        m.pipeline_makespan_overhead = pipeline_schedule(rec_cycles, rep.segment_cycles).overhead;
    m.detections = rep.detections.size();
    return m;
}

ReplayOutput run_replay(const ExperimentConfig& cfg, const workload::Program& program, const RecordOutput& rec) {
    replayer::ReplaySession session(cfg.machine, program, cfg.replay);
    ReplayOutput out;
    for (const auto& s : rec.segments) out.report.merge(session.replay_segment(s.det, s.res));
    out.metrics = compute_metrics(cfg.name, rec, out.report);
    return out;
}

PipelineResult pipeline_schedule(const std::vector<Cycle>& record_cycles, const std::vector<Cycle>& replay_cycles) {
    if (record_cycles.size() != replay_cycles.size()) throw ConfigError("pipeline stage lists differ in length");
    PipelineResult r;
    r.record_cycles = record_cycles;
    r.replay_cycles = replay_cycles;
    Cycle record_done = 0, replay_done = 0;
    for (std::size_t m = 0; m < record_cycles.size(); ++m) {
        record_done += record_cycles[m];
        replay_done = std::max(record_done, replay_done) + replay_cycles[m];
    }
    r.first_run_total = record_done;
    r.makespan = replay_done;
    r.overhead = record_done ? static_cast<double>(replay_done) / static_cast<double>(record_done) - 1.0 : 0.0;
    return r;
}

PipelineResult run_pipeline(const ExperimentConfig& cfg) {
    const auto program = cfg.program();
    ExperimentConfig quiet = cfg;
    quiet.out_dir.clear();
    const RecordOutput rec = run_record(quiet, program);
    const ReplayOutput rep = run_replay(quiet, program, rec);
    std::vector<Cycle> rc;
    for (const auto& s : rec.segments) rc.push_back(s.first_run_cycles);
    return pipeline_schedule(rc, rep.report.segment_cycles);
}

MetricsReport run_experiment(const ExperimentConfig& cfg) {
    const auto program = cfg.program();
    const RecordOutput rec = run_record(cfg, program);
    return run_replay(cfg, program, rec).metrics;
}

std::vector<ExperimentConfig> default_suite() {
    struct Shape {
        const char* name;
        double share;
        uint32_t pool;
        uint32_t private_words;
        double write;
    };
    const Shape shapes[] = {
        {"private", 0.001, 256, 350, 0.3},
        {"lowshare", 0.003, 256, 380, 0.3},
        {"midshare", 0.006, 256, 400, 0.3},
        {"shared", 0.01, 256, 350, 0.3},
        {"hotshare", 0.015, 512, 300, 0.4},
    };
    std::vector<ExperimentConfig> suite;
    uint64_t seed = 11;
    for (const auto& s : shapes) {
        ExperimentConfig c;
        c.name = s.name;
        c.machine.num_cores = c.workload.num_threads = 8;
        c.workload.insts_per_thread = 160000;
        c.workload.share_ratio = s.share;
        c.workload.shared_pool_size = s.pool;
        c.workload.private_words = s.private_words;
        c.workload.write_ratio = s.write;
        c.workload.seed = seed++;
        suite.push_back(c);
    }
    return suite;
}

std::vector<MetricsReport> run_suite_serial(const std::vector<ExperimentConfig>& suite) {
    std::vector<MetricsReport> out;
    for (const auto& c : suite) out.push_back(run_experiment(c));
    return out;
}

std::vector<MetricsReport> run_suite_parallel(const std::vector<ExperimentConfig>& suite) {
    std::vector<MetricsReport> out(suite.size());
    parallel_for(suite.size(), [&](std::size_t i) { out[i] = run_experiment(suite[i]); });
    return out;
}

std::vector<MetricRow> metric_rows(const MetricsReport& m) {
    const auto& w = m.workload;
    auto d = [](auto v) { return static_cast<double>(v); };
    return {
        {w, "instructions", d(m.instructions)},
        {w, "segments", d(m.segments)},
        {w, "first_run_cycles", d(m.first_run_cycles)},
        {w, "replay_cycles", d(m.replay_cycles)},
        {w, "replay_slowdown", m.replay_slowdown},
        {w, "stalled_block_fraction", m.stalled_block_fraction},
        {w, "mean_stall_cycles", m.mean_stall_cycles},
        {w, "order_records", d(m.order_records)},
        {w, "block_records", d(m.block_records)},
        {w, "orders_per_10k_insts", m.orders_per_10k_insts},
        {w, "det_log_bytes", d(m.det_log_bytes)},
        {w, "det_log_bytes_per_KI", m.det_log_bytes_per_KI},
        {w, "result_log_payload_bytes", d(m.result_log_payload_bytes)},
        {w, "result_log_bytes_per_KI", m.result_log_bytes_per_KI},
        {w, "pipeline_makespan_overhead", m.pipeline_makespan_overhead},
        {w, "detections", d(m.detections)},
    };
}

std::string rows_csv(const std::vector<MetricRow>& rows) {
    std::string out = "workload,metric,value\n";
    for (const auto& r : rows) out += r.workload + "," + r.metric + "," + fmt_double(r.value) + "\n";
    return out;
}

std::vector<MetricRow> parse_rows_csv(std::string_view text) {
    std::vector<MetricRow> rows;
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        if (line.empty()) continue;
        if (line_no == 1) {
            if (line != "workload,metric,value") throw ParseError("expected header workload,metric,value", line_no);
            continue;
        }
        const auto a = line.find(',');
        const auto b = a == std::string_view::npos ? a : line.find(',', a + 1);
        if (b == std::string_view::npos) throw ParseError("expected three fields", line_no);
        MetricRow r{std::string(line.substr(0, a)), std::string(line.substr(a + 1, b - a - 1)), 0.0};
        const auto v = line.substr(b + 1);
        auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), r.value);
        if (ec != std::errc{} || p != v.data() + v.size()) throw ParseError("bad value", line_no);
        rows.push_back(std::move(r));
    }
    return rows;
}

std::string bar_chart_svg(const std::vector<MetricRow>& rows, const std::string& metric, const std::string& title) {
    std::vector<const MetricRow*> sel;
    for (const auto& r : rows)
        if (r.metric == metric) sel.push_back(&r);
    const int width = 640, height = 360, left = 70, right = 20, top = 40, bottom = 70;
    const int plot_w = width - left - right, plot_h = height - top - bottom;
    double vmax = 0;
    for (const auto* r : sel) vmax = std::max(vmax, r->value);
    if (vmax <= 0) vmax = 1;

    std::ostringstream o;
    char buf[256];
    o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
    o << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    o << "<text x=\"" << width / 2 << "\" y=\"22\" text-anchor=\"middle\" font-size=\"15\">" << title << "</text>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top + plot_h << "\" x2=\"" << left + plot_w << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    o << "<line x1=\"" << left << "\" y1=\"" << top << "\" x2=\"" << left << "\" y2=\"" << top + plot_h
      << "\" stroke=\"black\"/>\n";
    for (int t = 0; t <= 4; ++t) {
        const double v = vmax * t / 4;
        const double y = top + plot_h - plot_h * t / 4.0;
        std::snprintf(buf, sizeof buf,
                      "<text x=\"%d\" y=\"%.1f\" text-anchor=\"end\">%.4g</text>\n"
                      "<line x1=\"%d\" y1=\"%.1f\" x2=\"%d\" y2=\"%.1f\" stroke=\"#ddd\"/>\n",
                      left - 6, y + 4, v, left, y, left + plot_w, y);
        o << buf;
    }
    const double slot = sel.empty() ? plot_w : static_cast<double>(plot_w) / sel.size();
    for (std::size_t i = 0; i < sel.size(); ++i) {
        const double h = plot_h * std::max(sel[i]->value, 0.0) / vmax;
        const double x = left + slot * i + slot * 0.15;
        std::snprintf(buf, sizeof buf,
                      "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"#4a7ab5\"/>\n"
                      "<text x=\"%.1f\" y=\"%.1f\" text-anchor=\"middle\">%.4g</text>\n"
                      "<text x=\"%.1f\" y=\"%d\" text-anchor=\"middle\">",
                      x, top + plot_h - h, slot * 0.7, h, x + slot * 0.35, top + plot_h - h - 4, sel[i]->value,
                      x + slot * 0.35, top + plot_h + 18);
        o << buf << sel[i]->workload << "</text>\n";
    }
    o << "</svg>\n";
    return o.str();
}

std::vector<std::string> write_charts(const std::vector<MetricRow>& rows, const std::string& dir) {
    const std::pair<const char*, const char*> charts[] = {
        {"replay_slowdown", "Replay slowdown"},
        {"stalled_block_fraction", "Fraction of stalled blocks"},
        {"mean_stall_cycles", "Mean stall per stalled block (cycles)"},
        {"det_log_bytes_per_KI", "Determinism-log size (bytes per kilo-instruction)"},
    };
    fs::create_directories(dir);
    std::vector<std::string> written;
    for (const auto& [metric, title] : charts) {
        const auto path = (fs::path(dir) / (std::string(metric) + ".svg")).string();
        write_text(path, bar_chart_svg(rows, metric, title));
        written.push_back(path);
    }
    return written;
}

bool rollback_matches_golden(const faults::RunTrace& t, const faults::GoldenRun& g) {
    return t.checked_final == g.final_state && t.checked_memory == g.memory && t.redundant_memory == g.memory &&
           t.checked_results == g.results && t.redundant_results == g.results;
}

FaultsOutput run_faults(const ExperimentConfig& cfg, const faults::CampaignParams& params) {
    const faults::RunSetup setup = cfg.setup();
    FaultsOutput out;
    out.rows = faults::run_campaign_parallel(setup, params);
    out.stats = faults::summarize(out.rows);

    std::vector<const faults::CampaignRow*> detected;
    for (const auto& r : out.rows)
        if (r.outcome.detected) detected.push_back(&r);
    const faults::GoldenRun golden = faults::run_golden(setup);
    std::vector<uint32_t> rollbacks(detected.size()), clean(detected.size());
    parallel_for(detected.size(), [&](std::size_t i) {
        const auto t = faults::run_protected(setup, detected[i]->spec, faults::EngineOptions{});
        rollbacks[i] = static_cast<uint32_t>(t.rollbacks.size());
        clean[i] = rollback_matches_golden(t, golden) ? 1 : 0;
    });
    out.rollback_checked = static_cast<uint32_t>(detected.size());
    for (std::size_t i = 0; i < detected.size(); ++i) {
        out.rollbacks += rollbacks[i];
        out.rollback_clean += clean[i];
    }
    return out;
}

}  // namespace reptfd::harness
