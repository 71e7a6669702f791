// Serial vs OpenMP timing for the fault campaign and the default suite.
// Usage: bench_campaign [injections=400]
#include <omp.h>

#include <chrono>
#include <cstdio>
#include <cstdlib>

#include "reptfd/faults.hpp"
#include "reptfd/harness.hpp"

using namespace reptfd;

namespace {

template <class F>
double time_it(F&& f) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

bool same_metrics(const std::vector<harness::MetricsReport>& a, const std::vector<harness::MetricsReport>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (harness::metric_rows(a[i]) != harness::metric_rows(b[i])) return false;
    return true;
}

}  // namespace

int main(int argc, char** argv) {
    const uint32_t n = argc > 1 ? static_cast<uint32_t>(std::strtoul(argv[1], nullptr, 10)) : 400;
    std::printf("threads=%d\n", omp_get_max_threads());

    harness::ExperimentConfig cfg;
    cfg.machine.num_cores = cfg.workload.num_threads = 4;
    cfg.machine.mem_words = 1u << 16;
    cfg.machine.segment_length = 8 * cfg.machine.sampling_span;
    cfg.workload.insts_per_thread = 4000;
    cfg.workload.share_ratio = 0.2;
    const auto setup = cfg.setup();
    faults::CampaignParams p;
    p.n = n;

    std::vector<faults::CampaignRow> serial, parallel;
    const double ts = time_it([&] { serial = faults::run_campaign_serial(setup, p); });
    const double tp = time_it([&] { parallel = faults::run_campaign_parallel(setup, p); });
    const bool campaign_ok = serial == parallel;
    std::printf("campaign n=%u serial=%.2fs parallel=%.2fs speedup=%.2f identical=%s\n", n, ts, tp, ts / tp,
                campaign_ok ? "yes" : "no");

    const auto suite = harness::default_suite();
    std::vector<harness::MetricsReport> ms, mp;
    const double ss = time_it([&] { ms = harness::run_suite_serial(suite); });
    const double sp = time_it([&] { mp = harness::run_suite_parallel(suite); });
    const bool suite_ok = same_metrics(ms, mp);
    std::printf("suite workloads=%zu serial=%.2fs parallel=%.2fs speedup=%.2f identical=%s\n", suite.size(), ss, sp,
                ss / sp, suite_ok ? "yes" : "no");
    return campaign_ok && suite_ok ? 0 : 1;
}
