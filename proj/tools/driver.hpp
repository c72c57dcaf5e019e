// CLI runner: load and verify a device tree, execute scenario files or fuzz
// batches, emit trace and metrics.
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "cloaksim/nsim.hpp"

namespace cloaksim::cli {

/// Line-per-event trace; mirrors the interception pipeline's step numbering
/// (1-7) on emulated accesses.
std::string format_trace(const nsim::RunReport& report);

/// Rebuilds the Metrics block from the trace text alone; must reproduce the
/// emitted metrics exactly.
nsim::Metrics metrics_from_trace(const std::string& trace_text);

/// Flat JSON object with stable key order.
std::string metrics_to_json(const nsim::Metrics& metrics);

/// Full deterministic serialization, used for replay-identity checks.
std::string report_to_json(const nsim::RunReport& report);

struct Options {
    std::string dtree_path;
    std::string sig_path;
    std::string keys_path;
    std::vector<std::string> scenario_paths;
    std::string trace_path;
    std::string metrics_path;
    std::uint64_t seed = 0;
    unsigned jobs = 1;
    std::uint32_t fuzz = 0;
};

/// Exit code: 0 all expectations pass, 1 expectation or isolation failure,
/// 2 usage, parse, or signature error.
int run(const Options& options, std::ostream& out, std::ostream& err);

int main_entry(int argc, char** argv);

}  // namespace cloaksim::cli
