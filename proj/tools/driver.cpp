#include "driver.hpp"

#include <atomic>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <thread>

#include "CLI11.hpp"

namespace cloaksim::cli {

namespace {

std::optional<std::string> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) return std::nullopt;
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

struct RunOutcome {
    bool ok = false;          // parsed, booted, executed
    bool expects_pass = false;
    std::size_t violations = 0;
    std::string diagnostics;
    nsim::RunReport report;
};

RunOutcome run_one(const dtree::DeviceTree& tree, const nsim::Scenario& scenario,
                   const std::string& label) {
    RunOutcome out;
    try {
        nsim::Simulation sim(tree);
        sim.boot();
        out.report = nsim::run_scenario(scenario, sim);
        out.expects_pass = out.report.all_expects_pass;
        if (!out.expects_pass) {
            for (const auto& e : out.report.expects) {
                if (e.pass) continue;
                out.diagnostics += label + ": expect " + e.kind + " failed (line " +
                                   std::to_string(e.line) + ")\n  expected: " + e.expected +
                                   "\n  actual:   " + e.actual + "\n";
            }
        }
        auto replay = soc::audit::replay_verdicts(tree, sim.soc.config(), sim.soc.audit());
        auto isolation =
            soc::audit::isolation_violations(tree, sim.soc.config(), sim.soc.audit());
        out.violations = replay.size() + isolation.size();
        for (const auto& v : replay)
            out.diagnostics += label + ": audit replay: " + v.what + "\n";
        for (const auto& v : isolation)
            out.diagnostics += label + ": isolation: " + v.what + "\n";
        out.ok = true;
    } catch (const std::exception& e) {
        out.diagnostics = label + ": " + e.what() + "\n";
    }
    return out;
}

}  // namespace

int run(const Options& options, std::ostream& out, std::ostream& err) {
    std::optional<std::string> dts = read_file(options.dtree_path);
    if (!dts) {
        err << "cannot read device tree '" << options.dtree_path << "'\n";
        return 2;
    }

    if (!options.sig_path.empty()) {
        std::optional<std::string> sig_text = read_file(options.sig_path);
        std::optional<std::string> keys_text =
            options.keys_path.empty() ? std::nullopt : read_file(options.keys_path);
        if (!sig_text || !keys_text) {
            err << "signature verification requires readable --sig and --keys files\n";
            return 2;
        }
        std::optional<dtree::Digest> sig = dtree::digest_from_hex(*sig_text);
        if (!sig) {
            err << "malformed signature sidecar (expected 64 hex characters)\n";
            return 2;
        }
        std::vector<std::string> keys;
        std::istringstream ks(*keys_text);
        std::string line;
        while (std::getline(ks, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!line.empty()) keys.push_back(line);
        }
        if (!dtree::verify_signature(*dts, *sig, keys)) {
            err << "device tree rejected: signature does not verify\n";
            return 2;
        }
    }

    dtree::DeviceTree tree;
    try {
        tree = dtree::parse_dts(*dts);
    } catch (const std::exception& e) {
        err << options.dtree_path << ": " << e.what() << "\n";
        return 2;
    }

    struct Item {
        std::string label;
        nsim::Scenario scenario;
    };
    std::vector<Item> items;
    for (const std::string& path : options.scenario_paths) {
        std::optional<std::string> text = read_file(path);
        if (!text) {
            err << "cannot read scenario '" << path << "'\n";
            return 2;
        }
        try {
            nsim::Scenario scenario = nsim::parse_scenario(*text);
            items.push_back(Item{path, std::move(scenario)});
        } catch (const nsim::ScenarioParseError& e) {
            err << path << ": " << e.what() << "\n";
            return 2;
        }
    }
    for (std::uint32_t i = 0; i < options.fuzz; ++i) {
        try {
            nsim::Scenario scenario = nsim::generate_scenario(tree, options.seed + i);
            items.push_back(Item{"fuzz[" + std::to_string(i) + "]", std::move(scenario)});
        } catch (const std::exception& e) {
            err << "fuzz generation: " << e.what() << "\n";
            return 2;
        }
    }

    if (items.empty()) {
        // Nothing to execute; loading and verifying the tree is the job.
        try {
            nsim::Simulation sim(tree);
            sim.boot();
        } catch (const std::exception& e) {
            err << "boot failed: " << e.what() << "\n";
            return 2;
        }
        out << "device tree ok: " << tree.node_count() << " nodes, "
            << dtree::classes_of(tree).size() << " classes\n";
        return 0;
    }

    std::vector<RunOutcome> outcomes(items.size());
    unsigned jobs = std::max(1u, options.jobs);
    if (jobs == 1) {
        for (std::size_t i = 0; i < items.size(); ++i)
            outcomes[i] = run_one(tree, items[i].scenario, items[i].label);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            for (;;) {
                std::size_t i = next.fetch_add(1);
                if (i >= items.size()) return;
                outcomes[i] = run_one(tree, items[i].scenario, items[i].label);
            }
        };
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < jobs; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    bool all_pass = true;
    std::size_t total_violations = 0;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const RunOutcome& o = outcomes[i];
        if (!o.ok) {
            err << o.diagnostics;
            return 2;
        }
        if (!o.expects_pass || o.violations != 0) {
            all_pass = false;
            total_violations += o.violations;
            err << o.diagnostics;
        }
    }

    if (!options.trace_path.empty()) {
        std::ofstream tf(options.trace_path, std::ios::binary);
        if (!tf) {
            err << "cannot write trace '" << options.trace_path << "'\n";
            return 2;
        }
        for (std::size_t i = 0; i < items.size(); ++i) {
            tf << "# " << items[i].label << "\n";
            tf << format_trace(outcomes[i].report);
        }
    }
    if (!options.metrics_path.empty()) {
        std::ofstream mf(options.metrics_path, std::ios::binary);
        if (!mf) {
            err << "cannot write metrics '" << options.metrics_path << "'\n";
            return 2;
        }
        if (items.size() == 1) {
            mf << metrics_to_json(outcomes[0].report.metrics);
        } else {
            mf << "[\n";
            for (std::size_t i = 0; i < items.size(); ++i) {
                std::string one = metrics_to_json(outcomes[i].report.metrics);
                one.pop_back();  // trailing newline
                mf << one << (i + 1 < items.size() ? ",\n" : "\n");
            }
            mf << "]\n";
        }
    }

    std::size_t audited = 0;
    for (const RunOutcome& o : outcomes) audited += o.report.audit_access_count;
    out << items.size() << " run(s), " << audited << " audited accesses, " << total_violations
        << " isolation violations, expectations " << (all_pass ? "pass" : "FAIL") << "\n";
    return all_pass ? 0 : 1;
}

int main_entry(int argc, char** argv) {
    CLI::App app{"cloaksim: deterministic TrustZone-style peripheral-control simulator"};
    Options opt;
    app.add_option("--dtree", opt.dtree_path, "device tree source file")->required();
    app.add_option("--sig", opt.sig_path, "signature sidecar (64 hex chars)");
    app.add_option("--keys", opt.keys_path, "trusted keys, one per line");
    app.add_option("--scenario", opt.scenario_paths, "scenario file (repeatable)");
    app.add_option("--trace", opt.trace_path, "write a per-event trace");
    app.add_option("--metrics", opt.metrics_path, "write metrics JSON");
    app.add_option("--seed", opt.seed, "RNG seed (default 0)");
    app.add_option("--jobs", opt.jobs, "run scenario files in parallel");
    app.add_option("--fuzz", opt.fuzz, "generate and run N random scenarios");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }
    return run(opt, std::cout, std::cerr);
}

}  // namespace cloaksim::cli
