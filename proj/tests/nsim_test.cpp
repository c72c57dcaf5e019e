#include "cloaksim/nsim.hpp"

#include <fstream>
#include <sstream>

#include "cloaksim/devices.hpp"
#include "doctest.h"

using namespace cloaksim;
using nsim::AccessOutcome;
using nsim::NsStatus;
using nsim::RunReport;
using nsim::Scenario;
using nsim::Simulation;
using skernel::ClassSetting;
using soc::Op;

namespace {

std::string read_file(const std::string& name) {
    std::ifstream in(std::string(CLOAKSIM_TEST_DATA_DIR) + "/" + name, std::ios::binary);
    REQUIRE(in.good());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

const dtree::DeviceTree& board() {
    static dtree::DeviceTree t = dtree::parse_dts(read_file("board.dts"));
    return t;
}

std::uint32_t base_of(const std::string& label) {
    return board().node(*board().find_by_label(label)).reg->base;
}

constexpr std::uint64_t kTenMb = 10 * 1024 * 1024;

}  // namespace

TEST_CASE("strongly-ordered access to a protected device is emulated") {
    Simulation sim(board());
    sim.boot();
    sim.kernel.set_class_state("wifi", ClassSetting::Disabled);
    AccessOutcome out = sim.ns.access(Op::Read, base_of("wifi") + 4, 4);
    CHECK(out.kind == AccessOutcome::Kind::Emulated);
    CHECK(out.value == 0);
    CHECK(sim.ns.status() == NsStatus::Running);
}

TEST_CASE("the same access without strong ordering crashes the NS world") {
    Simulation sim(board(), soc::SocConfig{}, /*strongly_ordered_mmio=*/false);
    sim.boot();
    sim.kernel.set_class_state("wifi", ClassSetting::Disabled);
    AccessOutcome out = sim.ns.access(Op::Read, base_of("wifi") + 4, 4);
    CHECK(out.kind == AccessOutcome::Kind::Crashed);
    CHECK(sim.ns.status() == NsStatus::Crashed);
    // crash containment: nothing about the secure state moved
    CHECK(sim.kernel.smc_cloak_get() == 0x80);
    CHECK(soc::audit::isolation_violations(board(), sim.soc.config(), sim.soc.audit()).empty());
}

TEST_CASE("an access to an enabled device needs no abort at all") {
    Simulation sim(board());
    sim.boot();
    AccessOutcome out = sim.ns.access(Op::Read, base_of("uart1") + 4, 4);
    CHECK(out.kind == AccessOutcome::Kind::Ok);
    CHECK(out.value == 1);
    CHECK(sim.soc.cost().abort_count == 0);
}

TEST_CASE("wifi transfer arithmetic under strongly-ordered access") {
    Simulation sim(board());
    sim.boot();
    nsim::WifiResult r = sim.ns.wifi_transfer(kTenMb, /*upload=*/false);
    REQUIRE(r.ok);
    CHECK(r.loads == 160 * 12);
    CHECK(r.stores == 160 * 8);
    CHECK(r.handshake_tries == 1);
    CHECK(r.denied == 0);
    // 160 chunks x (12 * 0.27us + 8 * 0.33us) = 940.8 us of MMIO
    CHECK(sim.soc.cost().mmio_time_ns() == 940800);
    CHECK(sim.soc.cost().dma_bytes == kTenMb);
    // 10 MiB at 5 bytes/us
    CHECK(sim.soc.cost().dma_time_ns() == 2097152000ull);
    CHECK(r.duration_ns == 940800 + 2097152000ull);
}

TEST_CASE("wifi transfer under emulation stays within 2% of the SOM baseline") {
    Simulation som(board());
    som.boot();
    nsim::WifiResult base = som.ns.wifi_transfer(kTenMb, false);
    REQUIRE(base.ok);

    Simulation emu(board());
    emu.boot();
    // Disabling bluetooth flips the shared CSL field; wifi becomes a
    // pass-through sibling and every control access is emulated.
    emu.kernel.set_class_state("bluetooth", ClassSetting::Disabled);
    nsim::WifiResult e = emu.ns.wifi_transfer(kTenMb, false);
    REQUIRE(e.ok);
    CHECK(emu.soc.cost().ldr_emu == 160 * 12);
    CHECK(emu.soc.cost().mmio_time_ns() == 3712000);

    double ratio = static_cast<double>(e.duration_ns) / static_cast<double>(base.duration_ns);
    CHECK(ratio < 1.02);
    CHECK(ratio > 1.0);
}

TEST_CASE("wifi transfer against a disabled controller gives up after the retries") {
    Simulation sim(board());
    sim.boot();
    sim.kernel.set_class_state("wifi", ClassSetting::Disabled);
    nsim::WifiResult r = sim.ns.wifi_transfer(kTenMb, true);
    CHECK_FALSE(r.ok);
    CHECK_FALSE(r.crashed);
    CHECK(r.handshake_tries == 4);  // first try + 3 retries
    CHECK(r.loads == 4);
    CHECK(r.stores == 4);
    CHECK(r.denied == 8);
    CHECK(sim.soc.cost().dma_bytes == 0);
}

TEST_CASE("upload transfers ring the doorbell in device-read direction") {
    Simulation sim(board());
    sim.boot();
    nsim::WifiResult r = sim.ns.wifi_transfer(65536, true);
    REQUIRE(r.ok);
    const auto& dmas = sim.soc.audit().dmas();
    REQUIRE_FALSE(dmas.empty());
    CHECK(dmas.back().direction == Op::Read);
    CHECK(dmas.back().len == 65536);
}

TEST_CASE("fig3 workflow scenario applies the settings") {
    Scenario sc = nsim::parse_scenario(read_file("fig3.scn"));
    Simulation sim(board());
    sim.boot();
    RunReport rep = nsim::run_scenario(sc, sim);
    CHECK(rep.all_expects_pass);
    CHECK(rep.last_result == "applied");
    CHECK(rep.metrics.final_bitvector == 0x80);
    CHECK(rep.last_confirmation_bv == 0x80);
    CHECK(rep.metrics.ns_status == "running");
}

TEST_CASE("tampered bitvector scenario is noticed and denied") {
    Scenario sc = nsim::parse_scenario(read_file("tamper.scn"));
    Simulation sim(board());
    sim.boot();
    RunReport rep = nsim::run_scenario(sc, sim);
    CHECK(rep.all_expects_pass);
    CHECK(rep.last_result == "denied");
    CHECK(rep.metrics.final_bitvector == 0);
    // the screen showed exactly what the s-kernel received: the tampered bits
    CHECK(rep.last_confirmation_bv == 0x82);
}

TEST_CASE("empty scenario reports zero counters") {
    Simulation sim(board());
    sim.boot();
    RunReport rep = nsim::run_scenario(Scenario{}, sim);
    CHECK(rep.metrics.ldr_plain == 0);
    CHECK(rep.metrics.ldr_som == 0);
    CHECK(rep.metrics.ldr_emu == 0);
    CHECK(rep.metrics.abort_count == 0);
    CHECK(rep.metrics.dma_bytes == 0);
    CHECK(rep.metrics.final_bitvector == 0);
    CHECK(rep.trace.empty());
}

TEST_CASE("scenario parser rejects malformed lines with line numbers") {
    CHECK_THROWS_AS(nsim::parse_scenario("launch_missiles\n"), nsim::ScenarioParseError);
    CHECK_THROWS_AS(nsim::parse_scenario("read 0x1000 3\n"), nsim::ScenarioParseError);
    CHECK_THROWS_AS(nsim::parse_scenario("read 0x1001 4\n"), nsim::ScenarioParseError);
    CHECK_THROWS_AS(nsim::parse_scenario("key escape press\n"), nsim::ScenarioParseError);
    CHECK_THROWS_AS(nsim::parse_scenario("expect vibes good\n"), nsim::ScenarioParseError);
    CHECK_THROWS_AS(nsim::parse_scenario("write 0x1000 4\n"), nsim::ScenarioParseError);
    try {
        nsim::parse_scenario("smc_get\n\nbogus\n");
        FAIL("expected ScenarioParseError");
    } catch (const nsim::ScenarioParseError& e) {
        CHECK(e.line == 3);
    }
}

TEST_CASE("scenario text round-trips through the parser") {
    std::string text = read_file("airplane.scn");
    Scenario once = nsim::parse_scenario(text);
    std::string canon = nsim::to_text(once);
    Scenario twice = nsim::parse_scenario(canon);
    CHECK(nsim::to_text(twice) == canon);
    CHECK(once.events.size() == twice.events.size());
}

TEST_CASE("identical scenario and seed produce identical reports") {
    Scenario sc = nsim::parse_scenario(read_file("airplane.scn"));
    Simulation a(board());
    a.boot();
    RunReport ra = nsim::run_scenario(sc, a);
    Simulation b(board());
    b.boot();
    RunReport rb = nsim::run_scenario(sc, b);
    CHECK(ra.metrics == rb.metrics);
    CHECK(ra.trace.size() == rb.trace.size());
    CHECK(ra.audit_access_count == rb.audit_access_count);
}

TEST_CASE("a crashed NS world stops issuing events but keys still work") {
    std::uint32_t secure_va = 0x1F000000 + 0xB0000000;
    char buf[256];
    std::snprintf(buf, sizeof buf,
                  "read 0x%x 4\n"
                  "expect ns_status crashed\n"
                  "smc_get\n"               // skipped: NS is dead
                  "key power press\n"
                  "key back press\n"        // secure reset sequence
                  "expect ns_status running\n"
                  "expect get 0x0\n",
                  secure_va);
    Scenario sc = nsim::parse_scenario(buf);
    Simulation sim(board());
    sim.boot();
    sim.kernel.set_class_state("camera", ClassSetting::Disabled);
    RunReport rep = nsim::run_scenario(sc, sim);
    CHECK(rep.all_expects_pass);
    CHECK(soc::audit::isolation_violations(board(), sim.soc.config(), sim.soc.audit()).empty());
}

TEST_CASE("psci reset through the runner revives the NS world") {
    Scenario sc = nsim::parse_scenario(
        "psci_reset\n"
        "expect result reset\n"
        "expect ns_status running\n"
        "expect get 0x0\n");
    Simulation sim(board());
    sim.boot();
    RunReport rep = nsim::run_scenario(sc, sim);
    CHECK(rep.all_expects_pass);
}

TEST_CASE("expectation failures abort the run with a diff") {
    Scenario sc = nsim::parse_scenario(
        "expect get 0xff\n"
        "smc_get\n");
    Simulation sim(board());
    sim.boot();
    RunReport rep = nsim::run_scenario(sc, sim);
    CHECK_FALSE(rep.all_expects_pass);
    REQUIRE(rep.expects.size() == 1);
    CHECK(rep.expects[0].expected == "0xff");
    CHECK(rep.expects[0].actual == "0x0");
    // the run stopped: the smc_get after the failure never executed
    CHECK(rep.trace.size() == 1);
}

TEST_CASE("generated fuzz scenarios hold their own oracles") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 42ull}) {
        Scenario sc = nsim::generate_scenario(board(), seed);
        Simulation sim(board());
        sim.boot();
        RunReport rep = nsim::run_scenario(sc, sim);
        CHECK_MESSAGE(rep.all_expects_pass, "seed=" << seed);
        CHECK(soc::audit::replay_verdicts(board(), sim.soc.config(), sim.soc.audit()).empty());
        CHECK(
            soc::audit::isolation_violations(board(), sim.soc.config(), sim.soc.audit()).empty());
    }
}

TEST_CASE("long fuzz scenarios survive serialization and keep their oracles") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        Scenario sc = nsim::generate_scenario(board(), seed, nsim::FuzzParams{160});
        // the generated scenario is expressible in the file grammar
        std::string text = nsim::to_text(sc);
        Scenario reparsed = nsim::parse_scenario(text);
        CHECK(nsim::to_text(reparsed) == text);

        Simulation sim(board());
        sim.boot();
        RunReport rep = nsim::run_scenario(reparsed, sim);
        CHECK_MESSAGE(rep.all_expects_pass, "seed=" << seed);
        CHECK(
            soc::audit::isolation_violations(board(), sim.soc.config(), sim.soc.audit()).empty());
    }
}
