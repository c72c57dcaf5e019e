// The untrusted world: NS register-context execution of access sequences,
// memory-mapping attributes, scripted workloads, and adversarial behaviors.
#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "cloaksim/decode.hpp"
#include "cloaksim/skernel.hpp"
#include "cloaksim/soc.hpp"

namespace cloaksim::nsim {

struct NsMapping {
    std::uint32_t va_base = 0;
    std::uint32_t pa_base = 0;
    std::uint32_t size = 0;
    bool strongly_ordered = false;
};

/// The NS kernel's page-table model: device MMIO identity mapped, RAM at a
/// fixed virtual offset. A compliant NS kernel maps device memory
/// strongly ordered; a non-compliant one does not, and loses precise aborts.
class MappingTable {
public:
    static MappingTable build(const dtree::DeviceTree& tree, const soc::SocConfig& cfg,
                              const soc::AddressMap& map, bool strongly_ordered_mmio);

    struct Translation {
        std::uint32_t pa = 0;
        bool strongly_ordered = false;
    };
    std::optional<Translation> translate(std::uint32_t va) const;

    const std::vector<NsMapping>& mappings() const { return mappings_; }

private:
    std::vector<NsMapping> mappings_;
};

enum class NsStatus : std::uint8_t { Running, Crashed };

struct AccessOutcome {
    enum class Kind : std::uint8_t { Ok, Emulated, Crashed } kind = Kind::Ok;
    std::uint32_t value = 0;             // loads: what landed in rt
    soc::BusStatus bus = soc::BusStatus::Ok;
};

struct WifiModel {
    std::uint32_t chunk_bytes = 64 * 1024;
    std::uint32_t loads_per_chunk = 12;
    std::uint32_t stores_per_chunk = 8;
    std::uint32_t retries = 3;  // after the first failed handshake
    std::uint32_t buffer_pa = 0x14000000;
};

struct WifiResult {
    bool ok = false;
    bool crashed = false;
    std::uint64_t duration_ns = 0;
    std::uint64_t loads = 0;
    std::uint64_t stores = 0;
    std::uint64_t denied = 0;
    std::uint32_t handshake_tries = 0;
};

/// NS-world register context plus mapping table and liveness. All NS bus
/// traffic funnels through access(): a denied strongly-ordered access takes
/// the precise-abort path into the s-kernel; a denied normal-memory access
/// is an imprecise abort and the NS world is gone.
class NsWorld {
public:
    NsWorld(soc::Soc& soc, skernel::Skernel& kernel, bool strongly_ordered_mmio = true);

    void reset();

    AccessOutcome access(soc::Op op, std::uint32_t va, std::uint8_t width,
                         std::uint32_t value = 0);

    WifiResult wifi_transfer(std::uint64_t bytes, bool upload, const WifiModel& model = {});

    NsStatus status() const { return status_; }
    void revive() { reset(); }
    const decode::NsContext& ctx() const { return ctx_; }
    const MappingTable& mapping_table() const { return map_; }

private:
    soc::Soc& soc_;
    skernel::Skernel& kernel_;
    bool som_mmio_;
    MappingTable map_;
    decode::NsContext ctx_{};
    NsStatus status_ = NsStatus::Running;
};

// --- scenarios -------------------------------------------------------------

struct ScenarioParseError : std::runtime_error {
    ScenarioParseError(int line_, const std::string& msg);
    int line;
};

struct Scenario {
    struct Event {
        enum class Kind : std::uint8_t {
            Read,
            Write,
            SmcSet,
            SmcGet,
            Key,
            Wifi,
            PsciReset,
            TamperBv,
            Expect,
        };
        enum class ExpectKind : std::uint8_t { Get, Result, NsStatus, DeniedCount };

        Kind kind = Kind::Read;
        std::uint32_t addr = 0;
        std::uint8_t width = 4;
        std::uint32_t value = 0;  // write value, smc_set bitvector, tamper mask
        skernel::KeyEvent key{};
        std::uint64_t bytes = 0;
        bool upload = false;
        ExpectKind expect_kind = ExpectKind::Get;
        std::string expect_value;
        int line = 0;
    };
    std::vector<Event> events;
};

Scenario parse_scenario(std::string_view text);
std::string to_text(const Scenario& scenario);

// --- reports ---------------------------------------------------------------

struct Metrics {
    std::uint64_t ldr_plain = 0, str_plain = 0, ldr_som = 0, str_som = 0;
    std::uint64_t ldr_emu = 0, str_emu = 0;
    std::uint64_t abort_count = 0, denied_count = 0, dma_denied = 0;
    std::uint64_t dma_bytes = 0, dma_bandwidth = 0;
    std::uint64_t mmio_time_ns = 0, dma_time_ns = 0, modeled_time_ns = 0;
    std::uint32_t final_bitvector = 0;
    std::string ns_status;
    std::vector<std::pair<std::string, std::string>> class_states;  // classes_of order

    bool operator==(const Metrics&) const = default;
};

struct TraceRecord {
    enum class Kind : std::uint8_t {
        Access,
        Dma,
        SmcSet,
        SmcGet,
        Key,
        Wifi,
        Psci,
        KeyReset,
        Tamper,
        Expect,
    };
    enum class Cat : std::uint8_t { Plain, Som, Emu };
    enum class Verdict : std::uint8_t { Ok, Deny, Fatal, Crash, Unmapped };

    Kind kind = Kind::Access;
    soc::Op op = soc::Op::Read;
    std::uint32_t addr = 0;
    std::uint8_t width = 4;
    std::uint32_t value = 0;
    Cat cat = Cat::Plain;
    Verdict verdict = Verdict::Ok;
    std::string master;      // dma
    std::uint32_t len = 0;   // dma
    std::uint32_t bv = 0;    // smc/tamper payloads
    std::string text;        // result token, key name, expect kind
    std::uint64_t bytes = 0;  // wifi
    bool upload = false;
    std::uint64_t ldr = 0, str = 0, denied = 0;
    bool pass = true;
    std::string expected, actual;
};

struct ExpectResult {
    std::string kind;
    std::string expected;
    std::string actual;
    bool pass = true;
    int line = 0;
};

struct RunReport {
    std::vector<TraceRecord> trace;
    Metrics metrics;
    std::vector<ExpectResult> expects;
    bool all_expects_pass = true;
    std::string last_result;
    std::optional<std::uint32_t> last_confirmation_bv;
    std::uint64_t audit_access_count = 0;
};

/// One tree + SoC + s-kernel + NS world, booted together.
struct Simulation {
    explicit Simulation(const dtree::DeviceTree& tree, soc::SocConfig cfg = {},
                        bool strongly_ordered_mmio = true);
    void boot();

    const dtree::DeviceTree& tree;
    soc::Soc soc;
    skernel::Skernel kernel;
    NsWorld ns;
};

RunReport run_scenario(const Scenario& scenario, Simulation& sim);

/// Builds the Metrics block from the live simulation state.
Metrics collect_metrics(Simulation& sim);

// --- fuzzing ---------------------------------------------------------------

struct FuzzParams {
    std::uint32_t events = 40;
};

/// Seeded random scenario: class toggles with confirmations by a vigilant
/// user, stray NS and DMA traffic, secure-RAM probes, tampering, and reset
/// attempts. Deterministic for a given (tree, cfg, seed).
Scenario generate_scenario(const dtree::DeviceTree& tree, std::uint64_t seed,
                           const FuzzParams& params = {}, const soc::SocConfig& cfg = {});

}  // namespace cloaksim::nsim
