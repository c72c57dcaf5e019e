// Simulated hardware substrate: NS-tagged bus with firewall admission,
// CSU/TZASC state, GIC, RAM, DMA, and access-cost accounting.
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "cloaksim/decode.hpp"
#include "cloaksim/dtree.hpp"

namespace cloaksim::soc {

using dtree::NodeId;
using dtree::RegRange;

struct SocError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct OutOfRange : SocError {
    using SocError::SocError;
};
struct Misaligned : SocError {
    using SocError::SocError;
};
struct BadRegion : SocError {
    using SocError::SocError;
};
struct UnknownIrq : SocError {
    using SocError::SocError;
};
struct BuildError : SocError {
    using SocError::SocError;
};

enum class World : std::uint8_t { NonSecure = 0, Secure = 1 };
enum class Op : std::uint8_t { Read = 0, Write = 1 };
enum class CslLevel : std::uint8_t { NsAllowed = 0, SecureOnly = 1 };
enum class TzPerm : std::uint8_t { NsNone = 0, NsReadOnly = 1, NsRw = 2 };

struct BusAccess {
    World world = World::NonSecure;
    Op op = Op::Read;
    std::uint32_t addr = 0;
    std::uint8_t width = 4;  // 1, 2, or 4, addr aligned to width
    std::uint32_t value = 0;
    bool strongly_ordered = false;
};

enum class BusStatus : std::uint8_t { Ok = 0, BusError = 1, Unmapped = 2 };

struct BusResult {
    BusStatus status = BusStatus::Ok;
    std::uint32_t value = 0;
    bool ok() const { return status == BusStatus::Ok; }
};

inline constexpr std::uint32_t kTzGranule = 4096;

/// CSU CSL register file plus the flattened TZASC region table; the single
/// authority for bus-access admission.
class FirewallState {
public:
    FirewallState() = default;
    FirewallState(dtree::CslGeometry geometry, RegRange ram, RegRange secure_ram);

    void csu_set(std::uint32_t reg, std::uint32_t field, CslLevel level);
    CslLevel csl(std::uint32_t reg, std::uint32_t field) const;

    void tzasc_set_region(std::uint32_t base, std::uint32_t size, TzPerm perm);
    TzPerm ram_perm(std::uint32_t addr) const;

    struct TzRegion {
        std::uint32_t base = 0;
        std::uint32_t size = 0;
        TzPerm perm = TzPerm::NsRw;
        bool operator==(const TzRegion&) const = default;
    };
    const std::vector<TzRegion>& tzasc_regions() const { return regions_; }
    const std::vector<std::vector<CslLevel>>& csl_file() const { return csl_; }

    /// Reset state: every CSL field NS-allowed, all RAM NS_RW except the
    /// secure-kernel region, which is NS_NONE.
    void reset();

    bool operator==(const FirewallState&) const = default;

private:
    dtree::CslGeometry geometry_{};
    RegRange ram_{};
    RegRange secure_{};
    std::vector<std::vector<CslLevel>> csl_;
    std::vector<TzRegion> regions_;  // sorted, disjoint, covering all of RAM
};

/// Per-instruction device-access costs, integer nanoseconds; accumulated
/// time is an exact dot product of counters and constants.
struct CostModel {
    static constexpr std::uint64_t kLdrPlainNs = 110;  // 0.11 us
    static constexpr std::uint64_t kStrPlainNs = 290;  // 0.29 us
    static constexpr std::uint64_t kLdrSomNs = 270;    // 0.27 us
    static constexpr std::uint64_t kStrSomNs = 330;    // 0.33 us
    static constexpr std::uint64_t kLdrEmuNs = 1140;   // 1.14 us
    static constexpr std::uint64_t kStrEmuNs = 1190;   // 1.19 us

    std::uint64_t ldr_plain = 0;
    std::uint64_t str_plain = 0;
    std::uint64_t ldr_som = 0;
    std::uint64_t str_som = 0;
    std::uint64_t ldr_emu = 0;
    std::uint64_t str_emu = 0;
    std::uint64_t abort_count = 0;   // NS accesses denied by the bus firewall
    std::uint64_t denied_count = 0;  // accesses denied by emulation policy
    std::uint64_t dma_denied = 0;
    std::uint64_t dma_bytes = 0;
    std::uint64_t dma_bandwidth_bytes_per_us = 5;

    void count_direct(Op op, bool strongly_ordered) {
        if (op == Op::Read)
            ++(strongly_ordered ? ldr_som : ldr_plain);
        else
            ++(strongly_ordered ? str_som : str_plain);
    }
    void count_emulated(Op op) { ++(op == Op::Read ? ldr_emu : str_emu); }

    std::uint64_t mmio_time_ns() const {
        return ldr_plain * kLdrPlainNs + str_plain * kStrPlainNs + ldr_som * kLdrSomNs +
               str_som * kStrSomNs + ldr_emu * kLdrEmuNs + str_emu * kStrEmuNs;
    }
    std::uint64_t dma_time_ns() const { return dma_bytes * 1000 / dma_bandwidth_bytes_per_us; }
    std::uint64_t total_time_ns() const { return mmio_time_ns() + dma_time_ns(); }
};

/// Interrupt distributor. FIQ_S lines go to the secure handler queue and are
/// never observable as pending on any NS line.
class Gic {
public:
    enum class Group : std::uint8_t { IrqNs = 0, FiqS = 1 };

    struct Line {
        bool enabled = false;
        Group group = Group::IrqNs;
        bool pending = false;
        std::optional<std::uint32_t> alt_ns_line;
        bool operator==(const Line&) const = default;
    };

    explicit Gic(std::uint32_t lines = 256);

    void configure(std::uint32_t irq, bool enabled, Group group);
    void set_alt_ns_line(std::uint32_t irq, std::uint32_t alt);
    void raise(std::uint32_t irq);
    void redeliver_ns(std::uint32_t irq);

    /// Next pending+enabled FIQ_S line, consumed; nullopt when idle.
    std::optional<std::uint32_t> pop_secure();
    std::vector<std::uint32_t> ns_pending() const;
    void ns_ack(std::uint32_t irq);

    const Line& line(std::uint32_t irq) const;
    std::uint32_t line_count() const { return static_cast<std::uint32_t>(lines_.size()); }
    void reset();

private:
    void check(std::uint32_t irq) const;
    std::vector<Line> lines_;
};

// --- audit -------------------------------------------------------------

struct AuditAccess {
    std::uint32_t gen = 0;
    std::uint32_t addr = 0;
    std::uint32_t value = 0;
    World world = World::NonSecure;
    Op op = Op::Read;
    BusStatus verdict = BusStatus::Ok;
    std::uint8_t width = 4;
    bool strongly_ordered = false;
};

struct AuditDma {
    std::uint32_t gen = 0;
    NodeId master = dtree::kNoNode;
    Op direction = Op::Read;
    std::uint32_t addr = 0;
    std::uint32_t len = 0;
    BusStatus verdict = BusStatus::Ok;
};

struct AuditConfig {
    enum class Kind : std::uint8_t { CsuSet, TzascSet, ClassMark, Reset, SecureBulk };
    std::uint32_t gen = 0;
    Kind kind = Kind::CsuSet;
    std::uint32_t a = 0, b = 0, c = 0;
    std::string name;  // ClassMark: class name
};

/// Always-on ledger of everything that crossed the bus plus the firewall
/// reconfigurations, in one global order.
class AuditLog {
public:
    std::uint32_t next_gen() { return gen_++; }
    void record(AuditAccess rec) { accesses_.push_back(rec); }
    void record(AuditDma rec) { dmas_.push_back(rec); }
    void record(AuditConfig rec) { configs_.push_back(std::move(rec)); }

    const std::vector<AuditAccess>& accesses() const { return accesses_; }
    const std::vector<AuditDma>& dmas() const { return dmas_; }
    const std::vector<AuditConfig>& configs() const { return configs_; }
    void reserve_accesses(std::size_t n) { accesses_.reserve(n); }

private:
    std::uint32_t gen_ = 0;
    std::vector<AuditAccess> accesses_;
    std::vector<AuditDma> dmas_;
    std::vector<AuditConfig> configs_;
};

// --- devices -------------------------------------------------------------

/// Facilities a device model may invoke from a register side effect.
class SocHooks {
public:
    virtual ~SocHooks() = default;
    virtual void raise_irq(std::uint32_t line) = 0;
    virtual BusStatus dma_from_device(NodeId master, Op direction, std::uint32_t addr,
                                      std::uint32_t len) = 0;
};

class Device {
public:
    Device(NodeId node, std::string name, RegRange mmio)
        : node_(node), name_(std::move(name)), mmio_(mmio) {}
    virtual ~Device() = default;

    NodeId node() const { return node_; }
    const std::string& name() const { return name_; }
    RegRange mmio() const { return mmio_; }

    /// Hardwired secure-only devices (CSU, GIC) never admit NS accesses.
    virtual bool secure_only() const { return false; }
    virtual std::uint32_t read_reg(std::uint32_t offset) = 0;
    virtual void write_reg(std::uint32_t offset, std::uint32_t value) = 0;
    virtual void reset() = 0;

protected:
    friend class Soc;
    SocHooks* hooks_ = nullptr;

private:
    NodeId node_;
    std::string name_;
    RegRange mmio_;
};

struct SocConfig {
    std::uint32_t secure_ram_size = 16u << 20;
    std::uint32_t ns_va_delta = 0xB0000000;  // NS RAM virtual = physical + delta
    std::uint32_t ns_code_va = 0xC0008000;
    std::uint64_t dma_bandwidth_bytes_per_us = 5;
    std::uint32_t gic_lines = 256;
    std::uint32_t alt_line_offset = 128;  // NS re-delivery line = hw line + offset
    std::uint32_t ipu_scanout_bytes = 4096;
};

/// Static facts about the physical address space, derived from the tree.
/// Admission is a pure function of (AddressMap, FirewallState, BusAccess),
/// which is what lets the audit log be replayed without the live SoC.
struct AddressMap {
    RegRange ram{};
    RegRange secure_ram{};
    struct Entry {
        RegRange mmio{};
        NodeId node = dtree::kNoNode;
        bool secure_only = false;
        // CSL gates on the bus path; any SECURE_ONLY gate denies NS access.
        std::vector<std::pair<std::uint32_t, std::uint32_t>> gates;
    };
    std::vector<Entry> devices;  // sorted by base
    const Entry* find(std::uint32_t addr) const;
};

AddressMap build_address_map(const dtree::DeviceTree& tree, const SocConfig& cfg);
BusStatus admission(const AddressMap& map, const FirewallState& fw, const BusAccess& acc);
BusStatus dma_admission(const AddressMap& map, const FirewallState& fw, Op direction,
                        std::uint32_t addr, std::uint32_t len);

/// Sparse byte-addressed RAM, little endian, 4 KiB pages on demand.
class SparseRam {
public:
    std::uint32_t read(std::uint32_t addr, std::uint8_t width) const;
    void write(std::uint32_t addr, std::uint8_t width, std::uint32_t value);
    void read_bulk(std::uint32_t addr, std::span<std::uint8_t> out) const;
    void write_bulk(std::uint32_t addr, std::span<const std::uint8_t> data);
    void clear() { pages_.clear(); }

private:
    const std::uint8_t* page(std::uint32_t addr) const;
    std::uint8_t* page_mut(std::uint32_t addr);
    std::unordered_map<std::uint32_t, std::unique_ptr<std::array<std::uint8_t, kTzGranule>>> pages_;
};

/// One SoC instance: a single mutable world advanced by one event loop.
/// Not shareable across threads; independent instances may run in parallel.
class Soc : public SocHooks, public decode::BusPort {
public:
    explicit Soc(const dtree::DeviceTree& tree, SocConfig cfg = {});

    BusResult bus_access(const BusAccess& acc);
    BusResult dma_transfer(NodeId master, Op direction, std::uint32_t addr, std::uint32_t len);

    void csu_set(std::uint32_t reg, std::uint32_t field, CslLevel level);
    void tzasc_set_region(std::uint32_t base, std::uint32_t size, TzPerm perm);
    void mark_class(const std::string& name, bool disabled);

    /// Hardware reset: firewall, devices, and GIC return to defaults.
    /// Cost counters and the audit log deliberately survive.
    void reset();

    const dtree::DeviceTree& tree() const { return tree_; }
    const SocConfig& config() const { return cfg_; }
    const AddressMap& address_map() const { return map_; }
    const FirewallState& firewall() const { return fw_; }
    Gic& gic() { return gic_; }
    const Gic& gic() const { return gic_; }
    CostModel& cost() { return cost_; }
    const CostModel& cost() const { return cost_; }
    AuditLog& audit() { return audit_; }
    const AuditLog& audit() const { return audit_; }

    RegRange ram() const { return map_.ram; }
    RegRange secure_ram() const { return map_.secure_ram; }

    Device* device_at(std::uint32_t addr);
    Device* device_for_node(NodeId node);
    const Device* device_for_node(NodeId node) const;
    template <typename T>
    T* device_as(NodeId node) {
        return dynamic_cast<T*>(device_for_node(node));
    }
    template <typename T>
    const T* device_as(NodeId node) const {
        return dynamic_cast<const T*>(device_for_node(node));
    }

    // Secure-world RAM access; bulk writes are audited as one record.
    std::uint32_t ram_read(std::uint32_t addr, std::uint8_t width) const {
        return ram_.read(addr, width);
    }
    void ram_write(std::uint32_t addr, std::uint8_t width, std::uint32_t value) {
        ram_.write(addr, width, value);
    }
    void ram_write_bulk(std::uint32_t addr, std::span<const std::uint8_t> data);
    std::vector<std::uint8_t> ram_read_bulk(std::uint32_t addr, std::uint32_t len) const;

    // decode::BusPort — the emulation path acts as the secure world.
    std::uint32_t secure_read(std::uint32_t addr, decode::Width width) override;
    void secure_write(std::uint32_t addr, decode::Width width, std::uint32_t value) override;

    // SocHooks — register side effects re-enter the bus here.
    void raise_irq(std::uint32_t line) override;
    BusStatus dma_from_device(NodeId master, Op direction, std::uint32_t addr,
                              std::uint32_t len) override;

    void gpio_input(NodeId ctrl, std::uint32_t pin, bool level);
    std::uint32_t alt_ns_line(NodeId gpio_ctrl) const;

private:
    std::uint32_t device_read(Device& dev, std::uint32_t addr, std::uint8_t width);
    void device_write(Device& dev, std::uint32_t addr, std::uint8_t width, std::uint32_t value);

    const dtree::DeviceTree& tree_;
    SocConfig cfg_;
    AddressMap map_;
    FirewallState fw_;
    Gic gic_;
    CostModel cost_;
    AuditLog audit_;
    SparseRam ram_;
    std::vector<std::unique_ptr<Device>> devices_;
    std::map<NodeId, Device*> devices_by_node_;
};

namespace audit {

struct Violation {
    std::uint32_t gen = 0;
    std::string what;
};

/// Replays the log against the pure admission rules; any verdict that does
/// not reproduce is a violation of firewall completeness.
std::vector<Violation> replay_verdicts(const dtree::DeviceTree& tree, const SocConfig& cfg,
                                       const AuditLog& log);

/// NS-successful accesses to addresses whose effective policy forbade them
/// at that instant, plus NS-successful accesses to any disabled class's
/// devices (per ClassMark records).
std::vector<Violation> isolation_violations(const dtree::DeviceTree& tree, const SocConfig& cfg,
                                            const AuditLog& log);

}  // namespace audit

}  // namespace cloaksim::soc
