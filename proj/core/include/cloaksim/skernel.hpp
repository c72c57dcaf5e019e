// The trusted state machine: boot configuration, monitor-mode abort handling
// with policy dispatch, the CLOAK SMC protocol with on-screen confirmation,
// class enable/disable, device sharing, and reset policy.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "cloaksim/bitvector.hpp"
#include "cloaksim/decode.hpp"
#include "cloaksim/dtree.hpp"
#include "cloaksim/render.hpp"
#include "cloaksim/soc.hpp"

namespace cloaksim::skernel {

using dtree::NodeId;

struct SkernelError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct TreeRejected : SkernelError {
    using SkernelError::SkernelError;
};
struct UnknownClass : SkernelError {
    using SkernelError::SkernelError;
};

// SMC ABI (simulated).
inline constexpr std::uint32_t kSmcCloakSet = 0x83000001;
inline constexpr std::uint32_t kSmcCloakGet = 0x83000002;
inline constexpr std::uint32_t kSmcPsciSystemReset = 0x84000009;

enum class SetResult : std::uint32_t { Applied = 0, Denied = 1, Invalid = 2 };
enum class ResetResult : std::uint32_t { Reset = 0, Denied = 0xFFFFFFFFu };
enum class ResetSource : std::uint8_t { NsCall, KeySequence };
enum class AbortOutcome : std::uint8_t { Emulated, NsFatal };
enum class ClassSetting : std::uint8_t { Enabled, Disabled };

enum class KeyName : std::uint8_t { Home, Back, Power, Volume };

struct KeyEvent {
    KeyName key = KeyName::Home;
    bool press = true;
};

/// The only asynchronous input: queued user key events, pulled while the
/// confirmation screen waits. An exhausted source denies the settings.
class UserEventSource {
public:
    virtual ~UserEventSource() = default;
    virtual std::optional<KeyEvent> next() = 0;
};

struct ScrState {
    bool ns = true;
    bool ea_to_monitor = false;
    bool fiq_to_monitor = false;
    bool operator==(const ScrState&) const = default;
};

enum class PolicyKind : std::uint8_t {
    DenySilent,   // reads substitute 0, writes dropped
    PassThrough,  // emulate exactly
    GpioMask,     // hide and preserve acquired pins
    I2cFilter,    // deny selection of blocked slave addresses
    FbAcquired,   // reads pass, writes dropped while the s-kernel owns it
};

/// Per-physical-region emulation rule. Kept as comparable data; transforms
/// are derived from the kind when a verdict is resolved.
struct RegionPolicy {
    std::uint32_t base = 0;
    std::uint32_t size = 0;
    NodeId device = dtree::kNoNode;
    PolicyKind kind = PolicyKind::PassThrough;
    bool deny_read = false;
    bool deny_write = false;
    std::uint32_t substitute_read = 0;
    std::uint32_t gpio_mask = 0;       // GpioMask: acquired pins, hidden and preserved
    std::uint32_t gpio_imr_guard = 0;  // listener pins whose IMR/GDIR bits NS cannot flip
    std::set<std::uint32_t> blocked_addrs;  // I2cFilter

    bool operator==(const RegionPolicy&) const = default;
};

class Skernel {
public:
    Skernel(const dtree::DeviceTree& tree, soc::Soc& soc);

    /// Secure boot: protects secure RAM, routes external aborts and FIQs to
    /// the monitor, initializes the GIC, permanently acquires the LED pin,
    /// and leaves every class enabled. Throws TreeRejected for a tree with
    /// an unenforceable class.
    void boot();

    /// Monitor-mode data abort handler; ctx.dfar and ctx.abort_lr must hold
    /// the NS-virtual fault and instruction addresses.
    AbortOutcome handle_data_abort(decode::NsContext& ctx, bool strongly_ordered);

    SetResult smc_cloak_set(std::uint32_t bv, UserEventSource& user);
    std::uint32_t smc_cloak_get() const;
    ResetResult psci_reset(ResetSource source);

    /// ABI entry: returns r0.
    std::uint32_t smc(std::uint32_t function_id, std::uint32_t r1, UserEventSource& user);

    void set_class_state(const std::string& class_name, ClassSetting target);

    void secure_irq_dispatch(std::uint32_t irq);
    /// Hardware key stimulus from the outside world, routed through the GPIO
    /// pin, the chained FIQ, and secure_irq_dispatch.
    void inject_key(KeyEvent event);
    /// Drains pending secure interrupts.
    void pump();

    /// Set when the secure key sequence fired; the platform loop performs
    /// the actual reboot.
    bool consume_reset_request();

    const bitvector::Layout& layout() const { return layout_; }
    ScrState scr() const { return scr_; }
    const std::map<std::string, ClassSetting>& class_states() const { return class_states_; }
    const std::vector<RegionPolicy>& policy_table() const { return policies_; }
    const std::map<std::string, std::vector<dtree::ProtectionPlan>>& plans() const {
        return plans_;
    }

    bool smc_in_progress() const { return in_smc_; }
    std::uint32_t last_rendered_bv() const { return last_rendered_bv_; }
    /// Decodes the confirmation image straight from framebuffer memory.
    std::optional<std::uint32_t> read_back_confirmation() const;
    std::uint32_t framebuffer_base() const { return fb_pa_; }
    bool led_lit() const;

    // NS virtual-to-physical model: RAM at a fixed offset, MMIO identity.
    std::uint32_t ns_ram_va_to_pa(std::uint32_t va) const;
    std::uint32_t ns_ram_pa_to_va(std::uint32_t pa) const;

private:
    struct KeyPin {
        NodeId ctrl = dtree::kNoNode;
        std::uint32_t pin = 0;
        KeyName key = KeyName::Home;
    };

    void apply_plan(const dtree::ProtectionPlan& plan, int delta, bool deny_target);
    void bump_field(std::uint32_t reg, std::uint32_t field, int delta);
    void rebuild_policies();
    const RegionPolicy* find_policy(std::uint32_t addr) const;
    decode::Verdict resolve_verdict(const RegionPolicy& policy, const decode::Instr& instr,
                                    std::uint32_t addr, std::uint32_t store_value);

    void acquire_framebuffer();
    void release_framebuffer();
    void acquire_keypad();
    void release_keypad();
    void led_set(bool on);
    void do_reboot();

    const dtree::DeviceTree& tree_;
    soc::Soc& soc_;
    bitvector::Layout layout_;
    ScrState scr_{};
    bool booted_ = false;

    std::map<std::string, ClassSetting> class_states_;
    std::map<std::string, std::vector<dtree::ProtectionPlan>> plans_;

    // Reference-counted protection state; the policy table is rebuilt from
    // this after every change, so enable/disable is commutative.
    std::map<std::pair<std::uint32_t, std::uint32_t>, int> field_refs_;
    std::map<NodeId, int> deny_refs_;
    std::map<NodeId, int> passthrough_refs_;
    std::map<NodeId, std::map<std::uint32_t, int>> pin_refs_;
    std::map<NodeId, std::map<std::uint32_t, int>> i2c_refs_;
    std::map<NodeId, int> fb_refs_;
    std::vector<RegionPolicy> policies_;
    std::map<NodeId, bool> i2c_nack_latch_;  // runtime state of the bus filter

    // Secure UI plumbing.
    std::vector<KeyPin> key_pins_;
    std::vector<dtree::ProtectionPlan> key_plans_;
    std::map<NodeId, std::uint32_t> key_guard_masks_;
    std::optional<dtree::ProtectionPlan> fb_plan_;
    NodeId ipu_node_ = dtree::kNoNode;
    NodeId led_ctrl_ = dtree::kNoNode;
    std::uint32_t led_pin_ = 0;
    bool has_led_ = false;
    std::uint32_t fb_pa_ = 0;
    struct SavedIpu {
        std::uint32_t fb_base = 0, fb_format = 0, enable = 0;
    } saved_ipu_;

    bool in_smc_ = false;
    bool session_active_ = false;
    std::vector<KeyEvent> session_queue_;
    bool power_held_ = false;
    bool back_held_ = false;
    bool reset_requested_ = false;
    std::uint32_t last_rendered_bv_ = 0;
};

}  // namespace cloaksim::skernel
