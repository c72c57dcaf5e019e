#include "cloaksim/skernel.hpp"

#include <algorithm>
#include <utility>

#include "cloaksim/devices.hpp"

namespace cloaksim::skernel {

using soc::CslLevel;
using soc::GpioController;
using soc::I2cController;
using soc::IpuDevice;
using soc::TzPerm;

namespace {
constexpr std::uint32_t kFbOffsetInSecureRam = 0x100000;
constexpr decode::Width kWord = decode::Width::Word;
}  // namespace

Skernel::Skernel(const dtree::DeviceTree& tree, soc::Soc& soc) : tree_(tree), soc_(soc) {}

std::uint32_t Skernel::ns_ram_va_to_pa(std::uint32_t va) const {
    return va - soc_.config().ns_va_delta;
}

std::uint32_t Skernel::ns_ram_pa_to_va(std::uint32_t pa) const {
    return pa + soc_.config().ns_va_delta;
}

void Skernel::boot() {
    try {
        dtree::check_enforceable(tree_);
        layout_ = bitvector::Layout(dtree::classes_of(tree_));
    } catch (const dtree::NoProtection& e) {
        throw TreeRejected(std::string("unenforceable class: ") + e.what());
    } catch (const std::invalid_argument& e) {
        throw TreeRejected(e.what());
    }

    plans_.clear();
    for (const auto& [name, nodes] : tree_.class_index()) {
        for (NodeId id : nodes) plans_[name].push_back(dtree::protect_closure(tree_, id));
    }

    class_states_.clear();
    for (const std::string& name : layout_.classes()) class_states_[name] = ClassSetting::Enabled;
    field_refs_.clear();
    deny_refs_.clear();
    passthrough_refs_.clear();
    pin_refs_.clear();
    i2c_refs_.clear();
    fb_refs_.clear();
    i2c_nack_latch_.clear();
    policies_.clear();
    in_smc_ = session_active_ = false;
    power_held_ = back_held_ = reset_requested_ = false;

    // Nothing in the non-secure world can reach the s-kernel's memory.
    soc_.tzasc_set_region(soc_.secure_ram().base, soc_.secure_ram().size, TzPerm::NsNone);

    // External aborts and FIQs trap to the monitor from here on.
    scr_ = ScrState{.ns = true, .ea_to_monitor = true, .fiq_to_monitor = true};

    // The s-kernel operates every GPIO controller's real hardware line; the
    // NS world is given an alternate line for re-delivered events.
    for (NodeId id : tree_.find_all_compatible("sim,gpio")) {
        const dtree::DeviceNode& n = tree_.node(id);
        if (!n.reg || !n.interrupt_parent) continue;
        std::uint32_t hw = n.interrupt_parent->line;
        std::uint32_t alt = soc_.alt_ns_line(id);
        soc_.gic().configure(hw, true, soc::Gic::Group::FiqS);
        soc_.gic().set_alt_ns_line(hw, alt);
        soc_.gic().configure(alt, true, soc::Gic::Group::IrqNs);
    }

    // Keypad pins from the keys node; child node names are the key names.
    key_pins_.clear();
    key_plans_.clear();
    if (auto keys = tree_.find_compatible("sim,keys")) {
        static const std::map<std::string, KeyName> kNames{{"home", KeyName::Home},
                                                           {"back", KeyName::Back},
                                                           {"power", KeyName::Power},
                                                           {"volume", KeyName::Volume}};
        for (NodeId child : tree_.node(*keys).children) {
            const dtree::DeviceNode& n = tree_.node(child);
            auto it = kNames.find(n.name);
            if (it == kNames.end() || n.gpio_deps.empty()) continue;
            key_pins_.push_back(KeyPin{n.gpio_deps[0].controller, n.gpio_deps[0].pin, it->second});
            try {
                key_plans_.push_back(dtree::protect_closure(tree_, child));
            } catch (const dtree::NoProtection& e) {
                throw TreeRejected(std::string("keypad pin not protectable: ") + e.what());
            }
        }
    }
    // Unmask the key pins so presses chain into the GIC. These IMR/GDIR
    // bits stay under s-kernel control even while the pins are shared.
    key_guard_masks_.clear();
    for (const KeyPin& kp : key_pins_) key_guard_masks_[kp.ctrl] |= 1u << kp.pin;
    for (auto [ctrl, mask] : key_guard_masks_) {
        if (!tree_.node(ctrl).reg) throw TreeRejected("keypad controller has no registers");
        std::uint32_t base = tree_.node(ctrl).reg->base;
        std::uint32_t cur = soc_.secure_read(base + GpioController::kImr, kWord);
        soc_.secure_write(base + GpioController::kImr, kWord, cur | mask);
    }

    ipu_node_ = tree_.find_compatible("sim,ipu").value_or(dtree::kNoNode);
    fb_pa_ = soc_.secure_ram().base + kFbOffsetInSecureRam;
    fb_plan_.reset();
    if (ipu_node_ != dtree::kNoNode) {
        try {
            fb_plan_ = dtree::protect_closure(tree_, ipu_node_);
        } catch (const dtree::NoProtection& e) {
            throw TreeRejected(std::string("framebuffer not protectable: ") + e.what());
        }
    }

    // The notification LED is persistently acquired for exclusive use.
    has_led_ = false;
    auto led_class = tree_.class_index().find("led");
    if (led_class != tree_.class_index().end() && !led_class->second.empty()) {
        NodeId led_node = led_class->second.front();
        const dtree::DeviceNode& n = tree_.node(led_node);
        if (!n.gpio_deps.empty()) {
            led_ctrl_ = n.gpio_deps[0].controller;
            led_pin_ = n.gpio_deps[0].pin;
            if (!tree_.node(led_ctrl_).reg) throw TreeRejected("LED controller has no registers");
            has_led_ = true;
            std::uint32_t base = tree_.node(led_ctrl_).reg->base;
            std::uint32_t gdir = soc_.secure_read(base + GpioController::kGdir, kWord);
            soc_.secure_write(base + GpioController::kGdir, kWord, gdir | (1u << led_pin_));
            led_set(false);
            apply_plan(dtree::protect_closure(tree_, led_node), +1, true);
            rebuild_policies();
        }
    }
    booted_ = true;
}

// --- protection bookkeeping -------------------------------------------------

void Skernel::bump_field(std::uint32_t reg, std::uint32_t field, int delta) {
    int& count = field_refs_[{reg, field}];
    int before = count;
    count += delta;
    if (before == 0 && count > 0) soc_.csu_set(reg, field, CslLevel::SecureOnly);
    if (before > 0 && count == 0) soc_.csu_set(reg, field, CslLevel::NsAllowed);
}

void Skernel::apply_plan(const dtree::ProtectionPlan& plan, int delta, bool deny_target) {
    for (const dtree::ProtectRef& ref : plan.hw_refs)
        bump_field(ref.register_index, ref.field_index, delta);
    if (deny_target && tree_.node(plan.target).reg) deny_refs_[plan.target] += delta;
    for (const dtree::GpioDep& dep : plan.pin_masks) pin_refs_[dep.controller][dep.pin] += delta;
    for (const auto& block : plan.i2c_blocks) i2c_refs_[block.bus][block.address] += delta;
    for (NodeId sibling : plan.passthrough_siblings)
        if (tree_.node(sibling).reg) passthrough_refs_[sibling] += delta;
}

void Skernel::rebuild_policies() {
    policies_.clear();
    auto positive = [](const std::map<std::uint32_t, int>& m) {
        std::uint32_t mask = 0;
        for (auto [k, v] : m)
            if (v > 0) mask |= 1u << k;
        return mask;
    };

    std::set<NodeId> candidates;
    for (const auto& [n, c] : deny_refs_)
        if (c > 0) candidates.insert(n);
    for (const auto& [n, c] : passthrough_refs_)
        if (c > 0) candidates.insert(n);
    for (const auto& [n, m] : pin_refs_)
        if (positive(m)) candidates.insert(n);
    for (const auto& [n, m] : i2c_refs_) {
        for (auto [addr, c] : m)
            if (c > 0) candidates.insert(n);
    }
    for (const auto& [n, c] : fb_refs_)
        if (c > 0) candidates.insert(n);

    for (NodeId id : candidates) {
        const dtree::DeviceNode& n = tree_.node(id);
        if (!n.reg) continue;
        RegionPolicy p;
        p.base = n.reg->base;
        p.size = n.reg->size;
        p.device = id;
        auto deny_it = deny_refs_.find(id);
        std::uint32_t mask = pin_refs_.count(id) ? positive(pin_refs_[id]) : 0;
        std::uint32_t guard = 0;
        if (auto it = key_guard_masks_.find(id); it != key_guard_masks_.end()) guard = it->second;
        std::set<std::uint32_t> blocked;
        if (auto it = i2c_refs_.find(id); it != i2c_refs_.end())
            for (auto [addr, c] : it->second)
                if (c > 0) blocked.insert(addr);

        if (deny_it != deny_refs_.end() && deny_it->second > 0) {
            p.kind = PolicyKind::DenySilent;
            p.deny_read = p.deny_write = true;
        } else if (mask != 0 || (guard != 0 && n.has_compatible("sim,gpio"))) {
            p.kind = PolicyKind::GpioMask;
            p.gpio_mask = mask;
            p.gpio_imr_guard = guard;
        } else if (!blocked.empty()) {
            p.kind = PolicyKind::I2cFilter;
            p.blocked_addrs = std::move(blocked);
        } else if (fb_refs_.count(id) && fb_refs_[id] > 0) {
            p.kind = PolicyKind::FbAcquired;
            p.deny_write = true;
        } else {
            p.kind = PolicyKind::PassThrough;
        }
        policies_.push_back(std::move(p));
    }
    std::sort(policies_.begin(), policies_.end(),
              [](const RegionPolicy& a, const RegionPolicy& b) { return a.base < b.base; });

    // Drop stale bus-filter latches once the filter is gone.
    for (auto it = i2c_nack_latch_.begin(); it != i2c_nack_latch_.end();) {
        const RegionPolicy* p = nullptr;
        for (const RegionPolicy& cand : policies_)
            if (cand.device == it->first && cand.kind == PolicyKind::I2cFilter) p = &cand;
        it = p ? std::next(it) : i2c_nack_latch_.erase(it);
    }
}

const RegionPolicy* Skernel::find_policy(std::uint32_t addr) const {
    for (const RegionPolicy& p : policies_)
        if (addr >= p.base && addr - p.base < p.size) return &p;
    return nullptr;
}

void Skernel::set_class_state(const std::string& class_name, ClassSetting target) {
    auto it = class_states_.find(class_name);
    if (it == class_states_.end()) throw UnknownClass("unknown class '" + class_name + "'");
    if (it->second == target) return;
    int delta = target == ClassSetting::Disabled ? +1 : -1;
    for (const dtree::ProtectionPlan& plan : plans_[class_name]) apply_plan(plan, delta, true);
    rebuild_policies();
    it->second = target;
    soc_.mark_class(class_name, target == ClassSetting::Disabled);
}

// --- abort handling -----------------------------------------------------------

decode::Verdict Skernel::resolve_verdict(const RegionPolicy& policy, const decode::Instr& instr,
                                         std::uint32_t addr, std::uint32_t store_value) {
    decode::Verdict v;
    const bool is_load = instr.kind == decode::Kind::Load;
    const std::uint32_t offset = (addr - policy.base) & ~3u;

    auto deny = [&]() {
        v.allow = false;
        v.substitute = policy.substitute_read;
        ++soc_.cost().denied_count;
    };

    switch (policy.kind) {
        case PolicyKind::DenySilent: deny(); break;
        case PolicyKind::PassThrough: break;
        case PolicyKind::FbAcquired:
            if (!is_load) deny();
            break;
        case PolicyKind::GpioMask: {
            auto* gpio = soc_.device_as<GpioController>(policy.device);
            const std::uint32_t mask = policy.gpio_mask;
            const std::uint32_t base = policy.base;
            if (is_load) {
                // Nothing about the acquired pins is observable.
                v.transform = [mask, base](std::uint32_t a, std::uint32_t value) {
                    std::uint32_t reg = (a - base) & ~3u;
                    if (reg == GpioController::kDr || reg == GpioController::kGdir ||
                        reg == GpioController::kIsr || reg == GpioController::kImr)
                        return value & ~mask;
                    return value;
                };
            } else {
                // Writes preserve the acquired pins' current state; the NS
                // world cannot clear their latched interrupts, and the
                // s-kernel's listener pins keep their IMR/GDIR settings.
                const std::uint32_t guard = policy.gpio_imr_guard;
                v.transform = [mask, guard, gpio, offset](std::uint32_t, std::uint32_t value) {
                    if (offset == GpioController::kIsr) return value & ~mask;
                    if (offset == GpioController::kGdir || offset == GpioController::kImr) {
                        std::uint32_t keep = mask | guard;
                        return (value & ~keep) | (gpio->read_reg(offset) & keep);
                    }
                    if (offset == GpioController::kDr)
                        return (value & ~mask) | (gpio->read_reg(offset) & mask);
                    return value;
                };
            }
            break;
        }
        case PolicyKind::I2cFilter: {
            bool& latched = i2c_nack_latch_[policy.device];
            if (!is_load) {
                if (offset == I2cController::kAddr) {
                    if (policy.blocked_addrs.count(store_value & 0x7Fu)) {
                        latched = true;
                        deny();
                    } else {
                        latched = false;
                    }
                } else if (offset == I2cController::kData && latched) {
                    deny();
                }
            } else {
                if (offset == I2cController::kData && latched) {
                    deny();
                } else if (offset == I2cController::kStatus && latched) {
                    // A blocked selection reads back as a NACK.
                    v.transform = [](std::uint32_t, std::uint32_t value) { return value | 1u; };
                }
            }
            break;
        }
    }
    return v;
}

AbortOutcome Skernel::handle_data_abort(decode::NsContext& ctx, bool strongly_ordered) {
    // Without strongly-ordered mappings the abort is imprecise and the
    // faulting instruction cannot be identified.
    if (!strongly_ordered) return AbortOutcome::NsFatal;

    // The instruction must live in non-secure RAM.
    std::uint32_t instr_pa = ns_ram_va_to_pa(ctx.abort_lr);
    soc::RegRange ram = soc_.ram();
    soc::RegRange secure = soc_.secure_ram();
    if (!ram.contains(instr_pa) || secure.contains(instr_pa)) return AbortOutcome::NsFatal;

    std::uint32_t word = soc_.ram_read(instr_pa, 4);
    std::optional<decode::Instr> instr = decode::decode(word);
    if (!instr) return AbortOutcome::NsFatal;

    std::optional<std::uint32_t> ea = decode::effective_address(*instr, ctx);
    if (!ea || *ea != ctx.dfar) return AbortOutcome::NsFatal;

    // Device MMIO is identity mapped; the data address must be a device.
    std::uint32_t data_pa = ctx.dfar;
    const soc::AddressMap::Entry* dev = soc_.address_map().find(data_pa);
    if (!dev) return AbortOutcome::NsFatal;

    const RegionPolicy* policy = find_policy(data_pa);
    if (!policy) return AbortOutcome::NsFatal;

    std::uint32_t store_value = ctx.r[instr->rt];
    decode::Verdict verdict = resolve_verdict(*policy, *instr, data_pa, store_value);
    decode::emulate(*instr, ctx, data_pa, verdict, soc_);
    soc_.cost().count_emulated(instr->kind == decode::Kind::Load ? soc::Op::Read : soc::Op::Write);
    return AbortOutcome::Emulated;
}

// --- secure UI ------------------------------------------------------------

void Skernel::led_set(bool on) {
    if (!has_led_) return;
    std::uint32_t base = tree_.node(led_ctrl_).reg->base;
    std::uint32_t dr = soc_.secure_read(base + GpioController::kDr, kWord);
    std::uint32_t bit = 1u << led_pin_;
    soc_.secure_write(base + GpioController::kDr, kWord, on ? (dr | bit) : (dr & ~bit));
}

bool Skernel::led_lit() const {
    if (!has_led_) return false;
    const auto* gpio = std::as_const(soc_).device_as<GpioController>(led_ctrl_);
    return gpio && (gpio->output_latch() & (1u << led_pin_));
}

void Skernel::acquire_framebuffer() {
    if (ipu_node_ == dtree::kNoNode) return;
    std::uint32_t base = tree_.node(ipu_node_).reg->base;
    saved_ipu_.fb_base = soc_.secure_read(base + IpuDevice::kFbBase, kWord);
    saved_ipu_.fb_format = soc_.secure_read(base + IpuDevice::kFbFormat, kWord);
    saved_ipu_.enable = soc_.secure_read(base + IpuDevice::kEnable, kWord);

    fb_refs_[ipu_node_] += 1;
    apply_plan(*fb_plan_, +1, /*deny_target=*/false);
    rebuild_policies();

    // The IPU's DMA runs non-secure; the framebuffer page is readable but
    // not writable from the NS side.
    soc_.tzasc_set_region(fb_pa_, soc::kTzGranule, TzPerm::NsReadOnly);
    soc_.secure_write(base + IpuDevice::kFbBase, kWord, fb_pa_);
    soc_.secure_write(base + IpuDevice::kFbFormat, kWord, IpuDevice::kFormatRgb24);
}

void Skernel::release_framebuffer() {
    if (ipu_node_ == dtree::kNoNode) return;
    std::uint32_t base = tree_.node(ipu_node_).reg->base;
    soc_.secure_write(base + IpuDevice::kFbBase, kWord, saved_ipu_.fb_base);
    soc_.secure_write(base + IpuDevice::kFbFormat, kWord, saved_ipu_.fb_format);
    soc_.secure_write(base + IpuDevice::kEnable, kWord, saved_ipu_.enable);
    soc_.tzasc_set_region(fb_pa_, soc::kTzGranule, TzPerm::NsNone);

    fb_refs_[ipu_node_] -= 1;
    apply_plan(*fb_plan_, -1, /*deny_target=*/false);
    rebuild_policies();
}

void Skernel::acquire_keypad() {
    for (const dtree::ProtectionPlan& plan : key_plans_) apply_plan(plan, +1, true);
    rebuild_policies();
}

void Skernel::release_keypad() {
    for (const dtree::ProtectionPlan& plan : key_plans_) apply_plan(plan, -1, true);
    rebuild_policies();
}

SetResult Skernel::smc_cloak_set(std::uint32_t bv, UserEventSource& user) {
    if (in_smc_) return SetResult::Invalid;  // single secure UI session at a time
    if (ipu_node_ == dtree::kNoNode || key_pins_.empty()) return SetResult::Invalid;
    in_smc_ = true;

    acquire_framebuffer();
    acquire_keypad();

    SetResult result = SetResult::Denied;
    if (!layout_.valid(bv)) {
        result = SetResult::Invalid;
    } else {
        // Re-display exactly what was received; tampering upstream of the
        // SMC shows up on screen.
        render::Image img = render::render_settings(bv);
        last_rendered_bv_ = bv;
        soc_.ram_write_bulk(fb_pa_, img.rgb);
        std::uint32_t ipu_base = tree_.node(ipu_node_).reg->base;
        soc_.secure_write(ipu_base + IpuDevice::kEnable, kWord, 1);  // one scanout pass

        led_set(true);
        session_active_ = true;
        session_queue_.clear();

        for (;;) {
            std::optional<KeyEvent> decision;
            for (const KeyEvent& ev : session_queue_) {
                if (ev.press && (ev.key == KeyName::Home || ev.key == KeyName::Back)) {
                    decision = ev;
                    break;
                }
            }
            session_queue_.clear();
            if (decision) {
                if (decision->key == KeyName::Home) {
                    for (const std::string& name : layout_.classes()) {
                        auto bit = layout_.class_bit(name);
                        ClassSetting want = (bv >> *bit) & 1u ? ClassSetting::Disabled
                                                              : ClassSetting::Enabled;
                        if (class_states_[name] != want) set_class_state(name, want);
                    }
                    result = SetResult::Applied;
                } else {
                    result = SetResult::Denied;
                }
                break;
            }
            std::optional<KeyEvent> ev = user.next();
            if (!ev || reset_requested_) {
                result = SetResult::Denied;  // user walked away
                break;
            }
            inject_key(*ev);
        }
        session_active_ = false;
        led_set(false);
    }

    release_keypad();
    release_framebuffer();
    in_smc_ = false;
    return result;
}

std::uint32_t Skernel::smc_cloak_get() const {
    std::set<std::string> disabled;
    for (const auto& [name, state] : class_states_)
        if (state == ClassSetting::Disabled) disabled.insert(name);
    return layout_.encode(disabled);
}

ResetResult Skernel::psci_reset(ResetSource source) {
    if (source == ResetSource::NsCall) {
        for (const auto& [name, state] : class_states_)
            if (state == ClassSetting::Disabled) return ResetResult::Denied;
    }
    do_reboot();
    return ResetResult::Reset;
}

void Skernel::do_reboot() {
    soc_.reset();
    boot();  // always reboots with every peripheral accessible
}

std::uint32_t Skernel::smc(std::uint32_t function_id, std::uint32_t r1, UserEventSource& user) {
    switch (function_id) {
        case kSmcCloakSet: return static_cast<std::uint32_t>(smc_cloak_set(r1, user));
        case kSmcCloakGet: return smc_cloak_get();
        case kSmcPsciSystemReset:
            return static_cast<std::uint32_t>(psci_reset(ResetSource::NsCall));
        default: return 0xFFFFFFFFu;
    }
}

// --- interrupts -----------------------------------------------------------

void Skernel::inject_key(KeyEvent event) {
    for (const KeyPin& kp : key_pins_) {
        if (kp.key == event.key) {
            soc_.gpio_input(kp.ctrl, kp.pin, event.press);
            pump();
            return;
        }
    }
}

void Skernel::pump() {
    while (auto irq = soc_.gic().pop_secure()) secure_irq_dispatch(*irq);
}

void Skernel::secure_irq_dispatch(std::uint32_t irq) {
    // Locate the GPIO controller chained on this line.
    for (NodeId id : tree_.find_all_compatible("sim,gpio")) {
        const dtree::DeviceNode& n = tree_.node(id);
        if (!n.reg || !n.interrupt_parent || n.interrupt_parent->line != irq) continue;
        auto* gpio = soc_.device_as<GpioController>(id);
        std::uint32_t base = n.reg->base;
        std::uint32_t isr = soc_.secure_read(base + GpioController::kIsr, kWord);
        for (std::uint32_t pin = 0; pin < 32; ++pin) {
            if (!(isr & (1u << pin))) continue;
            bool level = gpio->pin_level(pin);
            const KeyPin* kp = nullptr;
            for (const KeyPin& cand : key_pins_)
                if (cand.ctrl == id && cand.pin == pin) kp = &cand;

            bool acquired = false;
            if (auto it = pin_refs_.find(id); it != pin_refs_.end()) {
                auto pit = it->second.find(pin);
                acquired = pit != it->second.end() && pit->second > 0;
            }

            bool consumed = false;
            if (kp && session_active_ &&
                (kp->key == KeyName::Home || kp->key == KeyName::Back)) {
                session_queue_.push_back(KeyEvent{kp->key, level});
                consumed = true;
            } else if (kp && !session_active_ &&
                       (kp->key == KeyName::Power || kp->key == KeyName::Back)) {
                // Secure reset sequence: Power and Back held together.
                (kp->key == KeyName::Power ? power_held_ : back_held_) = level;
                if (power_held_ && back_held_) {
                    power_held_ = back_held_ = false;
                    reset_requested_ = true;
                    consumed = true;
                }
            }
            // Non-consumed events on shared pins reach the NS world on the
            // alternate line; events on acquired pins are dropped.
            if (!consumed && !acquired) soc_.gic().redeliver_ns(irq);
        }
        soc_.secure_write(base + GpioController::kIsr, kWord, isr);  // write-1-clear
        return;
    }
}

bool Skernel::consume_reset_request() {
    bool r = reset_requested_;
    reset_requested_ = false;
    return r;
}

std::optional<std::uint32_t> Skernel::read_back_confirmation() const {
    render::Image img = render::render_settings(0);
    std::vector<std::uint8_t> bytes =
        soc_.ram_read_bulk(fb_pa_, static_cast<std::uint32_t>(img.rgb.size()));
    img.rgb = std::move(bytes);
    return render::decode_settings_image(img);
}

}  // namespace cloaksim::skernel
