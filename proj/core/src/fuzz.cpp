// Random scenario generation for the isolation fuzzer. The generator keeps a
// shadow model of the class states and NS liveness, so it can script a
// vigilant user (Back on any tampered confirmation) and emit expectations
// that double as oracles during the fuzz run.
#include <random>
#include <set>

#include "cloaksim/devices.hpp"
#include "cloaksim/nsim.hpp"

namespace cloaksim::nsim {

namespace {

using Event = Scenario::Event;

Event key_event(skernel::KeyName key, bool press) {
    Event ev;
    ev.kind = Event::Kind::Key;
    ev.key = skernel::KeyEvent{key, press};
    return ev;
}

Event access_event(bool write, std::uint32_t addr, std::uint32_t value) {
    Event ev;
    ev.kind = write ? Event::Kind::Write : Event::Kind::Read;
    ev.addr = addr;
    ev.width = 4;
    ev.value = value;
    return ev;
}

Event expect_event(Event::ExpectKind kind, std::string value) {
    Event ev;
    ev.kind = Event::Kind::Expect;
    ev.expect_kind = kind;
    ev.expect_value = std::move(value);
    return ev;
}

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", v);
    return buf;
}

}  // namespace

Scenario generate_scenario(const dtree::DeviceTree& tree, std::uint64_t seed,
                           const FuzzParams& params, const soc::SocConfig& cfg) {
    std::mt19937_64 rng(seed);
    auto roll = [&](std::uint64_t n) { return rng() % n; };

    bitvector::Layout layout(dtree::classes_of(tree));
    soc::AddressMap map = soc::build_address_map(tree, cfg);

    std::vector<std::uint32_t> safe, lethal;
    std::vector<std::uint32_t> radio_bases;
    for (const auto& e : map.devices) {
        for (std::uint32_t off : {0u, 4u, 8u, 0xCu, 0x18u, 0x1Cu}) {
            if (off < e.mmio.size) (e.secure_only ? lethal : safe).push_back(e.mmio.base + off);
        }
        if (tree.node(e.node).has_compatible("sim,radio")) radio_bases.push_back(e.mmio.base);
    }
    std::uint32_t ram_va = map.ram.base + cfg.ns_va_delta;
    safe.push_back(ram_va + 0x00200000);
    safe.push_back(ram_va + 0x00300004);
    std::uint32_t secure_va = map.secure_ram.base + cfg.ns_va_delta;
    lethal.push_back(secure_va);
    lethal.push_back(secure_va + 0x2000);
    lethal.push_back(0x50000000);  // a hole in the NS address space

    const std::vector<std::string>& classes = layout.classes();

    Scenario sc;
    std::set<std::string> model;  // classes the shadow model believes are disabled
    bool alive = true;

    for (std::uint32_t n = 0; n < params.events; ++n) {
        std::uint64_t r = roll(100);
        if (!alive && r >= 50 && r < 97) r = 55;  // a dead NS world can only press keys

        if (r < 50) {
            bool write = roll(10) < 3;
            std::uint32_t addr = safe[roll(safe.size())];
            sc.events.push_back(
                access_event(write, addr, static_cast<std::uint32_t>(rng() & 0xFFFFFFFF)));
        } else if (r < 58) {
            sc.events.push_back(key_event(skernel::KeyName::Volume, true));
            sc.events.push_back(key_event(skernel::KeyName::Volume, false));
        } else if (r < 72 && !classes.empty()) {
            // Toggle one class through the full confirmation flow.
            std::set<std::string> intent = model;
            const std::string& victim = classes[roll(classes.size())];
            if (intent.count(victim))
                intent.erase(victim);
            else
                intent.insert(victim);
            std::uint32_t bv = layout.encode(intent);
            std::uint32_t mask = 0;
            if (roll(6) == 0) {
                mask = 1u << roll(classes.size());
                Event t;
                t.kind = Event::Kind::TamperBv;
                t.value = mask;
                sc.events.push_back(t);
            }
            Event set;
            set.kind = Event::Kind::SmcSet;
            set.value = bv;
            sc.events.push_back(set);
            std::uint32_t issued = bv ^ mask;
            if (!layout.valid(issued)) {
                // Rejected before the confirmation screen; the scripted keys
                // run as standalone presses.
                sc.events.push_back(key_event(skernel::KeyName::Home, true));
                sc.events.push_back(key_event(skernel::KeyName::Home, false));
            } else if (issued == bv) {
                sc.events.push_back(key_event(skernel::KeyName::Home, true));
                sc.events.push_back(key_event(skernel::KeyName::Home, false));
                model = intent;
            } else {
                // The on-screen settings do not match the intent.
                sc.events.push_back(key_event(skernel::KeyName::Back, true));
                sc.events.push_back(key_event(skernel::KeyName::Back, false));
            }
        } else if (r < 78 && layout.class_bit("wifi")) {
            Event ev;
            ev.kind = Event::Kind::Wifi;
            ev.upload = roll(2) == 0;
            ev.bytes = 4096 + roll(32) * 4096;
            sc.events.push_back(ev);
            sc.events.push_back(expect_event(Event::ExpectKind::Result,
                                             model.count("wifi") ? "unavailable" : "ok"));
        } else if (r < 84 && !radio_bases.empty()) {
            // DMA reach: point a ring at protected memory and ring the bell.
            std::uint32_t base = radio_bases[roll(radio_bases.size())];
            std::uint32_t target = roll(2) == 0 ? map.secure_ram.base : map.ram.base + 0x400000;
            sc.events.push_back(access_event(true, base + soc::RadioController::kCmd, 1));
            sc.events.push_back(
                access_event(true, base + soc::RadioController::kRingBase, target));
            sc.events.push_back(
                access_event(true, base + soc::RadioController::kDoorbell, 0x1000));
        } else if (r < 90) {
            Event ev;
            ev.kind = Event::Kind::PsciReset;
            sc.events.push_back(ev);
            sc.events.push_back(expect_event(Event::ExpectKind::Result,
                                             model.empty() ? "reset" : "denied"));
        } else if (r < 94) {
            // Secure key sequence; always reboots to the all-enabled state.
            sc.events.push_back(key_event(skernel::KeyName::Power, true));
            sc.events.push_back(key_event(skernel::KeyName::Back, true));
            sc.events.push_back(key_event(skernel::KeyName::Power, false));
            sc.events.push_back(key_event(skernel::KeyName::Back, false));
            model.clear();
            alive = true;
        } else if (r < 97) {
            std::uint32_t addr = lethal[roll(lethal.size())];
            sc.events.push_back(access_event(roll(2) == 0, addr, 0xDEAD0000u | n));
            alive = false;
        } else {
            sc.events.push_back(expect_event(Event::ExpectKind::NsStatus,
                                             alive ? "running" : "crashed"));
            if (alive)
                sc.events.push_back(
                    expect_event(Event::ExpectKind::Get, hex32(layout.encode(model))));
        }
    }
    if (alive)
        sc.events.push_back(expect_event(Event::ExpectKind::Get, hex32(layout.encode(model))));
    return sc;
}

}  // namespace cloaksim::nsim
