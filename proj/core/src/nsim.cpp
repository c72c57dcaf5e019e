#include "cloaksim/nsim.hpp"

#include "cloaksim/devices.hpp"

#include <cstdio>

namespace cloaksim::nsim {

// --- MappingTable ------------------------------------------------------------

MappingTable MappingTable::build(const dtree::DeviceTree& tree, const soc::SocConfig& cfg,
                                 const soc::AddressMap& map, bool strongly_ordered_mmio) {
    (void)tree;
    MappingTable t;
    for (const auto& e : map.devices)
        t.mappings_.push_back(
            NsMapping{e.mmio.base, e.mmio.base, e.mmio.size, strongly_ordered_mmio});
    // The NS kernel maps all of RAM as normal memory at a fixed offset.
    t.mappings_.push_back(
        NsMapping{map.ram.base + cfg.ns_va_delta, map.ram.base, map.ram.size, false});
    return t;
}

std::optional<MappingTable::Translation> MappingTable::translate(std::uint32_t va) const {
    for (const NsMapping& m : mappings_)
        if (va >= m.va_base && va - m.va_base < m.size)
            return Translation{m.pa_base + (va - m.va_base), m.strongly_ordered};
    return std::nullopt;
}

// --- NsWorld ---------------------------------------------------------------

NsWorld::NsWorld(soc::Soc& soc, skernel::Skernel& kernel, bool strongly_ordered_mmio)
    : soc_(soc),
      kernel_(kernel),
      som_mmio_(strongly_ordered_mmio),
      map_(MappingTable::build(soc.tree(), soc.config(), soc.address_map(),
                               strongly_ordered_mmio)) {}

void NsWorld::reset() {
    ctx_ = decode::NsContext{};
    ctx_.pc = soc_.config().ns_code_va;
    status_ = NsStatus::Running;
}

AccessOutcome NsWorld::access(soc::Op op, std::uint32_t va, std::uint8_t width,
                              std::uint32_t value) {
    using Kind = AccessOutcome::Kind;
    auto tr = map_.translate(va);
    if (!tr) {
        status_ = NsStatus::Crashed;
        return AccessOutcome{Kind::Crashed, 0, soc::BusStatus::Unmapped};
    }

    // Materialize the access as a real instruction in NS RAM so the abort
    // path has something to fetch and decode.
    decode::Instr instr;
    instr.kind = op == soc::Op::Read ? decode::Kind::Load : decode::Kind::Store;
    instr.width = width == 1 ? decode::Width::Byte
                             : (width == 2 ? decode::Width::Half : decode::Width::Word);
    instr.rt = 0;
    instr.rn = 1;
    instr.add = true;
    instr.offset = std::uint16_t{0};
    ctx_.r[1] = va;
    if (op == soc::Op::Write) ctx_.r[0] = value;
    ctx_.pc = soc_.config().ns_code_va;
    soc_.ram_write(kernel_.ns_ram_va_to_pa(ctx_.pc), 4, decode::encode(instr));

    soc::BusResult res = soc_.bus_access(
        soc::BusAccess{soc::World::NonSecure, op, tr->pa, width, value, tr->strongly_ordered});
    if (res.status == soc::BusStatus::Ok) {
        if (op == soc::Op::Read) ctx_.r[0] = res.value;
        ctx_.pc += 4;
        return AccessOutcome{Kind::Ok, res.value, res.status};
    }
    if (res.status == soc::BusStatus::Unmapped) {
        status_ = NsStatus::Crashed;
        return AccessOutcome{Kind::Crashed, 0, res.status};
    }
    if (!tr->strongly_ordered) {
        // Imprecise abort: the faulting instruction cannot be identified, so
        // there is nothing to emulate and the NS kernel is gone.
        status_ = NsStatus::Crashed;
        return AccessOutcome{Kind::Crashed, 0, res.status};
    }
    ctx_.dfar = va;
    ctx_.abort_lr = ctx_.pc;
    if (kernel_.handle_data_abort(ctx_, true) == skernel::AbortOutcome::NsFatal) {
        status_ = NsStatus::Crashed;
        return AccessOutcome{Kind::Crashed, 0, res.status};
    }
    return AccessOutcome{Kind::Emulated, op == soc::Op::Read ? ctx_.r[0] : value, res.status};
}

WifiResult NsWorld::wifi_transfer(std::uint64_t bytes, bool upload, const WifiModel& model) {
    using soc::Op;
    using soc::RadioController;
    WifiResult result;
    auto it = soc_.tree().class_index().find("wifi");
    if (it == soc_.tree().class_index().end() || it->second.empty()) return result;
    const dtree::DeviceNode& node = soc_.tree().node(it->second.front());
    if (!node.reg) return result;
    const std::uint32_t base = node.reg->base;

    const soc::CostModel before = soc_.cost();
    auto finish = [&]() {
        const soc::CostModel& after = soc_.cost();
        result.loads = (after.ldr_plain + after.ldr_som + after.ldr_emu) -
                       (before.ldr_plain + before.ldr_som + before.ldr_emu);
        result.stores = (after.str_plain + after.str_som + after.str_emu) -
                        (before.str_plain + before.str_som + before.str_emu);
        result.denied = after.denied_count - before.denied_count;
        result.duration_ns = after.total_time_ns() - before.total_time_ns();
        return result;
    };
    auto step = [&](Op op, std::uint32_t addr, std::uint32_t value) {
        AccessOutcome out = access(op, addr, 4, value);
        if (out.kind == AccessOutcome::Kind::Crashed) result.crashed = true;
        return out;
    };

    const std::uint64_t chunks = (bytes + model.chunk_bytes - 1) / model.chunk_bytes;
    for (std::uint64_t c = 0; c < chunks; ++c) {
        // Handshake: power the controller and check it answers. A disabled
        // device reads as 0, so the driver retries and eventually aborts.
        bool ready = false;
        std::uint32_t tries = 0;
        while (tries < 1 + model.retries) {
            ++tries;
            step(Op::Write, base + RadioController::kCmd, 1);
            if (result.crashed) return finish();
            AccessOutcome st = step(Op::Read, base + RadioController::kStatus, 0);
            if (result.crashed) return finish();
            if (st.value & RadioController::kStatusReady) {
                ready = true;
                break;
            }
        }
        result.handshake_tries = tries;
        if (!ready) return finish();  // DEVICE_UNAVAILABLE

        step(Op::Write, base + RadioController::kRingBase, model.buffer_pa);
        for (std::uint32_t j = 0; j + 3 < model.stores_per_chunk; ++j)
            step(Op::Write, base + RadioController::kCmd, 1);
        for (std::uint32_t j = 0; j + 1 < model.loads_per_chunk; ++j)
            step(Op::Read, base + RadioController::kStatus, 0);
        std::uint64_t remaining = bytes - c * model.chunk_bytes;
        std::uint32_t chunk_len =
            static_cast<std::uint32_t>(std::min<std::uint64_t>(model.chunk_bytes, remaining));
        std::uint32_t bell = chunk_len | (upload ? RadioController::kDoorbellDirRead : 0);
        step(Op::Write, base + RadioController::kDoorbell, bell);
        if (result.crashed) return finish();
    }
    result.ok = true;
    return finish();
}

// --- Simulation / runner -----------------------------------------------------

Simulation::Simulation(const dtree::DeviceTree& tree_, soc::SocConfig cfg,
                       bool strongly_ordered_mmio)
    : tree(tree_), soc(tree_, cfg), kernel(tree_, soc), ns(soc, kernel, strongly_ordered_mmio) {}

void Simulation::boot() {
    kernel.boot();
    ns.reset();
}

Metrics collect_metrics(Simulation& sim) {
    const soc::CostModel& c = sim.soc.cost();
    Metrics m;
    m.ldr_plain = c.ldr_plain;
    m.str_plain = c.str_plain;
    m.ldr_som = c.ldr_som;
    m.str_som = c.str_som;
    m.ldr_emu = c.ldr_emu;
    m.str_emu = c.str_emu;
    m.abort_count = c.abort_count;
    m.denied_count = c.denied_count;
    m.dma_denied = c.dma_denied;
    m.dma_bytes = c.dma_bytes;
    m.dma_bandwidth = c.dma_bandwidth_bytes_per_us;
    m.mmio_time_ns = c.mmio_time_ns();
    m.dma_time_ns = c.dma_time_ns();
    m.modeled_time_ns = c.total_time_ns();
    m.final_bitvector = sim.kernel.smc_cloak_get();
    m.ns_status = sim.ns.status() == NsStatus::Running ? "running" : "crashed";
    for (const std::string& name : sim.kernel.layout().classes()) {
        bool disabled = sim.kernel.class_states().at(name) == skernel::ClassSetting::Disabled;
        m.class_states.emplace_back(name, disabled ? "disabled" : "enabled");
    }
    return m;
}

namespace {

struct NullSource : skernel::UserEventSource {
    std::optional<skernel::KeyEvent> next() override { return std::nullopt; }
};

const char* key_name(skernel::KeyName k) {
    switch (k) {
        case skernel::KeyName::Home: return "home";
        case skernel::KeyName::Back: return "back";
        case skernel::KeyName::Power: return "power";
        case skernel::KeyName::Volume: return "volume";
    }
    return "?";
}

// Pulls the key events scripted immediately after an smc_set; the first
// non-key event ends the confirmation wait.
class ScenarioKeySource : public skernel::UserEventSource {
public:
    ScenarioKeySource(const Scenario& sc, std::size_t& cursor, RunReport& report)
        : sc_(sc), cursor_(cursor), report_(report) {}

    std::optional<skernel::KeyEvent> next() override {
        if (cursor_ < sc_.events.size() &&
            sc_.events[cursor_].kind == Scenario::Event::Kind::Key) {
            skernel::KeyEvent ev = sc_.events[cursor_].key;
            TraceRecord t;
            t.kind = TraceRecord::Kind::Key;
            t.text = std::string(key_name(ev.key)) + (ev.press ? " press" : " release");
            report_.trace.push_back(std::move(t));
            ++cursor_;
            return ev;
        }
        return std::nullopt;
    }

private:
    const Scenario& sc_;
    std::size_t& cursor_;
    RunReport& report_;
};

std::string hex32(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%x", v);
    return buf;
}

}  // namespace

RunReport run_scenario(const Scenario& scenario, Simulation& sim) {
    using Event = Scenario::Event;
    RunReport report;
    std::uint32_t pending_tamper = 0;
    std::size_t dma_seen = sim.soc.audit().dmas().size();

    auto drain_dma = [&]() {
        const auto& dmas = sim.soc.audit().dmas();
        for (; dma_seen < dmas.size(); ++dma_seen) {
            const soc::AuditDma& d = dmas[dma_seen];
            TraceRecord t;
            t.kind = TraceRecord::Kind::Dma;
            const dtree::DeviceNode& n = sim.tree.node(d.master);
            t.master = n.label.empty() ? n.name : n.label;
            t.op = d.direction;
            t.addr = d.addr;
            t.len = d.len;
            t.verdict =
                d.verdict == soc::BusStatus::Ok ? TraceRecord::Verdict::Ok : TraceRecord::Verdict::Deny;
            report.trace.push_back(std::move(t));
        }
    };

    std::size_t i = 0;
    bool aborted = false;
    while (i < scenario.events.size() && !aborted) {
        const Event& ev = scenario.events[i];
        switch (ev.kind) {
            case Event::Kind::Read:
            case Event::Kind::Write: {
                ++i;
                if (sim.ns.status() == NsStatus::Crashed) break;
                soc::Op op = ev.kind == Event::Kind::Read ? soc::Op::Read : soc::Op::Write;
                std::uint64_t denied_before = sim.soc.cost().denied_count;
                AccessOutcome out = sim.ns.access(op, ev.addr, ev.width, ev.value);
                TraceRecord t;
                t.kind = TraceRecord::Kind::Access;
                t.op = op;
                t.addr = ev.addr;
                t.width = ev.width;
                t.value = out.value;
                auto tr = sim.ns.mapping_table().translate(ev.addr);
                bool som = tr && tr->strongly_ordered;
                switch (out.kind) {
                    case AccessOutcome::Kind::Ok:
                        t.cat = som ? TraceRecord::Cat::Som : TraceRecord::Cat::Plain;
                        t.verdict = TraceRecord::Verdict::Ok;
                        break;
                    case AccessOutcome::Kind::Emulated:
                        t.cat = TraceRecord::Cat::Emu;
                        t.verdict = sim.soc.cost().denied_count > denied_before
                                        ? TraceRecord::Verdict::Deny
                                        : TraceRecord::Verdict::Ok;
                        break;
                    case AccessOutcome::Kind::Crashed:
                        t.cat = som ? TraceRecord::Cat::Som : TraceRecord::Cat::Plain;
                        if (out.bus == soc::BusStatus::Unmapped)
                            t.verdict = TraceRecord::Verdict::Unmapped;
                        else
                            t.verdict = som ? TraceRecord::Verdict::Fatal : TraceRecord::Verdict::Crash;
                        break;
                }
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::SmcSet: {
                ++i;
                if (sim.ns.status() == NsStatus::Crashed) break;
                std::uint32_t issued = ev.value ^ pending_tamper;
                pending_tamper = 0;
                ScenarioKeySource source(scenario, i, report);
                std::uint32_t r0 = sim.kernel.smc(skernel::kSmcCloakSet, issued, source);
                const char* token = r0 == 0 ? "applied" : (r0 == 1 ? "denied" : "invalid");
                report.last_result = token;
                if (r0 != 2) report.last_confirmation_bv = sim.kernel.read_back_confirmation();
                TraceRecord t;
                t.kind = TraceRecord::Kind::SmcSet;
                t.bv = issued;
                t.text = token;
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::SmcGet: {
                ++i;
                if (sim.ns.status() == NsStatus::Crashed) break;
                NullSource none;
                std::uint32_t r0 = sim.kernel.smc(skernel::kSmcCloakGet, 0, none);
                TraceRecord t;
                t.kind = TraceRecord::Kind::SmcGet;
                t.bv = r0;
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::Key: {
                ++i;
                sim.kernel.inject_key(ev.key);
                TraceRecord t;
                t.kind = TraceRecord::Kind::Key;
                t.text = std::string(key_name(ev.key.key)) + (ev.key.press ? " press" : " release");
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::Wifi: {
                ++i;
                if (sim.ns.status() == NsStatus::Crashed) break;
                std::uint64_t emu_before = sim.soc.cost().ldr_emu + sim.soc.cost().str_emu;
                std::uint64_t som_before = sim.soc.cost().ldr_som + sim.soc.cost().str_som;
                WifiResult w = sim.ns.wifi_transfer(ev.bytes, ev.upload);
                const char* token = w.crashed ? "crashed" : (w.ok ? "ok" : "unavailable");
                report.last_result = token;
                TraceRecord t;
                t.kind = TraceRecord::Kind::Wifi;
                t.bytes = ev.bytes;
                t.upload = ev.upload;
                t.ldr = w.loads;
                t.str = w.stores;
                t.denied = w.denied;
                if (sim.soc.cost().ldr_emu + sim.soc.cost().str_emu > emu_before)
                    t.cat = TraceRecord::Cat::Emu;
                else if (sim.soc.cost().ldr_som + sim.soc.cost().str_som > som_before)
                    t.cat = TraceRecord::Cat::Som;
                else
                    t.cat = TraceRecord::Cat::Plain;
                t.text = token;
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::PsciReset: {
                ++i;
                if (sim.ns.status() == NsStatus::Crashed) break;
                NullSource none;
                std::uint32_t r0 = sim.kernel.smc(skernel::kSmcPsciSystemReset, 0, none);
                const char* token = r0 == 0 ? "reset" : "denied";
                report.last_result = token;
                if (r0 == 0) sim.ns.revive();
                TraceRecord t;
                t.kind = TraceRecord::Kind::Psci;
                t.text = token;
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::TamperBv: {
                ++i;
                pending_tamper ^= ev.value;
                TraceRecord t;
                t.kind = TraceRecord::Kind::Tamper;
                t.bv = ev.value;
                report.trace.push_back(std::move(t));
                break;
            }
            case Event::Kind::Expect: {
                ++i;
                ExpectResult r;
                r.line = ev.line;
                r.expected = ev.expect_value;
                switch (ev.expect_kind) {
                    case Event::ExpectKind::Get: {
                        r.kind = "get";
                        r.actual = hex32(sim.kernel.smc_cloak_get());
                        try {
                            r.pass = std::stoul(ev.expect_value, nullptr, 16) ==
                                     sim.kernel.smc_cloak_get();
                        } catch (const std::exception&) {
                            r.pass = false;
                        }
                        break;
                    }
                    case Event::ExpectKind::Result:
                        r.kind = "result";
                        r.actual = report.last_result;
                        r.pass = r.actual == ev.expect_value;
                        break;
                    case Event::ExpectKind::NsStatus:
                        r.kind = "ns_status";
                        r.actual =
                            sim.ns.status() == NsStatus::Running ? "running" : "crashed";
                        r.pass = r.actual == ev.expect_value;
                        break;
                    case Event::ExpectKind::DeniedCount:
                        r.kind = "denied_count";
                        r.actual = std::to_string(sim.soc.cost().denied_count);
                        r.pass = r.actual == ev.expect_value;
                        break;
                }
                TraceRecord t;
                t.kind = TraceRecord::Kind::Expect;
                t.text = r.kind;
                t.expected = r.expected;
                t.actual = r.actual;
                t.pass = r.pass;
                report.trace.push_back(std::move(t));
                if (!r.pass) {
                    report.all_expects_pass = false;
                    aborted = true;  // expectation failures abort the run
                }
                report.expects.push_back(std::move(r));
                break;
            }
        }
        drain_dma();
        if (sim.kernel.consume_reset_request()) {
            sim.kernel.psci_reset(skernel::ResetSource::KeySequence);
            sim.ns.revive();
            report.last_result = "reset";
            TraceRecord t;
            t.kind = TraceRecord::Kind::KeyReset;
            t.text = "reset";
            report.trace.push_back(std::move(t));
            drain_dma();
        }
    }

    report.metrics = collect_metrics(sim);
    report.audit_access_count = sim.soc.audit().accesses().size();
    return report;
}

}  // namespace cloaksim::nsim
