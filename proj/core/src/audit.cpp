// Offline checks over the bus audit log: replaying every verdict against the
// pure admission rules, and scanning for NS-successful accesses that the
// effective policy at that instant forbade.
#include <algorithm>
#include <cstdio>

#include "cloaksim/soc.hpp"

namespace cloaksim::soc::audit {

namespace {

dtree::CslGeometry find_geometry(const dtree::DeviceTree& tree) {
    for (dtree::NodeId id : tree.preorder())
        if (tree.node(id).csl_geometry) return *tree.node(id).csl_geometry;
    return {};
}

std::string hex(std::uint32_t v) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", v);
    return buf;
}

// Walks the three audit streams in gen order, applying firewall
// reconfigurations and invoking the visitor on every access and DMA record.
template <typename AccessFn, typename DmaFn, typename ClassFn>
void walk(const dtree::DeviceTree& tree, const SocConfig& cfg, const AuditLog& log,
          FirewallState& fw, AccessFn&& on_access, DmaFn&& on_dma, ClassFn&& on_class) {
    (void)tree;
    (void)cfg;
    std::size_t ia = 0, id = 0, ic = 0;
    const auto& accesses = log.accesses();
    const auto& dmas = log.dmas();
    const auto& configs = log.configs();
    auto next_gen = [&]() -> std::uint32_t {
        std::uint32_t g = UINT32_MAX;
        if (ia < accesses.size()) g = std::min(g, accesses[ia].gen);
        if (id < dmas.size()) g = std::min(g, dmas[id].gen);
        if (ic < configs.size()) g = std::min(g, configs[ic].gen);
        return g;
    };
    while (ia < accesses.size() || id < dmas.size() || ic < configs.size()) {
        std::uint32_t g = next_gen();
        if (ic < configs.size() && configs[ic].gen == g) {
            const AuditConfig& c = configs[ic++];
            switch (c.kind) {
                case AuditConfig::Kind::CsuSet:
                    fw.csu_set(c.a, c.b, static_cast<CslLevel>(c.c));
                    break;
                case AuditConfig::Kind::TzascSet:
                    fw.tzasc_set_region(c.a, c.b, static_cast<TzPerm>(c.c));
                    break;
                case AuditConfig::Kind::Reset:
                    fw.reset();
                    on_class(c);  // a reboot clears every class mark
                    break;
                case AuditConfig::Kind::ClassMark: on_class(c); break;
                case AuditConfig::Kind::SecureBulk: break;
            }
        } else if (ia < accesses.size() && accesses[ia].gen == g) {
            on_access(accesses[ia++]);
        } else if (id < dmas.size() && dmas[id].gen == g) {
            on_dma(dmas[id++]);
        } else {
            break;  // defensive: gap in generations
        }
    }
}

}  // namespace

std::vector<Violation> replay_verdicts(const dtree::DeviceTree& tree, const SocConfig& cfg,
                                       const AuditLog& log) {
    std::vector<Violation> out;
    AddressMap map = build_address_map(tree, cfg);
    FirewallState fw(find_geometry(tree), map.ram, map.secure_ram);
    walk(
        tree, cfg, log, fw,
        [&](const AuditAccess& a) {
            BusAccess acc{a.world, a.op, a.addr, a.width, a.value, a.strongly_ordered};
            BusStatus expect = admission(map, fw, acc);
            if (expect != a.verdict)
                out.push_back(Violation{a.gen, "verdict mismatch at " + hex(a.addr)});
        },
        [&](const AuditDma& d) {
            BusStatus expect = dma_admission(map, fw, d.direction, d.addr, d.len);
            if (expect != d.verdict)
                out.push_back(Violation{d.gen, "dma verdict mismatch at " + hex(d.addr)});
        },
        [](const AuditConfig&) {});
    return out;
}

std::vector<Violation> isolation_violations(const dtree::DeviceTree& tree, const SocConfig& cfg,
                                            const AuditLog& log) {
    std::vector<Violation> out;
    AddressMap map = build_address_map(tree, cfg);
    FirewallState fw(find_geometry(tree), map.ram, map.secure_ram);

    // Regions behind each class: the device's own MMIO, or for a peripheral
    // bus slave the controller's MMIO.
    std::map<std::string, std::vector<RegRange>> class_regions;
    for (const auto& [name, nodes] : tree.class_index()) {
        for (dtree::NodeId id : nodes) {
            const dtree::DeviceNode& n = tree.node(id);
            if (n.reg)
                class_regions[name].push_back(*n.reg);
            else if (n.bus_address && n.parent != dtree::kNoNode && tree.node(n.parent).reg)
                class_regions[name].push_back(*tree.node(n.parent).reg);
        }
    }

    std::map<std::string, bool> disabled;
    auto in_disabled_region = [&](std::uint32_t addr) -> const std::string* {
        for (const auto& [name, on] : disabled) {
            if (!on) continue;
            for (const RegRange& r : class_regions[name])
                if (r.contains(addr)) return &name;
        }
        return nullptr;
    };

    walk(
        tree, cfg, log, fw,
        [&](const AuditAccess& a) {
            if (a.world != World::NonSecure || a.verdict != BusStatus::Ok) return;
            if (map.ram.contains(a.addr)) {
                TzPerm perm = fw.ram_perm(a.addr);
                bool allowed =
                    perm == TzPerm::NsRw || (perm == TzPerm::NsReadOnly && a.op == Op::Read);
                if (!allowed)
                    out.push_back(Violation{a.gen, "ns access succeeded in protected ram at " +
                                                       hex(a.addr)});
                return;
            }
            if (const AddressMap::Entry* dev = map.find(a.addr)) {
                if (dev->secure_only) {
                    out.push_back(
                        Violation{a.gen, "ns access succeeded on secure-only device at " +
                                             hex(a.addr)});
                    return;
                }
                for (auto [reg, field] : dev->gates)
                    if (fw.csl(reg, field) == CslLevel::SecureOnly) {
                        out.push_back(Violation{
                            a.gen, "ns access succeeded behind secure CSL gate at " + hex(a.addr)});
                        return;
                    }
            }
            if (const std::string* cls = in_disabled_region(a.addr))
                out.push_back(Violation{a.gen, "ns access succeeded on device of disabled class '" +
                                                   *cls + "' at " + hex(a.addr)});
        },
        [&](const AuditDma& d) {
            if (d.verdict != BusStatus::Ok || d.len == 0) return;
            std::uint64_t end = static_cast<std::uint64_t>(d.addr) + d.len;
            for (std::uint64_t page = d.addr / kTzGranule; page <= (end - 1) / kTzGranule; ++page) {
                std::uint32_t pa = static_cast<std::uint32_t>(page * kTzGranule);
                TzPerm perm = fw.ram_perm(pa);
                bool allowed =
                    perm == TzPerm::NsRw || (perm == TzPerm::NsReadOnly && d.direction == Op::Read);
                if (!allowed) {
                    out.push_back(Violation{d.gen, "dma succeeded in protected ram at " + hex(pa)});
                    return;
                }
            }
        },
        [&](const AuditConfig& c) {
            if (c.kind == AuditConfig::Kind::Reset)
                disabled.clear();
            else
                disabled[c.name] = c.c != 0;
        });
    return out;
}

}  // namespace cloaksim::soc::audit
