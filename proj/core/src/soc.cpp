#include "cloaksim/soc.hpp"

#include <algorithm>
#include <cstring>

#include "cloaksim/devices.hpp"

namespace cloaksim::soc {

// --- FirewallState ---------------------------------------------------------

FirewallState::FirewallState(dtree::CslGeometry geometry, RegRange ram, RegRange secure_ram)
    : geometry_(geometry), ram_(ram), secure_(secure_ram) {
    reset();
}

void FirewallState::reset() {
    csl_.assign(geometry_.num_registers,
                std::vector<CslLevel>(geometry_.fields_per_register, CslLevel::NsAllowed));
    regions_.clear();
    if (ram_.size != 0) {
        regions_.push_back(TzRegion{ram_.base, ram_.size, TzPerm::NsRw});
        if (secure_.size != 0) tzasc_set_region(secure_.base, secure_.size, TzPerm::NsNone);
    }
}

void FirewallState::csu_set(std::uint32_t reg, std::uint32_t field, CslLevel level) {
    if (reg >= geometry_.num_registers || field >= geometry_.fields_per_register)
        throw OutOfRange("csl index (" + std::to_string(reg) + "," + std::to_string(field) +
                         ") outside geometry");
    csl_[reg][field] = level;
}

CslLevel FirewallState::csl(std::uint32_t reg, std::uint32_t field) const {
    if (reg >= geometry_.num_registers || field >= geometry_.fields_per_register)
        throw OutOfRange("csl index out of range");
    return csl_[reg][field];
}

void FirewallState::tzasc_set_region(std::uint32_t base, std::uint32_t size, TzPerm perm) {
    if (size == 0) throw BadRegion("zero-size TZASC region");
    if (base % kTzGranule != 0 || size % kTzGranule != 0)
        throw Misaligned("TZASC region not 4 KiB aligned");
    if (base < ram_.base || base + size > ram_.base + ram_.size)
        throw BadRegion("TZASC region outside RAM");

    // Later entries override earlier ones, then the table is flattened:
    // split overlapped regions, insert, and merge equal-perm neighbours.
    std::vector<TzRegion> next;
    for (const TzRegion& r : regions_) {
        std::uint32_t r_end = r.base + r.size;
        std::uint32_t n_end = base + size;
        if (r_end <= base || n_end <= r.base) {
            next.push_back(r);
            continue;
        }
        if (r.base < base) next.push_back(TzRegion{r.base, base - r.base, r.perm});
        if (r_end > n_end) next.push_back(TzRegion{n_end, r_end - n_end, r.perm});
    }
    next.push_back(TzRegion{base, size, perm});
    std::sort(next.begin(), next.end(),
              [](const TzRegion& a, const TzRegion& b) { return a.base < b.base; });
    regions_.clear();
    for (const TzRegion& r : next) {
        if (!regions_.empty() && regions_.back().perm == r.perm &&
            regions_.back().base + regions_.back().size == r.base) {
            regions_.back().size += r.size;
        } else {
            regions_.push_back(r);
        }
    }
}

TzPerm FirewallState::ram_perm(std::uint32_t addr) const {
    for (const TzRegion& r : regions_)
        if (addr >= r.base && addr - r.base < r.size) return r.perm;
    return TzPerm::NsNone;
}

// --- Gic ---------------------------------------------------------------

Gic::Gic(std::uint32_t lines) : lines_(lines) {}

void Gic::check(std::uint32_t irq) const {
    if (irq >= lines_.size()) throw UnknownIrq("irq " + std::to_string(irq));
}

void Gic::configure(std::uint32_t irq, bool enabled, Group group) {
    check(irq);
    lines_[irq].enabled = enabled;
    lines_[irq].group = group;
}

void Gic::set_alt_ns_line(std::uint32_t irq, std::uint32_t alt) {
    check(irq);
    check(alt);
    lines_[irq].alt_ns_line = alt;
}

void Gic::raise(std::uint32_t irq) {
    check(irq);
    lines_[irq].pending = true;
}

void Gic::redeliver_ns(std::uint32_t irq) {
    check(irq);
    if (!lines_[irq].alt_ns_line) throw UnknownIrq("irq has no alternate NS line");
    std::uint32_t alt = *lines_[irq].alt_ns_line;
    lines_[alt].pending = true;
}

std::optional<std::uint32_t> Gic::pop_secure() {
    for (std::uint32_t i = 0; i < lines_.size(); ++i) {
        if (lines_[i].pending && lines_[i].enabled && lines_[i].group == Group::FiqS) {
            lines_[i].pending = false;
            return i;
        }
    }
    return std::nullopt;
}

std::vector<std::uint32_t> Gic::ns_pending() const {
    std::vector<std::uint32_t> out;
    for (std::uint32_t i = 0; i < lines_.size(); ++i)
        if (lines_[i].pending && lines_[i].group == Group::IrqNs) out.push_back(i);
    return out;
}

void Gic::ns_ack(std::uint32_t irq) {
    check(irq);
    if (lines_[irq].group == Group::IrqNs) lines_[irq].pending = false;
}

const Gic::Line& Gic::line(std::uint32_t irq) const {
    check(irq);
    return lines_[irq];
}

void Gic::reset() {
    std::fill(lines_.begin(), lines_.end(), Line{});
}

// --- SparseRam ---------------------------------------------------------

const std::uint8_t* SparseRam::page(std::uint32_t addr) const {
    auto it = pages_.find(addr / kTzGranule);
    return it == pages_.end() ? nullptr : it->second->data();
}

std::uint8_t* SparseRam::page_mut(std::uint32_t addr) {
    auto& slot = pages_[addr / kTzGranule];
    if (!slot) {
        slot = std::make_unique<std::array<std::uint8_t, kTzGranule>>();
        slot->fill(0);
    }
    return slot->data();
}

std::uint32_t SparseRam::read(std::uint32_t addr, std::uint8_t width) const {
    std::uint32_t v = 0;
    for (std::uint8_t i = 0; i < width; ++i) {
        const std::uint8_t* p = page(addr + i);
        std::uint8_t byte = p ? p[(addr + i) % kTzGranule] : 0;
        v |= static_cast<std::uint32_t>(byte) << (8 * i);
    }
    return v;
}

void SparseRam::write(std::uint32_t addr, std::uint8_t width, std::uint32_t value) {
    for (std::uint8_t i = 0; i < width; ++i)
        page_mut(addr + i)[(addr + i) % kTzGranule] = static_cast<std::uint8_t>(value >> (8 * i));
}

void SparseRam::read_bulk(std::uint32_t addr, std::span<std::uint8_t> out) const {
    for (std::size_t i = 0; i < out.size(); ++i) {
        const std::uint8_t* p = page(addr + static_cast<std::uint32_t>(i));
        out[i] = p ? p[(addr + i) % kTzGranule] : 0;
    }
}

void SparseRam::write_bulk(std::uint32_t addr, std::span<const std::uint8_t> data) {
    for (std::size_t i = 0; i < data.size(); ++i)
        page_mut(addr + static_cast<std::uint32_t>(i))[(addr + i) % kTzGranule] = data[i];
}

// --- AddressMap -------------------------------------------------------

const AddressMap::Entry* AddressMap::find(std::uint32_t addr) const {
    for (const Entry& e : devices)
        if (e.mmio.contains(addr)) return &e;
    return nullptr;
}

AddressMap build_address_map(const dtree::DeviceTree& tree, const SocConfig& cfg) {
    AddressMap map;
    for (dtree::NodeId id : tree.preorder()) {
        const dtree::DeviceNode& n = tree.node(id);
        if (n.name == "memory" && n.reg) {
            if (map.ram.size != 0) throw BuildError("multiple memory nodes");
            map.ram = *n.reg;
            continue;
        }
        if (!n.reg) continue;
        AddressMap::Entry e;
        e.mmio = *n.reg;
        e.node = id;
        e.secure_only = n.has_compatible("sim,csu") || n.has_compatible("sim,gic");
        for (const dtree::ProtectRef& ref : dtree::path_protect_refs(tree, id))
            e.gates.emplace_back(ref.register_index, ref.field_index);
        map.devices.push_back(std::move(e));
    }
    if (map.ram.size == 0) throw BuildError("tree declares no memory node");
    if (cfg.secure_ram_size >= map.ram.size) throw BuildError("secure region exceeds RAM");
    map.secure_ram = RegRange{map.ram.base + map.ram.size - cfg.secure_ram_size,
                              cfg.secure_ram_size};
    std::sort(map.devices.begin(), map.devices.end(),
              [](const auto& a, const auto& b) { return a.mmio.base < b.mmio.base; });
    for (std::size_t i = 0; i + 1 < map.devices.size(); ++i) {
        const auto& a = map.devices[i];
        const auto& b = map.devices[i + 1];
        if (a.mmio.base + a.mmio.size > b.mmio.base)
            throw BuildError("device MMIO ranges overlap");
        if (map.ram.base < a.mmio.base + a.mmio.size && a.mmio.base < map.ram.base + map.ram.size)
            throw BuildError("device MMIO overlaps RAM");
    }
    return map;
}

BusStatus admission(const AddressMap& map, const FirewallState& fw, const BusAccess& acc) {
    if (map.ram.contains(acc.addr)) {
        if (acc.world == World::Secure) return BusStatus::Ok;
        switch (fw.ram_perm(acc.addr)) {
            case TzPerm::NsRw: return BusStatus::Ok;
            case TzPerm::NsReadOnly:
                return acc.op == Op::Read ? BusStatus::Ok : BusStatus::BusError;
            case TzPerm::NsNone: return BusStatus::BusError;
        }
    }
    const AddressMap::Entry* dev = map.find(acc.addr);
    if (!dev) return BusStatus::Unmapped;
    if (acc.world == World::Secure) return BusStatus::Ok;
    if (dev->secure_only) return BusStatus::BusError;
    for (auto [reg, field] : dev->gates)
        if (fw.csl(reg, field) == CslLevel::SecureOnly) return BusStatus::BusError;
    return BusStatus::Ok;
}

BusStatus dma_admission(const AddressMap& map, const FirewallState& fw, Op direction,
                        std::uint32_t addr, std::uint32_t len) {
    // DMA masters issue non-secure accesses against RAM; device-to-device
    // transfers are not modeled. All-or-nothing over the whole range.
    if (len == 0) return BusStatus::Ok;
    std::uint64_t end = static_cast<std::uint64_t>(addr) + len;
    if (!map.ram.contains(addr) || end > static_cast<std::uint64_t>(map.ram.base) + map.ram.size)
        return BusStatus::BusError;
    for (std::uint64_t page = addr / kTzGranule; page <= (end - 1) / kTzGranule; ++page) {
        TzPerm perm = fw.ram_perm(static_cast<std::uint32_t>(page * kTzGranule));
        bool ok = perm == TzPerm::NsRw || (perm == TzPerm::NsReadOnly && direction == Op::Read);
        if (!ok) return BusStatus::BusError;
    }
    return BusStatus::Ok;
}

// --- Soc ---------------------------------------------------------------

namespace {

std::unique_ptr<Device> make_device(const dtree::DeviceTree& tree, dtree::NodeId id,
                                    const SocConfig& cfg) {
    const dtree::DeviceNode& n = tree.node(id);
    std::string name = n.label.empty() ? n.name : n.label;
    if (n.has_compatible("sim,gpio"))
        return std::make_unique<GpioController>(id, name, *n.reg,
                                                n.interrupt_parent ? n.interrupt_parent->line : 0);
    if (n.has_compatible("sim,i2c")) {
        auto dev = std::make_unique<I2cController>(id, name, *n.reg);
        for (dtree::NodeId child : n.children)
            if (tree.node(child).bus_address) dev->add_slave(*tree.node(child).bus_address);
        return dev;
    }
    if (n.has_compatible("sim,ipu"))
        return std::make_unique<IpuDevice>(id, name, *n.reg, cfg.ipu_scanout_bytes);
    if (n.has_compatible("sim,radio")) return std::make_unique<RadioController>(id, name, *n.reg);
    if (n.has_compatible("sim,uart")) return std::make_unique<UartDevice>(id, name, *n.reg);
    if (n.has_compatible("sim,csu") || n.has_compatible("sim,gic"))
        return std::make_unique<SecureStub>(id, name, *n.reg);
    throw BuildError("node '" + n.name + "' has a reg range but no known compatible");
}

dtree::CslGeometry csu_geometry(const dtree::DeviceTree& tree) {
    dtree::CslGeometry geom{};
    bool found = false;
    for (dtree::NodeId id : tree.preorder()) {
        if (tree.node(id).csl_geometry) {
            if (found) throw BuildError("multiple CSL controllers");
            geom = *tree.node(id).csl_geometry;
            found = true;
        }
    }
    return geom;
}

}  // namespace

Soc::Soc(const dtree::DeviceTree& tree, SocConfig cfg)
    : tree_(tree),
      cfg_(cfg),
      map_(build_address_map(tree, cfg)),
      fw_(csu_geometry(tree), map_.ram, map_.secure_ram),
      gic_(cfg.gic_lines) {
    cost_.dma_bandwidth_bytes_per_us = cfg.dma_bandwidth_bytes_per_us;
    for (const AddressMap::Entry& e : map_.devices) {
        auto dev = make_device(tree, e.node, cfg_);
        dev->hooks_ = this;
        devices_by_node_[e.node] = dev.get();
        devices_.push_back(std::move(dev));
    }
}

Device* Soc::device_at(std::uint32_t addr) {
    const AddressMap::Entry* e = map_.find(addr);
    return e ? devices_by_node_.at(e->node) : nullptr;
}

Device* Soc::device_for_node(NodeId node) {
    auto it = devices_by_node_.find(node);
    return it == devices_by_node_.end() ? nullptr : it->second;
}

const Device* Soc::device_for_node(NodeId node) const {
    auto it = devices_by_node_.find(node);
    return it == devices_by_node_.end() ? nullptr : it->second;
}

std::uint32_t Soc::device_read(Device& dev, std::uint32_t addr, std::uint8_t width) {
    std::uint32_t offset = addr - dev.mmio().base;
    std::uint32_t word = dev.read_reg(offset & ~3u);
    std::uint32_t shift = 8 * (offset & 3u);
    if (width == 1) return (word >> shift) & 0xFFu;
    if (width == 2) return (word >> shift) & 0xFFFFu;
    return word;
}

void Soc::device_write(Device& dev, std::uint32_t addr, std::uint8_t width, std::uint32_t value) {
    std::uint32_t offset = addr - dev.mmio().base;
    if (width == 4) {
        dev.write_reg(offset, value);
        return;
    }
    // Sub-word writes merge into the 32-bit register.
    std::uint32_t word = dev.read_reg(offset & ~3u);
    std::uint32_t shift = 8 * (offset & 3u);
    std::uint32_t mask = (width == 1 ? 0xFFu : 0xFFFFu) << shift;
    dev.write_reg(offset & ~3u, (word & ~mask) | ((value << shift) & mask));
}

BusResult Soc::bus_access(const BusAccess& acc) {
    if (acc.width != 1 && acc.width != 2 && acc.width != 4)
        throw SocError("unsupported access width");
    if (acc.addr % acc.width != 0) throw Misaligned("bus access address not aligned to width");

    BusStatus status = admission(map_, fw_, acc);
    BusResult result{status, 0};
    if (status == BusStatus::Ok) {
        if (map_.ram.contains(acc.addr)) {
            if (acc.op == Op::Read)
                result.value = ram_.read(acc.addr, acc.width);
            else
                ram_.write(acc.addr, acc.width, acc.value);
        } else {
            Device& dev = *device_at(acc.addr);
            if (acc.op == Op::Read)
                result.value = device_read(dev, acc.addr, acc.width);
            else
                device_write(dev, acc.addr, acc.width, acc.value);
        }
        if (acc.world == World::NonSecure) cost_.count_direct(acc.op, acc.strongly_ordered);
    } else if (status == BusStatus::BusError && acc.world == World::NonSecure) {
        ++cost_.abort_count;
    }

    audit_.record(AuditAccess{audit_.next_gen(), acc.addr,
                              acc.op == Op::Read ? result.value : acc.value, acc.world, acc.op,
                              status, acc.width, acc.strongly_ordered});
    return result;
}

BusResult Soc::dma_transfer(NodeId master, Op direction, std::uint32_t addr, std::uint32_t len) {
    BusStatus status = dma_admission(map_, fw_, direction, addr, len);
    if (status == BusStatus::Ok) {
        cost_.dma_bytes += len;
        // Data movement is modeled by cost only; RAM contents are left to the
        // producer/consumer models.
    } else {
        ++cost_.dma_denied;
    }
    audit_.record(AuditDma{audit_.next_gen(), master, direction, addr, len, status});
    return BusResult{status, 0};
}

void Soc::csu_set(std::uint32_t reg, std::uint32_t field, CslLevel level) {
    fw_.csu_set(reg, field, level);
    AuditConfig rec;
    rec.gen = audit_.next_gen();
    rec.kind = AuditConfig::Kind::CsuSet;
    rec.a = reg;
    rec.b = field;
    rec.c = static_cast<std::uint32_t>(level);
    audit_.record(std::move(rec));
}

void Soc::tzasc_set_region(std::uint32_t base, std::uint32_t size, TzPerm perm) {
    fw_.tzasc_set_region(base, size, perm);
    AuditConfig rec;
    rec.gen = audit_.next_gen();
    rec.kind = AuditConfig::Kind::TzascSet;
    rec.a = base;
    rec.b = size;
    rec.c = static_cast<std::uint32_t>(perm);
    audit_.record(std::move(rec));
}

void Soc::mark_class(const std::string& name, bool disabled) {
    AuditConfig rec;
    rec.gen = audit_.next_gen();
    rec.kind = AuditConfig::Kind::ClassMark;
    rec.c = disabled ? 1u : 0u;
    rec.name = name;
    audit_.record(std::move(rec));
}

void Soc::reset() {
    fw_.reset();
    gic_.reset();
    for (auto& dev : devices_) dev->reset();
    ram_.clear();
    AuditConfig rec;
    rec.gen = audit_.next_gen();
    rec.kind = AuditConfig::Kind::Reset;
    audit_.record(std::move(rec));
}

void Soc::ram_write_bulk(std::uint32_t addr, std::span<const std::uint8_t> data) {
    ram_.write_bulk(addr, data);
    AuditConfig rec;
    rec.gen = audit_.next_gen();
    rec.kind = AuditConfig::Kind::SecureBulk;
    rec.a = addr;
    rec.b = static_cast<std::uint32_t>(data.size());
    audit_.record(std::move(rec));
}

std::vector<std::uint8_t> Soc::ram_read_bulk(std::uint32_t addr, std::uint32_t len) const {
    std::vector<std::uint8_t> out(len);
    ram_.read_bulk(addr, out);
    return out;
}

std::uint32_t Soc::secure_read(std::uint32_t addr, decode::Width width) {
    return bus_access(BusAccess{World::Secure, Op::Read, addr,
                                static_cast<std::uint8_t>(width), 0, false})
        .value;
}

void Soc::secure_write(std::uint32_t addr, decode::Width width, std::uint32_t value) {
    bus_access(
        BusAccess{World::Secure, Op::Write, addr, static_cast<std::uint8_t>(width), value, false});
}

void Soc::raise_irq(std::uint32_t line) { gic_.raise(line); }

BusStatus Soc::dma_from_device(NodeId master, Op direction, std::uint32_t addr, std::uint32_t len) {
    return dma_transfer(master, direction, addr, len).status;
}

void Soc::gpio_input(NodeId ctrl, std::uint32_t pin, bool level) {
    auto* gpio = device_as<GpioController>(ctrl);
    if (!gpio) throw SocError("gpio_input on a non-GPIO node");
    gpio->input_event(pin, level);
}

std::uint32_t Soc::alt_ns_line(NodeId gpio_ctrl) const {
    auto it = devices_by_node_.find(gpio_ctrl);
    if (it == devices_by_node_.end()) throw SocError("unknown gpio controller");
    auto* gpio = dynamic_cast<GpioController*>(it->second);
    if (!gpio) throw SocError("alt_ns_line on a non-GPIO node");
    return gpio->irq_line() + cfg_.alt_line_offset;
}

}  // namespace cloaksim::soc
