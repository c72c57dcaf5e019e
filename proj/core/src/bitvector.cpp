#include "cloaksim/bitvector.hpp"

#include <stdexcept>

namespace cloaksim::bitvector {

const std::vector<NamedSet>& groups() {
    static const std::vector<NamedSet> g{
        {"networking", {"bluetooth", "cellular", "wifi"}},
    };
    return g;
}

const std::vector<NamedSet>& modes() {
    static const std::vector<NamedSet> m{
        {"airplane", {"bluetooth", "cellular", "wifi"}},
        {"movie", {"camera", "microphone"}},
        {"stealth", {"bluetooth", "cellular", "gps", "wifi"}},
    };
    return m;
}

Layout::Layout(std::vector<std::string> classes) : classes_(std::move(classes)) {
    if (classes_.size() > kClassBits)
        throw std::invalid_argument("more device classes than class bits");
    for (std::uint32_t i = 0; i < classes_.size(); ++i) bit_by_name_[classes_[i]] = i;
}

std::optional<std::uint32_t> Layout::class_bit(const std::string& name) const {
    auto it = bit_by_name_.find(name);
    if (it == bit_by_name_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t Layout::member_mask(const NamedSet& set) const {
    std::uint32_t mask = 0;
    for (const std::string& member : set.members)
        if (auto bit = class_bit(member)) mask |= 1u << *bit;
    return mask;
}

std::uint32_t Layout::with_derived_bits(std::uint32_t class_bits) const {
    std::uint32_t bv = class_bits & kClassMask;
    const auto& gs = groups();
    for (std::uint32_t i = 0; i < gs.size() && i < kGroupBits; ++i) {
        std::uint32_t mask = member_mask(gs[i]);
        if (mask != 0 && (bv & mask) == mask) bv |= 1u << (kGroupShift + i);
    }
    const auto& ms = modes();
    for (std::uint32_t i = 0; i < ms.size() && i < kModeBits; ++i) {
        std::uint32_t mask = member_mask(ms[i]);
        if (mask != 0 && (bv & kClassMask) == mask) bv |= 1u << (kModeShift + i);
    }
    return bv;
}

std::uint32_t Layout::encode(const std::set<std::string>& disabled) const {
    std::uint32_t class_bits = 0;
    for (const std::string& name : disabled) {
        auto bit = class_bit(name);
        if (!bit) throw std::invalid_argument("unknown class '" + name + "'");
        class_bits |= 1u << *bit;
    }
    return with_derived_bits(class_bits);
}

std::vector<std::string> Layout::decode_classes(std::uint32_t bv) const {
    std::vector<std::string> out;
    for (std::uint32_t i = 0; i < classes_.size(); ++i)
        if (bv & (1u << i)) out.push_back(classes_[i]);
    return out;
}

bool Layout::valid(std::uint32_t bv) const {
    if (bv & kReservedMask) return false;
    std::uint32_t known_classes =
        classes_.empty() ? 0 : (kClassMask >> (kClassBits - classes_.size()));
    if ((bv & kClassMask) & ~known_classes) return false;

    std::uint32_t mode_field = (bv >> kModeShift) & ((1u << kModeBits) - 1);
    if ((mode_field & (mode_field - 1)) != 0) return false;  // at most one mode bit
    std::uint32_t unknown_modes = ~((1u << std::min<std::uint32_t>(
                                         kModeBits, static_cast<std::uint32_t>(modes().size()))) -
                                    1);
    if (mode_field & unknown_modes) return false;

    // Group and mode bits must agree with the class bits.
    return with_derived_bits(bv & kClassMask) == bv;
}

}  // namespace cloaksim::bitvector
