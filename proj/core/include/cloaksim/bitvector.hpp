// Cloak bitvector: bits 0-15 class bits (1 = disable) in lexicographic class
// order, bits 16-23 group bits, bits 24-27 mode bits, bits 28-31 reserved.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace cloaksim::bitvector {

inline constexpr std::uint32_t kClassBits = 16;
inline constexpr std::uint32_t kGroupShift = 16;
inline constexpr std::uint32_t kGroupBits = 8;
inline constexpr std::uint32_t kModeShift = 24;
inline constexpr std::uint32_t kModeBits = 4;
inline constexpr std::uint32_t kReservedMask = 0xF0000000u;
inline constexpr std::uint32_t kClassMask = 0x0000FFFFu;

struct NamedSet {
    std::string name;
    std::vector<std::string> members;  // class names
};

/// Group and mode membership tables. A group bit is set iff the group has at
/// least one member present in the tree and all present members are
/// disabled; a mode bit is set iff the class bits equal exactly the mode's
/// present-member set.
const std::vector<NamedSet>& groups();
const std::vector<NamedSet>& modes();

class Layout {
public:
    Layout() = default;
    /// `classes` in lexicographic order, as produced by dtree::classes_of.
    /// Throws std::invalid_argument when more classes exist than class bits.
    explicit Layout(std::vector<std::string> classes);

    const std::vector<std::string>& classes() const { return classes_; }
    std::optional<std::uint32_t> class_bit(const std::string& name) const;

    /// Class-bit mask of a group's or mode's members present in the tree.
    std::uint32_t member_mask(const NamedSet& set) const;

    /// Recomputes group and mode bits from the class-bit field.
    std::uint32_t with_derived_bits(std::uint32_t class_bits) const;

    /// Encodes the disabled-class set into a full, consistent bitvector.
    std::uint32_t encode(const std::set<std::string>& disabled) const;

    /// Class names whose bit is set.
    std::vector<std::string> decode_classes(std::uint32_t bv) const;

    /// Valid iff reserved bits are clear, no class bit beyond the declared
    /// classes is set, at most one mode bit is set, a set mode bit matches
    /// the class bits exactly, and every group bit is consistent.
    bool valid(std::uint32_t bv) const;

private:
    std::vector<std::string> classes_;
    std::map<std::string, std::uint32_t> bit_by_name_;
};

}  // namespace cloaksim::bitvector
