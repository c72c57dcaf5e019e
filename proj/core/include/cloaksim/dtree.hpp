// Textual device-tree subset: parser, signature check, protection closures.
#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cloaksim::dtree {

using NodeId = std::uint32_t;
inline constexpr NodeId kNoNode = 0xFFFFFFFFu;

struct TreeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SyntaxError : TreeError {
    SyntaxError(int line_, const std::string& msg);
    int line;
};

struct UnresolvedReference : TreeError {
    explicit UnresolvedReference(const std::string& label_);
    std::string label;
};

struct DuplicateLabel : TreeError {
    explicit DuplicateLabel(const std::string& label_);
    std::string label;
};

struct NoProtection : TreeError {
    explicit NoProtection(const std::string& node_name);
    std::string node_name;
};

struct RegRange {
    std::uint32_t base = 0;
    std::uint32_t size = 0;
    bool contains(std::uint32_t addr) const { return addr >= base && addr - base < size; }
    bool operator==(const RegRange&) const = default;
};

/// One hardware protection bit: (controller, CSL register, sub-field).
struct ProtectRef {
    NodeId controller = kNoNode;
    std::uint32_t register_index = 0;
    std::uint32_t field_index = 0;
    auto operator<=>(const ProtectRef&) const = default;
};

struct InterruptRef {
    NodeId parent = kNoNode;
    std::uint32_t line = 0;
    bool operator==(const InterruptRef&) const = default;
};

struct GpioDep {
    NodeId controller = kNoNode;
    std::uint32_t pin = 0;
    auto operator<=>(const GpioDep&) const = default;
};

struct CslGeometry {
    std::uint32_t num_registers = 0;
    std::uint32_t fields_per_register = 0;
    bool operator==(const CslGeometry&) const = default;
};

struct DeviceNode {
    std::string name;   // without the unit address
    std::string label;  // empty when unlabelled
    std::optional<std::uint64_t> unit_address;
    std::optional<RegRange> reg;
    std::optional<std::string> compatible;
    std::optional<std::string> class_name;
    std::vector<ProtectRef> protect;
    std::optional<InterruptRef> interrupt_parent;
    std::vector<GpioDep> gpio_deps;
    std::optional<std::uint32_t> bus_address;  // 7-bit peripheral-bus slave address
    std::optional<CslGeometry> csl_geometry;   // CSU nodes only
    NodeId parent = kNoNode;
    std::vector<NodeId> children;

    bool has_compatible(std::string_view needle) const {
        return compatible && compatible->find(needle) != std::string::npos;
    }
};

class DeviceTree {
public:
    NodeId root() const { return 0; }
    const DeviceNode& node(NodeId id) const { return nodes_.at(id); }
    std::size_t node_count() const { return nodes_.size(); }

    const std::map<std::string, NodeId>& nodes_by_label() const { return nodes_by_label_; }
    const std::map<std::string, std::vector<NodeId>>& class_index() const { return class_index_; }
    const std::array<std::uint8_t, 32>& source_digest() const { return source_digest_; }

    /// Document-order (pre-order) node ids, root first.
    std::vector<NodeId> preorder() const;

    std::optional<NodeId> find_by_label(std::string_view label) const;
    /// First node whose compatible string contains `needle`, document order.
    std::optional<NodeId> find_compatible(std::string_view needle) const;
    /// All nodes whose compatible string contains `needle`, document order.
    std::vector<NodeId> find_all_compatible(std::string_view needle) const;

    bool is_descendant_of(NodeId node, NodeId ancestor) const;

private:
    friend DeviceTree parse_dts(std::string_view);
    std::vector<DeviceNode> nodes_;
    std::map<std::string, NodeId> nodes_by_label_;
    std::map<std::string, std::vector<NodeId>> class_index_;
    std::array<std::uint8_t, 32> source_digest_{};
};

DeviceTree parse_dts(std::string_view text);

/// Canonical source form; parse -> to_dts -> parse is a fixed point.
std::string to_dts(const DeviceTree& tree);

/// Everything the s-kernel must do to isolate one device: the hardware
/// bits to flip plus the fine-grain policy work those bits cannot express.
struct ProtectionPlan {
    NodeId target = kNoNode;
    std::vector<ProtectRef> hw_refs;  // sorted, unique
    std::vector<GpioDep> pin_masks;
    struct I2cBlock {
        NodeId bus = kNoNode;
        std::uint32_t address = 0;
        auto operator<=>(const I2cBlock&) const = default;
    };
    std::vector<I2cBlock> i2c_blocks;
    // Devices gated by the same CSL fields that must stay reachable through
    // emulation, document order.
    std::vector<NodeId> passthrough_siblings;
};

ProtectionPlan protect_closure(const DeviceTree& tree, NodeId node);

/// Nearest protect-carrying node on the path node..root (self counts);
/// returns its refs, or empty when no node on the path carries one.
std::vector<ProtectRef> nearest_protect_refs(const DeviceTree& tree, NodeId node);

/// Union of protect refs over the whole path node..root. This is what the
/// bus hardware enforces: any SECURE_ONLY gate on the path denies access.
std::vector<ProtectRef> path_protect_refs(const DeviceTree& tree, NodeId node);

/// Lexicographically ordered, deduplicated class names. This order defines
/// the class-bit positions of the cloak bitvector.
std::vector<std::string> classes_of(const DeviceTree& tree);

/// Throws NoProtection if any class member has an empty protection plan;
/// a class the secure kernel cannot enforce must not be offered.
void check_enforceable(const DeviceTree& tree);

// --- signature -------------------------------------------------------------

using Digest = std::array<std::uint8_t, 32>;

/// HMAC-SHA256 over the exact file bytes.
Digest keyed_digest(std::span<const std::uint8_t> key, std::span<const std::uint8_t> data);
Digest keyed_digest(std::string_view key, std::string_view data);

/// True iff `signature` is the keyed digest of `text` under any trusted key.
bool verify_signature(std::string_view text, const Digest& signature,
                      const std::vector<std::string>& trusted_keys);

std::string digest_to_hex(const Digest& d);
std::optional<Digest> digest_from_hex(std::string_view hex);

}  // namespace cloaksim::dtree
