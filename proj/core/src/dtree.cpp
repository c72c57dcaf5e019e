#include "cloaksim/dtree.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <set>
#include <variant>

namespace cloaksim::dtree {

SyntaxError::SyntaxError(int line_, const std::string& msg)
    : TreeError("syntax error at line " + std::to_string(line_) + ": " + msg), line(line_) {}

UnresolvedReference::UnresolvedReference(const std::string& label_)
    : TreeError("unresolved reference &" + label_), label(label_) {}

DuplicateLabel::DuplicateLabel(const std::string& label_)
    : TreeError("duplicate label " + label_), label(label_) {}

NoProtection::NoProtection(const std::string& node_name_)
    : TreeError("no protection available for node " + node_name_), node_name(node_name_) {}

namespace {

bool is_name_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == ',' || c == '.' || c == '_' ||
           c == '+' || c == '-';
}

bool is_label_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

// One property value as read from the source, before reference resolution.
struct RawCell {
    bool is_ref = false;
    std::uint64_t value = 0;
    std::string label;
};

struct RawProp {
    std::string name;
    int line = 0;
    enum class Kind { Str, Cells, Ref } kind = Kind::Str;
    std::string str;
    std::vector<RawCell> cells;
};

struct RawNode {
    std::string label;
    std::string name;
    std::optional<std::uint64_t> unit_address;
    int line = 0;
    std::vector<RawProp> props;
    std::vector<std::size_t> children;  // indices into the raw arena
    std::size_t parent = SIZE_MAX;
};

class Parser {
public:
    explicit Parser(std::string_view text) : text_(text) {}

    std::vector<RawNode> parse() {
        skip_ws();
        expect('/', "expected '/' at start of file");
        RawNode root;
        root.name = "/";
        root.line = line_;
        arena_.push_back(std::move(root));
        skip_ws();
        expect('{', "expected '{' after '/'");
        parse_body(0);
        skip_ws();
        expect(';', "expected ';' after root node");
        skip_ws();
        if (!eof()) throw SyntaxError(line_, "trailing input after root node");
        return std::move(arena_);
    }

private:
    void parse_body(std::size_t node_idx) {
        for (;;) {
            skip_ws();
            if (eof()) throw SyntaxError(line_, "unexpected end of input inside node");
            if (peek() == '}') {
                ++pos_;
                return;
            }
            int item_line = line_;
            std::string ident = parse_name();
            skip_ws();
            if (!eof() && peek() == ':') {
                ++pos_;
                check_label(ident, item_line);
                skip_ws();
                std::string name = parse_name();
                parse_node(node_idx, std::move(ident), std::move(name), item_line);
            } else if (!eof() && peek() == '=') {
                ++pos_;
                parse_property(node_idx, std::move(ident), item_line);
            } else {
                parse_node(node_idx, std::string(), std::move(ident), item_line);
            }
        }
    }

    void parse_node(std::size_t parent_idx, std::string label, std::string name, int line) {
        RawNode n;
        n.label = std::move(label);
        n.name = std::move(name);
        n.line = line;
        n.parent = parent_idx;
        skip_ws();
        if (!eof() && peek() == '@') {
            ++pos_;
            n.unit_address = parse_bare_hex();
            skip_ws();
        }
        expect('{', "expected '{' in node definition");
        std::size_t idx = arena_.size();
        arena_.push_back(std::move(n));
        arena_[parent_idx].children.push_back(idx);
        parse_body(idx);
        skip_ws();
        expect(';', "expected ';' after node");
    }

    void parse_property(std::size_t node_idx, std::string name, int line) {
        RawProp p;
        p.name = std::move(name);
        p.line = line;
        skip_ws();
        if (eof()) throw SyntaxError(line_, "unexpected end of input in property value");
        char c = peek();
        if (c == '"') {
            ++pos_;
            p.kind = RawProp::Kind::Str;
            while (!eof() && peek() != '"') {
                if (peek() == '\n') throw SyntaxError(line_, "unterminated string");
                p.str.push_back(text_[pos_++]);
            }
            expect('"', "unterminated string");
        } else if (c == '<') {
            ++pos_;
            p.kind = RawProp::Kind::Cells;
            for (;;) {
                skip_ws();
                if (eof()) throw SyntaxError(line_, "unterminated cell list");
                if (peek() == '>') {
                    ++pos_;
                    break;
                }
                p.cells.push_back(parse_cell());
            }
            if (p.cells.empty()) throw SyntaxError(line, "empty cell list");
        } else if (c == '&') {
            ++pos_;
            p.kind = RawProp::Kind::Ref;
            p.str = parse_label();
        } else {
            throw SyntaxError(line_, "expected string, cell list, or reference");
        }
        skip_ws();
        expect(';', "expected ';' after property");
        arena_[node_idx].props.push_back(std::move(p));
    }

    RawCell parse_cell() {
        RawCell cell;
        if (peek() == '&') {
            ++pos_;
            cell.is_ref = true;
            cell.label = parse_label();
        } else {
            cell.value = parse_integer();
        }
        return cell;
    }

    std::uint64_t parse_integer() {
        if (eof() || !std::isdigit(static_cast<unsigned char>(peek())))
            throw SyntaxError(line_, "expected integer");
        if (peek() == '0' && pos_ + 1 < text_.size() && (text_[pos_ + 1] == 'x' || text_[pos_ + 1] == 'X')) {
            pos_ += 2;
            return parse_bare_hex();
        }
        std::uint64_t v = 0;
        while (!eof() && std::isdigit(static_cast<unsigned char>(peek()))) {
            v = v * 10 + static_cast<std::uint64_t>(peek() - '0');
            ++pos_;
        }
        return v;
    }

    std::uint64_t parse_bare_hex() {
        if (eof() || !std::isxdigit(static_cast<unsigned char>(peek())))
            throw SyntaxError(line_, "expected hex digits");
        std::uint64_t v = 0;
        while (!eof() && std::isxdigit(static_cast<unsigned char>(peek()))) {
            char c = peek();
            std::uint64_t d = std::isdigit(static_cast<unsigned char>(c))
                                  ? static_cast<std::uint64_t>(c - '0')
                                  : static_cast<std::uint64_t>(std::tolower(c) - 'a' + 10);
            v = (v << 4) | d;
            ++pos_;
        }
        return v;
    }

    std::string parse_name() {
        if (eof() || !is_name_char(peek())) throw SyntaxError(line_, "expected name");
        std::string s;
        while (!eof() && is_name_char(peek())) s.push_back(text_[pos_++]);
        return s;
    }

    std::string parse_label() {
        if (eof() || !is_label_char(peek())) throw SyntaxError(line_, "expected label");
        std::string s;
        while (!eof() && is_label_char(peek())) s.push_back(text_[pos_++]);
        return s;
    }

    void check_label(const std::string& label, int line) {
        for (char c : label)
            if (!is_label_char(c)) throw SyntaxError(line, "invalid label '" + label + "'");
    }

    void skip_ws() {
        while (!eof()) {
            char c = peek();
            if (c == '\n') {
                ++line_;
                ++pos_;
            } else if (c == ' ' || c == '\t' || c == '\r') {
                ++pos_;
            } else {
                break;
            }
        }
    }

    void expect(char c, const char* msg) {
        if (eof() || peek() != c) throw SyntaxError(line_, msg);
        ++pos_;
    }

    bool eof() const { return pos_ >= text_.size(); }
    char peek() const { return text_[pos_]; }

    std::string_view text_;
    std::size_t pos_ = 0;
    int line_ = 1;
    std::vector<RawNode> arena_;
};

std::uint32_t narrow_u32(std::uint64_t v, int line, const char* what) {
    if (v > 0xFFFFFFFFull) throw SyntaxError(line, std::string(what) + " exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

const RawCell& expect_int_cell(const RawProp& p, std::size_t i) {
    if (p.cells[i].is_ref)
        throw SyntaxError(p.line, "property '" + p.name + "' expects an integer cell");
    return p.cells[i];
}

const RawCell& expect_ref_cell(const RawProp& p, std::size_t i) {
    if (!p.cells[i].is_ref)
        throw SyntaxError(p.line, "property '" + p.name + "' expects a &reference cell");
    return p.cells[i];
}

void require_cells(const RawProp& p, std::size_t n) {
    if (p.kind != RawProp::Kind::Cells || p.cells.size() != n)
        throw SyntaxError(p.line, "property '" + p.name + "' expects a <...> list of " +
                                      std::to_string(n) + " cells");
}

}  // namespace

std::vector<NodeId> DeviceTree::preorder() const {
    std::vector<NodeId> out;
    out.reserve(nodes_.size());
    std::vector<NodeId> stack{root()};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        out.push_back(id);
        const auto& kids = nodes_[id].children;
        for (auto it = kids.rbegin(); it != kids.rend(); ++it) stack.push_back(*it);
    }
    return out;
}

std::optional<NodeId> DeviceTree::find_by_label(std::string_view label) const {
    auto it = nodes_by_label_.find(std::string(label));
    if (it == nodes_by_label_.end()) return std::nullopt;
    return it->second;
}

std::optional<NodeId> DeviceTree::find_compatible(std::string_view needle) const {
    for (NodeId id : preorder())
        if (nodes_[id].has_compatible(needle)) return id;
    return std::nullopt;
}

std::vector<NodeId> DeviceTree::find_all_compatible(std::string_view needle) const {
    std::vector<NodeId> out;
    for (NodeId id : preorder())
        if (nodes_[id].has_compatible(needle)) out.push_back(id);
    return out;
}

bool DeviceTree::is_descendant_of(NodeId node, NodeId ancestor) const {
    for (NodeId cur = node; cur != kNoNode; cur = nodes_[cur].parent)
        if (cur == ancestor) return true;
    return false;
}

DeviceTree parse_dts(std::string_view text) {
    std::vector<RawNode> raw = Parser(text).parse();

    DeviceTree tree;
    tree.nodes_.resize(raw.size());
    tree.source_digest_ = keyed_digest(std::string_view{}, text);

    // Raw arena order is already document (pre-order) order.
    for (std::size_t i = 0; i < raw.size(); ++i) {
        DeviceNode& n = tree.nodes_[i];
        n.name = raw[i].name;
        n.label = raw[i].label;
        n.unit_address = raw[i].unit_address;
        n.parent = raw[i].parent == SIZE_MAX ? kNoNode : static_cast<NodeId>(raw[i].parent);
        for (std::size_t c : raw[i].children) n.children.push_back(static_cast<NodeId>(c));
        if (!n.label.empty()) {
            auto [it, inserted] = tree.nodes_by_label_.emplace(n.label, static_cast<NodeId>(i));
            (void)it;
            if (!inserted) throw DuplicateLabel(n.label);
        }
    }

    auto resolve = [&](const RawCell& cell) -> NodeId {
        auto it = tree.nodes_by_label_.find(cell.label);
        if (it == tree.nodes_by_label_.end()) throw UnresolvedReference(cell.label);
        return it->second;
    };

    for (std::size_t i = 0; i < raw.size(); ++i) {
        DeviceNode& n = tree.nodes_[i];
        std::optional<std::uint32_t> interrupt_line;
        std::optional<std::string> interrupt_parent_label;
        int interrupts_line = 0;
        std::set<std::string> seen;
        for (const RawProp& p : raw[i].props) {
            bool repeatable = p.name == "protect" || p.name == "gpios";
            if (!repeatable && !seen.insert(p.name).second)
                throw SyntaxError(p.line, "duplicate property '" + p.name + "'");
            if (p.name == "reg") {
                require_cells(p, 2);
                n.reg = RegRange{narrow_u32(expect_int_cell(p, 0).value, p.line, "reg base"),
                                 narrow_u32(expect_int_cell(p, 1).value, p.line, "reg size")};
                if (n.reg->size == 0) throw SyntaxError(p.line, "reg size must be non-zero");
            } else if (p.name == "compatible") {
                if (p.kind != RawProp::Kind::Str)
                    throw SyntaxError(p.line, "compatible expects a string");
                n.compatible = p.str;
            } else if (p.name == "class") {
                if (p.kind != RawProp::Kind::Str) throw SyntaxError(p.line, "class expects a string");
                if (p.str.empty()) throw SyntaxError(p.line, "class name must be non-empty");
                n.class_name = p.str;
            } else if (p.name == "protect") {
                require_cells(p, 3);
                ProtectRef ref;
                ref.controller = resolve(expect_ref_cell(p, 0));
                ref.register_index = narrow_u32(expect_int_cell(p, 1).value, p.line, "register index");
                ref.field_index = narrow_u32(expect_int_cell(p, 2).value, p.line, "field index");
                n.protect.push_back(ref);
            } else if (p.name == "interrupt-parent") {
                if (p.kind != RawProp::Kind::Ref)
                    throw SyntaxError(p.line, "interrupt-parent expects a &reference");
                interrupt_parent_label = p.str;
                interrupts_line = p.line;
            } else if (p.name == "interrupts") {
                require_cells(p, 1);
                interrupt_line = narrow_u32(expect_int_cell(p, 0).value, p.line, "interrupt");
                interrupts_line = p.line;
            } else if (p.name == "gpios") {
                require_cells(p, 2);
                GpioDep dep;
                dep.controller = resolve(expect_ref_cell(p, 0));
                dep.pin = narrow_u32(expect_int_cell(p, 1).value, p.line, "pin");
                n.gpio_deps.push_back(dep);
            } else if (p.name == "i2c-addr") {
                require_cells(p, 1);
                auto addr = narrow_u32(expect_int_cell(p, 0).value, p.line, "i2c address");
                if (addr > 127) throw SyntaxError(p.line, "i2c address out of range [0,127]");
                n.bus_address = addr;
            } else if (p.name == "csl-geometry") {
                require_cells(p, 2);
                CslGeometry g{narrow_u32(expect_int_cell(p, 0).value, p.line, "register count"),
                              narrow_u32(expect_int_cell(p, 1).value, p.line, "field count")};
                if (g.num_registers == 0 || g.fields_per_register == 0)
                    throw SyntaxError(p.line, "csl-geometry values must be non-zero");
                n.csl_geometry = g;
            } else {
                throw SyntaxError(p.line, "unrecognized property '" + p.name + "'");
            }
        }
        if (interrupt_parent_label.has_value() != interrupt_line.has_value())
            throw SyntaxError(interrupts_line,
                              "interrupt-parent and interrupts must appear together");
        if (interrupt_parent_label) {
            RawCell c;
            c.is_ref = true;
            c.label = *interrupt_parent_label;
            n.interrupt_parent = InterruptRef{resolve(c), *interrupt_line};
        }
    }

    // Semantic invariants.
    for (std::size_t i = 0; i < tree.nodes_.size(); ++i) {
        const DeviceNode& n = tree.nodes_[i];
        int line = raw[i].line;
        if (n.unit_address && n.reg && *n.unit_address != n.reg->base)
            throw SyntaxError(line, "unit address does not match reg base in node '" + n.name + "'");
        bool parent_is_bus =
            n.parent != kNoNode && tree.nodes_[n.parent].has_compatible("i2c");
        if (n.bus_address && !parent_is_bus)
            throw SyntaxError(line, "i2c-addr on node '" + n.name + "' whose parent is not an i2c bus");
        if (!n.bus_address && parent_is_bus)
            throw SyntaxError(line, "node '" + n.name + "' on an i2c bus requires i2c-addr");
        for (const ProtectRef& ref : n.protect) {
            const DeviceNode& ctrl = tree.nodes_[ref.controller];
            if (!ctrl.csl_geometry)
                throw SyntaxError(line, "protect controller '" + ctrl.name +
                                            "' does not declare csl-geometry");
            if (ref.register_index >= ctrl.csl_geometry->num_registers ||
                ref.field_index >= ctrl.csl_geometry->fields_per_register)
                throw SyntaxError(line, "protect index outside controller geometry in node '" +
                                            n.name + "'");
        }
        // Sibling MMIO ranges on the same bus must not overlap.
        for (std::size_t a = 0; a < n.children.size(); ++a) {
            const auto& ca = tree.nodes_[n.children[a]];
            if (!ca.reg) continue;
            for (std::size_t b = a + 1; b < n.children.size(); ++b) {
                const auto& cb = tree.nodes_[n.children[b]];
                if (!cb.reg) continue;
                bool disjoint = ca.reg->base + ca.reg->size <= cb.reg->base ||
                                cb.reg->base + cb.reg->size <= ca.reg->base;
                if (!disjoint)
                    throw SyntaxError(raw[n.children[b]].line, "sibling reg ranges overlap ('" +
                                                                   ca.name + "' and '" + cb.name +
                                                                   "')");
            }
        }
    }

    for (NodeId id : tree.preorder()) {
        const DeviceNode& n = tree.nodes_[id];
        if (n.class_name) tree.class_index_[*n.class_name].push_back(id);
    }
    return tree;
}

namespace {

void append_node(const DeviceTree& tree, NodeId id, int depth, std::string& out) {
    const DeviceNode& n = tree.node(id);
    std::string indent(static_cast<std::size_t>(depth), '\t');
    char buf[128];
    out += indent;
    if (!n.label.empty()) {
        out += n.label;
        out += ": ";
    }
    out += n.name;
    if (n.unit_address) {
        std::snprintf(buf, sizeof buf, "@%llx", static_cast<unsigned long long>(*n.unit_address));
        out += buf;
    }
    out += " {\n";
    std::string inner(static_cast<std::size_t>(depth + 1), '\t');
    if (n.compatible) out += inner + "compatible = \"" + *n.compatible + "\";\n";
    if (n.reg) {
        std::snprintf(buf, sizeof buf, "reg = <0x%x 0x%x>;\n", n.reg->base, n.reg->size);
        out += inner + buf;
    }
    if (n.class_name) out += inner + "class = \"" + *n.class_name + "\";\n";
    for (const ProtectRef& ref : n.protect) {
        std::snprintf(buf, sizeof buf, "protect = <&%s %u %u>;\n",
                      tree.node(ref.controller).label.c_str(), ref.register_index, ref.field_index);
        out += inner + buf;
    }
    if (n.interrupt_parent) {
        out += inner + "interrupt-parent = &" + tree.node(n.interrupt_parent->parent).label + ";\n";
        std::snprintf(buf, sizeof buf, "interrupts = <%u>;\n", n.interrupt_parent->line);
        out += inner + buf;
    }
    for (const GpioDep& dep : n.gpio_deps) {
        std::snprintf(buf, sizeof buf, "gpios = <&%s %u>;\n", tree.node(dep.controller).label.c_str(),
                      dep.pin);
        out += inner + buf;
    }
    if (n.bus_address) {
        std::snprintf(buf, sizeof buf, "i2c-addr = <0x%x>;\n", *n.bus_address);
        out += inner + buf;
    }
    if (n.csl_geometry) {
        std::snprintf(buf, sizeof buf, "csl-geometry = <%u %u>;\n", n.csl_geometry->num_registers,
                      n.csl_geometry->fields_per_register);
        out += inner + buf;
    }
    for (NodeId child : n.children) append_node(tree, child, depth + 1, out);
    out += indent + "};\n";
}

}  // namespace

std::string to_dts(const DeviceTree& tree) {
    std::string out;
    append_node(tree, tree.root(), 0, out);
    return out;
}

std::vector<ProtectRef> nearest_protect_refs(const DeviceTree& tree, NodeId node) {
    for (NodeId cur = node; cur != kNoNode; cur = tree.node(cur).parent)
        if (!tree.node(cur).protect.empty()) return tree.node(cur).protect;
    return {};
}

std::vector<ProtectRef> path_protect_refs(const DeviceTree& tree, NodeId node) {
    std::vector<ProtectRef> out;
    for (NodeId cur = node; cur != kNoNode; cur = tree.node(cur).parent)
        for (const ProtectRef& ref : tree.node(cur).protect) out.push_back(ref);
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

ProtectionPlan protect_closure(const DeviceTree& tree, NodeId node) {
    ProtectionPlan plan;
    plan.target = node;

    std::set<ProtectRef> refs;
    for (const ProtectRef& r : nearest_protect_refs(tree, node)) refs.insert(r);

    // Walk the target subtree collecting dependencies and fine-grain needs.
    std::set<GpioDep> pins;
    std::set<ProtectionPlan::I2cBlock> blocks;
    std::vector<NodeId> stack{node};
    while (!stack.empty()) {
        NodeId id = stack.back();
        stack.pop_back();
        const DeviceNode& n = tree.node(id);
        for (NodeId c : n.children) stack.push_back(c);
        for (const GpioDep& dep : n.gpio_deps) {
            pins.insert(dep);
            for (const ProtectRef& r : nearest_protect_refs(tree, dep.controller)) refs.insert(r);
        }
        if (n.interrupt_parent) {
            const DeviceNode& parent = tree.node(n.interrupt_parent->parent);
            for (const ProtectRef& r : nearest_protect_refs(tree, n.interrupt_parent->parent))
                refs.insert(r);
            // A chained GPIO interrupt controller exposes the device through an
            // individual pin; the root interrupt controller does not.
            if (parent.has_compatible("gpio"))
                pins.insert(GpioDep{n.interrupt_parent->parent, n.interrupt_parent->line});
        }
        if (n.bus_address && n.parent != kNoNode)
            blocks.insert(ProtectionPlan::I2cBlock{n.parent, *n.bus_address});
    }

    if (refs.empty()) throw NoProtection(tree.node(node).name);

    plan.hw_refs.assign(refs.begin(), refs.end());
    plan.pin_masks.assign(pins.begin(), pins.end());
    plan.i2c_blocks.assign(blocks.begin(), blocks.end());

    // Everything else the flipped CSL fields will catch must stay reachable
    // through emulation. The hardware denies by bus path, so test against
    // the full path union, not just the nearest carrier.
    for (NodeId id : tree.preorder()) {
        if (id == node || tree.is_descendant_of(id, node)) continue;
        const DeviceNode& n = tree.node(id);
        if (!n.reg && !n.bus_address) continue;
        std::vector<ProtectRef> path = path_protect_refs(tree, id);
        bool shared = std::any_of(path.begin(), path.end(),
                                  [&](const ProtectRef& r) { return refs.count(r) != 0; });
        if (shared) plan.passthrough_siblings.push_back(id);
    }
    return plan;
}

std::vector<std::string> classes_of(const DeviceTree& tree) {
    std::vector<std::string> out;
    out.reserve(tree.class_index().size());
    for (const auto& [name, nodes] : tree.class_index()) out.push_back(name);
    return out;
}

void check_enforceable(const DeviceTree& tree) {
    for (const auto& [name, nodes] : tree.class_index())
        for (NodeId id : nodes) (void)protect_closure(tree, id);  // throws NoProtection
}

}  // namespace cloaksim::dtree
