#include "cloaksim/decode.hpp"

namespace cloaksim::decode {

namespace {

constexpr std::uint32_t kCondAl = 0xEu;

constexpr std::uint32_t bit(std::uint32_t w, unsigned n) { return (w >> n) & 1u; }
constexpr std::uint32_t bits(std::uint32_t w, unsigned hi, unsigned lo) {
    return (w >> lo) & ((1u << (hi - lo + 1)) - 1u);
}

std::uint32_t width_mask(Width w) {
    switch (w) {
        case Width::Byte: return 0xFFu;
        case Width::Half: return 0xFFFFu;
        case Width::Word: return 0xFFFFFFFFu;
    }
    return 0xFFFFFFFFu;
}

}  // namespace

std::optional<Instr> decode(std::uint32_t word) {
    if (bits(word, 31, 28) != kCondAl) return std::nullopt;

    const std::uint32_t op1 = bits(word, 27, 25);
    Instr instr;
    instr.rn = static_cast<std::uint8_t>(bits(word, 19, 16));
    instr.rt = static_cast<std::uint8_t>(bits(word, 15, 12));
    if (instr.rt == 15) return std::nullopt;  // loads to pc are branches, stores leak pc
    instr.add = bit(word, 23) != 0;

    if (op1 == 0b010 || op1 == 0b011) {
        // Single data transfer. Offset addressing only: P=1, W=0.
        if (bit(word, 24) != 1 || bit(word, 21) != 0) return std::nullopt;
        instr.kind = bit(word, 20) ? Kind::Load : Kind::Store;
        instr.width = bit(word, 22) ? Width::Byte : Width::Word;
        if (op1 == 0b010) {
            instr.offset = static_cast<std::uint16_t>(bits(word, 11, 0));
        } else {
            if (bit(word, 4) != 0) return std::nullopt;       // media class
            if (bits(word, 6, 5) != 0) return std::nullopt;   // LSL shifts only
            RegOffset ro;
            ro.rm = static_cast<std::uint8_t>(bits(word, 3, 0));
            if (ro.rm == 15) return std::nullopt;
            ro.shift = static_cast<std::uint8_t>(bits(word, 11, 7));
            instr.offset = ro;
        }
        return instr;
    }

    if (op1 == 0b000) {
        // Extra load/store group; accept only unsigned halfword immediate form.
        if (bit(word, 7) != 1 || bit(word, 4) != 1) return std::nullopt;
        if (bits(word, 6, 5) != 0b01) return std::nullopt;  // SH=10/11: LDRD/STRD/signed
        if (bit(word, 22) != 1) return std::nullopt;        // register-offset half rejected
        if (bit(word, 24) != 1 || bit(word, 21) != 0) return std::nullopt;
        instr.kind = bit(word, 20) ? Kind::Load : Kind::Store;
        instr.width = Width::Half;
        instr.offset = static_cast<std::uint16_t>((bits(word, 11, 8) << 4) | bits(word, 3, 0));
        return instr;
    }

    return std::nullopt;
}

std::uint32_t encode(const Instr& instr) {
    std::uint32_t w = kCondAl << 28;
    const std::uint32_t load_bit = instr.kind == Kind::Load ? 1u << 20 : 0;
    const std::uint32_t u_bit = instr.add ? 1u << 23 : 0;
    w |= (static_cast<std::uint32_t>(instr.rn) << 16) | (static_cast<std::uint32_t>(instr.rt) << 12);

    if (instr.width == Width::Half) {
        const auto imm = std::get<std::uint16_t>(instr.offset);
        w |= 0u << 25;                          // extra load/store group
        w |= (1u << 24) | (1u << 22) | u_bit;   // P=1, immediate form
        w |= load_bit;
        w |= ((imm & 0xF0u) << 4) | (imm & 0x0Fu);
        w |= (1u << 7) | (0b01u << 5) | (1u << 4);
        return w;
    }

    const std::uint32_t b_bit = instr.width == Width::Byte ? 1u << 22 : 0;
    w |= (1u << 24) | u_bit | b_bit | load_bit;
    if (std::holds_alternative<std::uint16_t>(instr.offset)) {
        w |= 0b010u << 25;
        w |= std::get<std::uint16_t>(instr.offset) & 0xFFFu;
    } else {
        const auto& ro = std::get<RegOffset>(instr.offset);
        w |= 0b011u << 25;
        w |= (static_cast<std::uint32_t>(ro.shift) << 7) | ro.rm;
    }
    return w;
}

std::optional<std::uint32_t> effective_address(const Instr& instr, const NsContext& ctx) {
    if (instr.rn == 15) return std::nullopt;
    const std::uint32_t base = ctx.r[instr.rn];
    std::uint32_t off;
    if (std::holds_alternative<std::uint16_t>(instr.offset)) {
        off = std::get<std::uint16_t>(instr.offset);
    } else {
        const auto& ro = std::get<RegOffset>(instr.offset);
        off = ctx.r[ro.rm] << ro.shift;
    }
    return instr.add ? base + off : base - off;
}

void emulate(const Instr& instr, NsContext& ctx, std::uint32_t phys_addr, const Verdict& verdict,
             BusPort& bus) {
    if (instr.kind == Kind::Load) {
        std::uint32_t value;
        if (verdict.allow) {
            value = bus.secure_read(phys_addr, instr.width);
            if (verdict.transform) value = verdict.transform(phys_addr, value);
        } else {
            value = verdict.substitute;
        }
        ctx.r[instr.rt] = value & width_mask(instr.width);
    } else if (verdict.allow) {
        std::uint32_t value = ctx.r[instr.rt] & width_mask(instr.width);
        if (verdict.transform) value = verdict.transform(phys_addr, value);
        bus.secure_write(phys_addr, instr.width, value & width_mask(instr.width));
    }
    ctx.pc += 4;
}

}  // namespace cloaksim::decode
