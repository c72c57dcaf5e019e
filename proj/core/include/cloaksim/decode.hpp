// A32 load/store decoding and emulation against a non-secure register context.
#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <variant>

namespace cloaksim::decode {

enum class Kind : std::uint8_t { Load, Store };
enum class Width : std::uint8_t { Byte = 1, Half = 2, Word = 4 };

enum class NsMode : std::uint8_t { NsSvc, NsUsr };

struct NsContext {
    std::array<std::uint32_t, 15> r{};  // r0..r14
    std::uint32_t pc = 0;
    NsMode cpsr_mode = NsMode::NsSvc;
    std::uint32_t dfar = 0;      // virtual fault address
    std::uint32_t abort_lr = 0;  // virtual address of the faulting instruction

    bool operator==(const NsContext&) const = default;
};

struct RegOffset {
    std::uint8_t rm = 0;
    std::uint8_t shift = 0;  // LSL amount, 0..31
    bool operator==(const RegOffset&) const = default;
};

/// Decoded load/store. Offset is either an immediate magnitude or a
/// LSL-shifted register; `add` carries the U bit separately.
struct Instr {
    Kind kind = Kind::Load;
    Width width = Width::Word;
    std::uint8_t rt = 0;
    std::uint8_t rn = 0;
    bool add = true;
    std::variant<std::uint16_t, RegOffset> offset = std::uint16_t{0};

    bool operator==(const Instr&) const = default;
};

/// Decodes the supported subset: LDR/STR and LDRB/STRB in immediate- and
/// register-offset form, LDRH/STRH in immediate form; condition AL only;
/// offset addressing only (P=1, W=0). Anything else — writeback forms,
/// LDM/STM, LDRD/STRD, signed loads, conditional encodings, rt=15 —
/// is undecodable and the caller must treat it as a fatal NS fault.
std::optional<Instr> decode(std::uint32_t word);

/// Reassembles a decoded instruction. decode(encode(i)) == i for every
/// instruction this module can produce.
std::uint32_t encode(const Instr& instr);

/// Base-register value plus/minus the offset, no writeback.
/// Returns nullopt for rn=15: PC-based MMIO addressing is rejected.
std::optional<std::uint32_t> effective_address(const Instr& instr, const NsContext& ctx);

/// The policy decision for one access, already resolved by the caller.
struct Verdict {
    bool allow = true;
    std::uint32_t substitute = 0;  // loaded into rt when a read is denied
    // Applied to the value moved on an allowed access: (addr, value) -> value.
    std::function<std::uint32_t(std::uint32_t, std::uint32_t)> transform;
};

/// Secure-world bus the emulation path goes through.
struct BusPort {
    virtual ~BusPort() = default;
    virtual std::uint32_t secure_read(std::uint32_t addr, Width width) = 0;
    virtual void secure_write(std::uint32_t addr, Width width, std::uint32_t value) = 0;
};

/// Performs the access on behalf of the non-secure world. Allowed loads read
/// through `bus` as the secure world and store the (transformed) result in
/// rt; denied loads store the substitute. Allowed stores write the
/// (transformed) rt value; denied stores have no bus effect. pc advances 4.
void emulate(const Instr& instr, NsContext& ctx, std::uint32_t phys_addr, const Verdict& verdict,
             BusPort& bus);

}  // namespace cloaksim::decode
