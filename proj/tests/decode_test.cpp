#include "cloaksim/decode.hpp"

#include <map>
#include <random>

#include "decode_oracle.hpp"
#include "doctest.h"

using namespace cloaksim;
using decode::Instr;
using decode::Kind;
using decode::NsContext;
using decode::RegOffset;
using decode::Width;

namespace {

struct FakeBus : decode::BusPort {
    std::map<std::uint32_t, std::uint32_t> mem;
    int reads = 0, writes = 0;

    std::uint32_t secure_read(std::uint32_t addr, Width width) override {
        ++reads;
        std::uint32_t v = mem.count(addr & ~3u) ? mem[addr & ~3u] : 0;
        std::uint32_t shift = 8 * (addr & 3u);
        if (width == Width::Byte) return (v >> shift) & 0xFF;
        if (width == Width::Half) return (v >> shift) & 0xFFFF;
        return v;
    }
    void secure_write(std::uint32_t addr, Width width, std::uint32_t value) override {
        ++writes;
        std::uint32_t& slot = mem[addr & ~3u];
        std::uint32_t shift = 8 * (addr & 3u);
        if (width == Width::Byte)
            slot = (slot & ~(0xFFu << shift)) | ((value & 0xFF) << shift);
        else if (width == Width::Half)
            slot = (slot & ~(0xFFFFu << shift)) | ((value & 0xFFFF) << shift);
        else
            slot = value;
    }
};

bool same(const std::optional<Instr>& a, const std::optional<Instr>& b) {
    if (a.has_value() != b.has_value()) return false;
    if (!a) return true;
    return *a == *b;
}

}  // namespace

TEST_CASE("decode recognizes the canonical load and store") {
    // LDR R0, [R1]
    auto ldr = decode::decode(0xE5910000);
    REQUIRE(ldr.has_value());
    CHECK(ldr->kind == Kind::Load);
    CHECK(ldr->width == Width::Word);
    CHECK(ldr->rt == 0);
    CHECK(ldr->rn == 1);
    CHECK(ldr->add);
    CHECK(std::get<std::uint16_t>(ldr->offset) == 0);

    // STR R0, [R1]
    auto str = decode::decode(0xE5810000);
    REQUIRE(str.has_value());
    CHECK(str->kind == Kind::Store);
    CHECK(str->width == Width::Word);
    CHECK(str->rt == 0);
    CHECK(str->rn == 1);
}

TEST_CASE("decode rejects everything outside the supported subset") {
    CHECK_FALSE(decode::decode(0xE0810002).has_value());  // ADD r0, r1, r2
    CHECK_FALSE(decode::decode(0x05910000).has_value());  // LDREQ: conditional
    CHECK_FALSE(decode::decode(0xE5B10000).has_value());  // LDR with writeback (W=1)
    CHECK_FALSE(decode::decode(0xE4910000).has_value());  // post-indexed (P=0)
    CHECK_FALSE(decode::decode(0xE8910003).has_value());  // LDM
    CHECK_FALSE(decode::decode(0xE1C100D0).has_value());  // LDRD
    CHECK_FALSE(decode::decode(0xE1D100D0).has_value());  // LDRSB
    CHECK_FALSE(decode::decode(0xE19100B2).has_value());  // LDRH register form
}

TEST_CASE("rn=15 decodes but is rejected at address computation") {
    auto instr = decode::decode(0xE59F0004);  // LDR r0, [pc, #4]
    REQUIRE(instr.has_value());
    NsContext ctx;
    CHECK_FALSE(decode::effective_address(*instr, ctx).has_value());
}

TEST_CASE("rt=15 is undecodable") {
    CHECK_FALSE(decode::decode(0xE591F000).has_value());  // LDR pc, [r1]
}

TEST_CASE("effective address arithmetic") {
    NsContext ctx;
    ctx.r[1] = 0x0209C000;
    Instr imm8{Kind::Load, Width::Word, 0, 1, true, std::uint16_t{8}};
    CHECK(decode::effective_address(imm8, ctx) == 0x0209C008);

    Instr imm0{Kind::Load, Width::Word, 0, 1, true, std::uint16_t{0}};
    CHECK(decode::effective_address(imm0, ctx) == ctx.r[1]);

    ctx.r[1] = 0x100;
    ctx.r[2] = 3;
    Instr reg{Kind::Load, Width::Word, 0, 1, true, RegOffset{2, 2}};
    CHECK(decode::effective_address(reg, ctx) == 0x10C);

    Instr sub{Kind::Load, Width::Word, 0, 1, false, std::uint16_t{0x10}};
    CHECK(decode::effective_address(sub, ctx) == 0xF0);
}

TEST_CASE("emulate: allowed load lands in rt and advances pc") {
    FakeBus bus;
    bus.mem[0x02200004] = 0xA5;
    NsContext ctx;
    ctx.pc = 0x1000;
    Instr instr{Kind::Load, Width::Word, 3, 1, true, std::uint16_t{0}};
    decode::Verdict allow;
    decode::emulate(instr, ctx, 0x02200004, allow, bus);
    CHECK(ctx.r[3] == 0xA5);
    CHECK(ctx.pc == 0x1004);
    CHECK(bus.reads == 1);
}

TEST_CASE("emulate: denied load substitutes and touches nothing") {
    FakeBus bus;
    bus.mem[0x02200004] = 0xA5;
    NsContext ctx;
    ctx.r[3] = 0xFFFFFFFF;
    decode::Verdict deny;
    deny.allow = false;
    deny.substitute = 0;
    Instr instr{Kind::Load, Width::Word, 3, 1, true, std::uint16_t{0}};
    decode::emulate(instr, ctx, 0x02200004, deny, bus);
    CHECK(ctx.r[3] == 0);
    CHECK(bus.reads == 0);
    CHECK(ctx.pc == 4);
}

TEST_CASE("emulate: denied store leaves the device untouched") {
    FakeBus bus;
    bus.mem[0x02200000] = 0x1111;
    NsContext ctx;
    ctx.r[0] = 0xDEAD;
    decode::Verdict deny;
    deny.allow = false;
    Instr instr{Kind::Store, Width::Word, 0, 1, true, std::uint16_t{0}};
    decode::emulate(instr, ctx, 0x02200000, deny, bus);
    CHECK(bus.mem[0x02200000] == 0x1111);
    CHECK(bus.writes == 0);
}

TEST_CASE("emulate: byte and half loads zero-extend") {
    FakeBus bus;
    bus.mem[0x02200000] = 0xAABBCCDD;
    NsContext ctx;
    decode::Verdict allow;
    Instr lb{Kind::Load, Width::Byte, 0, 1, true, std::uint16_t{0}};
    decode::emulate(lb, ctx, 0x02200001, allow, bus);
    CHECK(ctx.r[0] == 0xCC);
    Instr lh{Kind::Load, Width::Half, 0, 1, true, std::uint16_t{0}};
    decode::emulate(lh, ctx, 0x02200002, allow, bus);
    CHECK(ctx.r[0] == 0xAABB);
}

TEST_CASE("emulate keeps the single-register effect invariant") {
    std::mt19937 rng(7);
    FakeBus bus;
    for (int i = 0; i < 2000; ++i) {
        Instr instr;
        instr.kind = rng() % 2 ? Kind::Load : Kind::Store;
        instr.width = std::array{Width::Byte, Width::Half, Width::Word}[rng() % 3];
        instr.rt = static_cast<std::uint8_t>(rng() % 15);
        instr.rn = static_cast<std::uint8_t>(rng() % 15);
        instr.add = true;
        instr.offset = std::uint16_t{0};
        NsContext ctx;
        for (auto& r : ctx.r) r = rng();
        std::uint32_t addr = (rng() % 0x1000) & ~3u;
        NsContext before = ctx;
        decode::Verdict verdict;
        verdict.allow = rng() % 2 == 0;
        decode::emulate(instr, ctx, addr, verdict, bus);
        CHECK(ctx.pc == before.pc + 4);
        for (int r = 0; r < 15; ++r) {
            if (instr.kind == Kind::Load && r == instr.rt) continue;
            CHECK(ctx.r[r] == before.r[r]);
        }
    }
}

TEST_CASE("encode/decode round-trips the semantic fields") {
    std::mt19937 rng(11);
    for (int i = 0; i < 20000; ++i) {
        std::uint32_t word = rng();
        auto d = decode::decode(word);
        if (!d) continue;
        auto d2 = decode::decode(decode::encode(*d));
        REQUIRE(d2.has_value());
        CHECK(*d2 == *d);
    }
}

TEST_CASE("decoder agrees with the reference oracle on the supported space") {
    std::uint64_t cases = 0;
    auto compare = [&](std::uint32_t word) {
        ++cases;
        auto got = decode::decode(word);
        auto want = oracle::reference_decode(word);
        REQUIRE_MESSAGE(same(got, want), "word=" << word);
    };

    // Exhaustive over the supported field space.
    for (std::uint32_t load = 0; load <= 1; ++load) {
        for (std::uint32_t add = 0; add <= 1; ++add) {
            for (std::uint32_t rt = 0; rt < 15; ++rt) {
                for (std::uint32_t rn = 0; rn < 15; ++rn) {
                    Instr instr;
                    instr.kind = load ? Kind::Load : Kind::Store;
                    instr.rt = static_cast<std::uint8_t>(rt);
                    instr.rn = static_cast<std::uint8_t>(rn);
                    instr.add = add != 0;
                    for (Width w : {Width::Word, Width::Byte}) {
                        instr.width = w;
                        for (std::uint16_t imm : {0, 1, 4, 0xFFF}) {
                            instr.offset = imm;
                            compare(decode::encode(instr));
                        }
                        for (std::uint8_t shift : {0, 1, 2, 31}) {
                            for (std::uint8_t rm : {0, 7, 14}) {
                                instr.offset = RegOffset{rm, shift};
                                compare(decode::encode(instr));
                            }
                        }
                    }
                    instr.width = Width::Half;
                    for (std::uint16_t imm : {0, 1, 4, 0xFF}) {  // imm8 for halfword
                        instr.offset = imm;
                        compare(decode::encode(instr));
                    }
                }
            }
        }
    }
    CHECK(cases >= 10000);

    // Uniform random words.
    std::mt19937 rng(1);
    for (int i = 0; i < 100000; ++i) compare(rng());
}
