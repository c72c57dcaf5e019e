// Scenario files: UTF-8, one event per line, '#' comments.
#include <cstdio>
#include <sstream>

#include "cloaksim/nsim.hpp"

namespace cloaksim::nsim {

ScenarioParseError::ScenarioParseError(int line_, const std::string& msg)
    : std::runtime_error("scenario line " + std::to_string(line_) + ": " + msg), line(line_) {}

namespace {

std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
        if (tok[0] == '#') break;
        out.push_back(tok);
    }
    return out;
}

std::uint64_t parse_u64(const std::string& tok, int line, int base) {
    try {
        std::size_t pos = 0;
        std::uint64_t v = std::stoull(tok, &pos, base);
        if (pos != tok.size()) throw std::invalid_argument(tok);
        return v;
    } catch (const std::exception&) {
        throw ScenarioParseError(line, "bad number '" + tok + "'");
    }
}

std::uint32_t parse_hex32(const std::string& tok, int line) {
    std::uint64_t v = parse_u64(tok, line, 16);
    if (v > 0xFFFFFFFFull) throw ScenarioParseError(line, "value exceeds 32 bits");
    return static_cast<std::uint32_t>(v);
}

skernel::KeyName parse_key(const std::string& tok, int line) {
    if (tok == "home") return skernel::KeyName::Home;
    if (tok == "back") return skernel::KeyName::Back;
    if (tok == "power") return skernel::KeyName::Power;
    if (tok == "volume") return skernel::KeyName::Volume;
    throw ScenarioParseError(line, "unknown key '" + tok + "'");
}

}  // namespace

Scenario parse_scenario(std::string_view text) {
    Scenario sc;
    std::istringstream stream{std::string(text)};
    std::string line;
    int lineno = 0;
    while (std::getline(stream, line)) {
        ++lineno;
        std::vector<std::string> tok = split(line);
        if (tok.empty()) continue;
        Scenario::Event ev;
        ev.line = lineno;
        const std::string& op = tok[0];
        auto want = [&](std::size_t n) {
            if (tok.size() != n)
                throw ScenarioParseError(lineno, "'" + op + "' expects " + std::to_string(n - 1) +
                                                     " arguments");
        };
        if (op == "read" || op == "write") {
            want(op == "read" ? 3 : 4);
            ev.kind = op == "read" ? Scenario::Event::Kind::Read : Scenario::Event::Kind::Write;
            ev.addr = parse_hex32(tok[1], lineno);
            std::uint64_t w = parse_u64(tok[2], lineno, 10);
            if (w != 1 && w != 2 && w != 4) throw ScenarioParseError(lineno, "width must be 1, 2, or 4");
            ev.width = static_cast<std::uint8_t>(w);
            if (ev.addr % ev.width != 0)
                throw ScenarioParseError(lineno, "address not aligned to width");
            if (op == "write") ev.value = parse_hex32(tok[3], lineno);
        } else if (op == "smc_set") {
            want(2);
            ev.kind = Scenario::Event::Kind::SmcSet;
            ev.value = parse_hex32(tok[1], lineno);
        } else if (op == "smc_get") {
            want(1);
            ev.kind = Scenario::Event::Kind::SmcGet;
        } else if (op == "key") {
            want(3);
            ev.kind = Scenario::Event::Kind::Key;
            ev.key.key = parse_key(tok[1], lineno);
            if (tok[2] == "press")
                ev.key.press = true;
            else if (tok[2] == "release")
                ev.key.press = false;
            else
                throw ScenarioParseError(lineno, "expected press|release");
        } else if (op == "wifi") {
            want(3);
            ev.kind = Scenario::Event::Kind::Wifi;
            if (tok[1] == "up")
                ev.upload = true;
            else if (tok[1] == "down")
                ev.upload = false;
            else
                throw ScenarioParseError(lineno, "expected up|down");
            ev.bytes = parse_u64(tok[2], lineno, 10);
        } else if (op == "psci_reset") {
            want(1);
            ev.kind = Scenario::Event::Kind::PsciReset;
        } else if (op == "tamper_bv") {
            want(2);
            ev.kind = Scenario::Event::Kind::TamperBv;
            ev.value = parse_hex32(tok[1], lineno);
        } else if (op == "expect") {
            want(3);
            ev.kind = Scenario::Event::Kind::Expect;
            if (tok[1] == "get")
                ev.expect_kind = Scenario::Event::ExpectKind::Get;
            else if (tok[1] == "result")
                ev.expect_kind = Scenario::Event::ExpectKind::Result;
            else if (tok[1] == "ns_status")
                ev.expect_kind = Scenario::Event::ExpectKind::NsStatus;
            else if (tok[1] == "denied_count")
                ev.expect_kind = Scenario::Event::ExpectKind::DeniedCount;
            else
                throw ScenarioParseError(lineno, "unknown expectation '" + tok[1] + "'");
            ev.expect_value = tok[2];
        } else {
            throw ScenarioParseError(lineno, "unknown event '" + op + "'");
        }
        sc.events.push_back(std::move(ev));
    }
    return sc;
}

std::string to_text(const Scenario& scenario) {
    std::string out;
    char buf[128];
    for (const Scenario::Event& ev : scenario.events) {
        using Kind = Scenario::Event::Kind;
        switch (ev.kind) {
            case Kind::Read:
                std::snprintf(buf, sizeof buf, "read 0x%x %u\n", ev.addr, ev.width);
                out += buf;
                break;
            case Kind::Write:
                std::snprintf(buf, sizeof buf, "write 0x%x %u 0x%x\n", ev.addr, ev.width, ev.value);
                out += buf;
                break;
            case Kind::SmcSet:
                std::snprintf(buf, sizeof buf, "smc_set 0x%x\n", ev.value);
                out += buf;
                break;
            case Kind::SmcGet: out += "smc_get\n"; break;
            case Kind::Key: {
                const char* names[] = {"home", "back", "power", "volume"};
                std::snprintf(buf, sizeof buf, "key %s %s\n",
                              names[static_cast<int>(ev.key.key)],
                              ev.key.press ? "press" : "release");
                out += buf;
                break;
            }
            case Kind::Wifi:
                std::snprintf(buf, sizeof buf, "wifi %s %llu\n", ev.upload ? "up" : "down",
                              static_cast<unsigned long long>(ev.bytes));
                out += buf;
                break;
            case Kind::PsciReset: out += "psci_reset\n"; break;
            case Kind::TamperBv:
                std::snprintf(buf, sizeof buf, "tamper_bv 0x%x\n", ev.value);
                out += buf;
                break;
            case Kind::Expect: {
                const char* kinds[] = {"get", "result", "ns_status", "denied_count"};
                std::snprintf(buf, sizeof buf, "expect %s %s\n",
                              kinds[static_cast<int>(ev.expect_kind)], ev.expect_value.c_str());
                out += buf;
                break;
            }
        }
    }
    return out;
}

}  // namespace cloaksim::nsim
