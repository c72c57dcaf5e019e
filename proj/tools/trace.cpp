#include <cstdio>
#include <sstream>

#include "driver.hpp"
#include "json.hpp"

namespace cloaksim::cli {

using nsim::Metrics;
using nsim::RunReport;
using nsim::TraceRecord;

namespace {

const char* cat_token(TraceRecord::Cat c) {
    switch (c) {
        case TraceRecord::Cat::Plain: return "plain";
        case TraceRecord::Cat::Som: return "som";
        case TraceRecord::Cat::Emu: return "emu";
    }
    return "?";
}

const char* verdict_token(TraceRecord::Verdict v) {
    switch (v) {
        case TraceRecord::Verdict::Ok: return "ok";
        case TraceRecord::Verdict::Deny: return "deny";
        case TraceRecord::Verdict::Fatal: return "fatal";
        case TraceRecord::Verdict::Crash: return "crash";
        case TraceRecord::Verdict::Unmapped: return "unmapped";
    }
    return "?";
}

}  // namespace

std::string format_trace(const RunReport& report) {
    std::string out;
    char buf[256];
    for (const TraceRecord& t : report.trace) {
        switch (t.kind) {
            case TraceRecord::Kind::Access: {
                std::snprintf(buf, sizeof buf,
                              "access ns %s 0x%08x w%u cat=%s verdict=%s value=0x%08x",
                              t.op == soc::Op::Read ? "read" : "write", t.addr, t.width,
                              cat_token(t.cat), verdict_token(t.verdict), t.value);
                out += buf;
                if (t.cat == TraceRecord::Cat::Emu) out += " steps=1-7";
                out += '\n';
                break;
            }
            case TraceRecord::Kind::Dma:
                std::snprintf(buf, sizeof buf, "dma %s %s 0x%08x len=%u %s\n", t.master.c_str(),
                              t.op == soc::Op::Read ? "read" : "write", t.addr, t.len,
                              t.verdict == TraceRecord::Verdict::Ok ? "ok" : "denied");
                out += buf;
                break;
            case TraceRecord::Kind::SmcSet:
                std::snprintf(buf, sizeof buf, "smc cloak_set bv=0x%08x result=%s\n", t.bv,
                              t.text.c_str());
                out += buf;
                break;
            case TraceRecord::Kind::SmcGet:
                std::snprintf(buf, sizeof buf, "smc cloak_get bv=0x%08x\n", t.bv);
                out += buf;
                break;
            case TraceRecord::Kind::Key:
                out += "key " + t.text + "\n";
                break;
            case TraceRecord::Kind::Wifi:
                std::snprintf(buf, sizeof buf,
                              "wifi %s bytes=%llu ldr=%llu str=%llu cat=%s denied=%llu result=%s\n",
                              t.upload ? "up" : "down", static_cast<unsigned long long>(t.bytes),
                              static_cast<unsigned long long>(t.ldr),
                              static_cast<unsigned long long>(t.str), cat_token(t.cat),
                              static_cast<unsigned long long>(t.denied), t.text.c_str());
                out += buf;
                break;
            case TraceRecord::Kind::Psci:
                out += "psci result=" + t.text + "\n";
                break;
            case TraceRecord::Kind::KeyReset:
                out += "reset key_sequence\n";
                break;
            case TraceRecord::Kind::Tamper:
                std::snprintf(buf, sizeof buf, "tamper mask=0x%08x\n", t.bv);
                out += buf;
                break;
            case TraceRecord::Kind::Expect:
                std::snprintf(buf, sizeof buf, "expect %s expected=%s actual=%s %s\n",
                              t.text.c_str(), t.expected.c_str(), t.actual.c_str(),
                              t.pass ? "pass" : "fail");
                out += buf;
                break;
        }
    }
    // Trailer: everything the metrics need that event lines cannot carry.
    for (const auto& [name, state] : report.metrics.class_states)
        out += "class " + name + " " + state + "\n";
    out += "ns_status " + report.metrics.ns_status + "\n";
    std::snprintf(buf, sizeof buf, "final_bv 0x%08x\n", report.metrics.final_bitvector);
    out += buf;
    std::snprintf(buf, sizeof buf, "dma_bandwidth %llu\n",
                  static_cast<unsigned long long>(report.metrics.dma_bandwidth));
    out += buf;
    return out;
}

Metrics metrics_from_trace(const std::string& trace_text) {
    Metrics m;
    std::istringstream stream(trace_text);
    std::string line;
    auto field = [](const std::string& l, const std::string& key) -> std::string {
        std::size_t p = l.find(key + "=");
        if (p == std::string::npos) return {};
        p += key.size() + 1;
        std::size_t e = l.find(' ', p);
        return l.substr(p, e == std::string::npos ? std::string::npos : e - p);
    };
    while (std::getline(stream, line)) {
        std::istringstream ls(line);
        std::string head;
        ls >> head;
        if (head == "access") {
            std::string world, op;
            ls >> world >> op;
            bool is_read = op == "read";
            std::string cat = field(line, "cat");
            std::string verdict = field(line, "verdict");
            if (cat == "emu") {
                ++(is_read ? m.ldr_emu : m.str_emu);
                ++m.abort_count;
                if (verdict == "deny") ++m.denied_count;
            } else if (verdict == "ok") {
                if (cat == "som")
                    ++(is_read ? m.ldr_som : m.str_som);
                else
                    ++(is_read ? m.ldr_plain : m.str_plain);
            } else if (verdict == "fatal" || verdict == "crash") {
                ++m.abort_count;
            }
        } else if (head == "dma") {
            std::string master, op, addr;
            ls >> master >> op >> addr;
            std::uint64_t len = std::stoull(field(line, "len"));
            if (line.ends_with(" ok"))
                m.dma_bytes += len;
            else
                ++m.dma_denied;
        } else if (head == "wifi") {
            std::uint64_t ldr = std::stoull(field(line, "ldr"));
            std::uint64_t str = std::stoull(field(line, "str"));
            std::string cat = field(line, "cat");
            if (cat == "emu") {
                m.ldr_emu += ldr;
                m.str_emu += str;
                m.abort_count += ldr + str;
            } else if (cat == "som") {
                m.ldr_som += ldr;
                m.str_som += str;
            } else {
                m.ldr_plain += ldr;
                m.str_plain += str;
            }
            m.denied_count += std::stoull(field(line, "denied"));
        } else if (head == "class") {
            std::string name, state;
            ls >> name >> state;
            m.class_states.emplace_back(name, state);
        } else if (head == "ns_status") {
            ls >> m.ns_status;
        } else if (head == "final_bv") {
            std::string v;
            ls >> v;
            m.final_bitvector = static_cast<std::uint32_t>(std::stoul(v, nullptr, 16));
        } else if (head == "dma_bandwidth") {
            ls >> m.dma_bandwidth;
        }
    }
    using soc::CostModel;
    m.mmio_time_ns = m.ldr_plain * CostModel::kLdrPlainNs + m.str_plain * CostModel::kStrPlainNs +
                     m.ldr_som * CostModel::kLdrSomNs + m.str_som * CostModel::kStrSomNs +
                     m.ldr_emu * CostModel::kLdrEmuNs + m.str_emu * CostModel::kStrEmuNs;
    m.dma_time_ns = m.dma_bandwidth ? m.dma_bytes * 1000 / m.dma_bandwidth : 0;
    m.modeled_time_ns = m.mmio_time_ns + m.dma_time_ns;
    return m;
}

std::string metrics_to_json(const Metrics& m) {
    nlohmann::ordered_json j;
    j["ldr_plain"] = m.ldr_plain;
    j["str_plain"] = m.str_plain;
    j["ldr_som"] = m.ldr_som;
    j["str_som"] = m.str_som;
    j["ldr_emu"] = m.ldr_emu;
    j["str_emu"] = m.str_emu;
    j["abort_count"] = m.abort_count;
    j["denied_count"] = m.denied_count;
    j["dma_denied"] = m.dma_denied;
    j["dma_bytes"] = m.dma_bytes;
    j["dma_bandwidth"] = m.dma_bandwidth;
    j["mmio_time_ns"] = m.mmio_time_ns;
    j["dma_time_ns"] = m.dma_time_ns;
    j["modeled_time_ns"] = m.modeled_time_ns;
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", m.final_bitvector);
    j["final_bitvector"] = buf;
    j["ns_status"] = m.ns_status;
    for (const auto& [name, state] : m.class_states) j["class." + name] = state;
    return j.dump(2) + "\n";
}

std::string report_to_json(const RunReport& report) {
    nlohmann::ordered_json j;
    j["trace"] = format_trace(report);
    j["metrics"] = nlohmann::ordered_json::parse(metrics_to_json(report.metrics));
    j["all_expects_pass"] = report.all_expects_pass;
    j["last_result"] = report.last_result;
    if (report.last_confirmation_bv) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "0x%08x", *report.last_confirmation_bv);
        j["last_confirmation_bv"] = buf;
    }
    j["audit_access_count"] = report.audit_access_count;
    nlohmann::ordered_json ex = nlohmann::ordered_json::array();
    for (const auto& e : report.expects) {
        nlohmann::ordered_json one;
        one["kind"] = e.kind;
        one["expected"] = e.expected;
        one["actual"] = e.actual;
        one["pass"] = e.pass;
        ex.push_back(one);
    }
    j["expects"] = ex;
    return j.dump(2) + "\n";
}

}  // namespace cloaksim::cli
