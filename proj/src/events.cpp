#include "magnifier/events.hpp"

#include <json.hpp>

#include <cmath>

#include "magnifier/error.hpp"

namespace magnifier {

using nlohmann::json;

const char* protocol_name(Protocol proto) {
    switch (proto) {
    case Protocol::dns: return "dns";
    case Protocol::tls: return "tls";
    case Protocol::http: return "http";
    }
    return "dns";
}

std::optional<Protocol> protocol_from_name(std::string_view name) {
    if (name == "dns") return Protocol::dns;
    if (name == "tls") return Protocol::tls;
    if (name == "http") return Protocol::http;
    return std::nullopt;
}

std::uint64_t CaptureStats::total_events() const {
    std::uint64_t n = 0;
    for (const auto& p : per_protocol) n += p.events_emitted;
    return n;
}

std::uint64_t CaptureStats::total_failures() const {
    std::uint64_t n = 0;
    for (const auto& p : per_protocol) n += p.parse_failures;
    return n;
}

std::uint64_t CaptureStats::matched_packets() const {
    std::uint64_t n = 0;
    for (const auto& p : per_protocol) n += p.packets_with_events;
    return n;
}

std::string event_to_line(const DomainEvent& event) {
    json record;
    record["ts"] = event.ts;
    record["src"] = event.src;
    record["proto"] = protocol_name(event.proto);
    record["domain"] = event.domain;
    return record.dump();
}

std::optional<DomainEvent> event_from_line(std::string_view line) {
    json record = json::parse(line, nullptr, false);
    if (!record.is_object()) return std::nullopt;
    auto ts = record.find("ts");
    auto src = record.find("src");
    auto proto = record.find("proto");
    auto domain = record.find("domain");
    if (ts == record.end() || src == record.end() || proto == record.end() ||
        domain == record.end())
        return std::nullopt;
    if (!ts->is_number() || !src->is_string() || !proto->is_string() || !domain->is_string())
        return std::nullopt;
    auto p = protocol_from_name(proto->get<std::string>());
    if (!p) return std::nullopt;
    DomainEvent event;
    event.ts = ts->get<double>();
    if (!std::isfinite(event.ts) || event.ts < 0.0) return std::nullopt;
    event.src = src->get<std::string>();
    event.proto = *p;
    event.domain = domain->get<std::string>();
    return event;
}

EventLogReader::EventLogReader(const std::string& path) : in_(path), path_(path) {
    if (!in_) throw Error(ErrorCode::file_unreadable, "cannot open event log: " + path);
}

bool EventLogReader::next(DomainEvent& out) {
    std::string line;
    while (std::getline(in_, line)) {
        ++lines_read_;
        if (line.empty()) continue;
        auto event = event_from_line(line);
        if (!event) {
            ++parse_failures_;
            continue;
        }
        out = std::move(*event);
        return true;
    }
    return false;
}

std::vector<DomainEvent> read_event_log(const std::string& path, std::uint64_t* parse_failures) {
    EventLogReader reader(path);
    std::vector<DomainEvent> events;
    DomainEvent event;
    while (reader.next(event)) events.push_back(event);
    if (parse_failures) *parse_failures = reader.parse_failures();
    return events;
}

void write_event_log(const std::string& path, const std::vector<DomainEvent>& events) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorCode::io_failure, "cannot write event log: " + path);
    for (const auto& event : events) out << event_to_line(event) << '\n';
    if (!out) throw Error(ErrorCode::io_failure, "short write: " + path);
}

} // namespace magnifier
