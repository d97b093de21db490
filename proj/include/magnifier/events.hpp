#pragma once

#include <array>
#include <cstdint>
#include <fstream>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace magnifier {

enum class Protocol : std::uint8_t { dns = 0, tls = 1, http = 2 };

const char* protocol_name(Protocol proto);
std::optional<Protocol> protocol_from_name(std::string_view name);

// One timestamped (source, protocol, domain) observation.
struct DomainEvent {
    double ts = 0.0;            // seconds since epoch, fractional
    std::string src;            // IPv4/IPv6 text or synthetic id
    Protocol proto = Protocol::dns;
    std::string domain;

    bool operator==(const DomainEvent& other) const {
        return ts == other.ts && src == other.src && proto == other.proto &&
               domain == other.domain;
    }
};

// Per-protocol extraction accounting. A packet is counted in
// `packets_with_events` for at most one protocol; packets_with_events,
// parse_failures and non-matching packets partition packets_seen.
struct CaptureStats {
    struct PerProtocol {
        std::uint64_t packets_with_events = 0;
        std::uint64_t events_emitted = 0;
        std::uint64_t parse_failures = 0;
    };

    std::uint64_t packets_seen = 0;
    std::uint64_t truncated_packets = 0;
    std::array<PerProtocol, 3> per_protocol{};

    PerProtocol& proto(Protocol p) { return per_protocol[static_cast<std::size_t>(p)]; }
    const PerProtocol& proto(Protocol p) const {
        return per_protocol[static_cast<std::size_t>(p)];
    }

    std::uint64_t total_events() const;
    std::uint64_t total_failures() const;
    std::uint64_t matched_packets() const;
};

// Canonical event log: one JSON object per line with keys ts, src, proto,
// domain. Malformed lines are skipped and counted.
class EventLogReader {
public:
    explicit EventLogReader(const std::string& path);

    bool next(DomainEvent& out);
    std::uint64_t parse_failures() const { return parse_failures_; }
    std::uint64_t lines_read() const { return lines_read_; }

private:
    std::ifstream in_;
    std::string path_;
    std::uint64_t parse_failures_ = 0;
    std::uint64_t lines_read_ = 0;
};

std::vector<DomainEvent> read_event_log(const std::string& path,
                                        std::uint64_t* parse_failures = nullptr);

std::string event_to_line(const DomainEvent& event);
std::optional<DomainEvent> event_from_line(std::string_view line);

void write_event_log(const std::string& path, const std::vector<DomainEvent>& events);

} // namespace magnifier
