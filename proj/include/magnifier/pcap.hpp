#pragma once

#include <functional>
#include <string>
#include <vector>

#include "magnifier/events.hpp"

namespace magnifier {

using EventSink = std::function<void(const DomainEvent&)>;

// Reads a classic pcap file (both endiannesses, microsecond and nanosecond
// variants; linktype Ethernet or Linux cooked) and emits domain events:
//
//   DNS  - QNAMEs of questions in queries plus owner names of answer records
//          in responses, over UDP port 53. Source is the querying client.
//   TLS  - server_name of a ClientHello found at the start of a TCP payload.
//   HTTP - Host header of a request-line payload, port stripped.
//
// For TLS/HTTP the source is the TCP SYN initiator when the SYN was seen,
// otherwise the payload sender. Malformed packets are skipped and counted,
// never fatal. Throws Error(bad_pcap_magic) / Error(file_unreadable).
CaptureStats extract_from_pcap(const std::string& path, const EventSink& sink);

// Convenience wrapper collecting events into a vector.
std::pair<std::vector<DomainEvent>, CaptureStats> extract_from_pcap(const std::string& path);

} // namespace magnifier
