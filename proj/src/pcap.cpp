#include "magnifier/pcap.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cstring>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "magnifier/error.hpp"

namespace magnifier {

namespace {

constexpr std::uint32_t kMagicUsec = 0xA1B2C3D4u;
constexpr std::uint32_t kMagicNsec = 0xA1B23C4Du;
constexpr std::uint32_t kMagicUsecSwapped = 0xD4C3B2A1u;
constexpr std::uint32_t kMagicNsecSwapped = 0x4D3CB2A1u;

constexpr std::uint32_t kLinkEthernet = 1;
constexpr std::uint32_t kLinkLinuxSll = 113;

constexpr std::size_t kMaxSnapLen = 256 * 1024 * 1024;

// Bounds-checked big-endian cursor over one packet.
class Cursor {
public:
    Cursor(const std::uint8_t* data, std::size_t size) : data_(data), size_(size) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }
    bool ok() const { return ok_; }

    std::uint8_t u8() { return take(1) ? data_[pos_ - 1] : 0; }
    std::uint16_t u16() {
        if (!take(2)) return 0;
        return static_cast<std::uint16_t>((data_[pos_ - 2] << 8) | data_[pos_ - 1]);
    }
    std::uint32_t u24() {
        if (!take(3)) return 0;
        return (static_cast<std::uint32_t>(data_[pos_ - 3]) << 16) |
               (static_cast<std::uint32_t>(data_[pos_ - 2]) << 8) | data_[pos_ - 1];
    }
    std::uint32_t u32() {
        if (!take(4)) return 0;
        return (static_cast<std::uint32_t>(data_[pos_ - 4]) << 24) |
               (static_cast<std::uint32_t>(data_[pos_ - 3]) << 16) |
               (static_cast<std::uint32_t>(data_[pos_ - 2]) << 8) | data_[pos_ - 1];
    }
    const std::uint8_t* bytes(std::size_t n) {
        if (!take(n)) return nullptr;
        return data_ + pos_ - n;
    }
    bool skip(std::size_t n) { return take(n); }
    void seek(std::size_t p) {
        if (p > size_) {
            ok_ = false;
        } else {
            pos_ = p;
        }
    }

private:
    bool take(std::size_t n) {
        if (!ok_ || size_ - pos_ < n) {
            ok_ = false;
            return false;
        }
        pos_ += n;
        return true;
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
    bool ok_ = true;
};

std::string ipv4_text(const std::uint8_t* p) {
    char buf[INET_ADDRSTRLEN];
    if (!inet_ntop(AF_INET, p, buf, sizeof(buf))) return {};
    return buf;
}

std::string ipv6_text(const std::uint8_t* p) {
    char buf[INET6_ADDRSTRLEN];
    if (!inet_ntop(AF_INET6, p, buf, sizeof(buf))) return {};
    return buf;
}

struct L4Packet {
    std::string ip_src;
    std::string ip_dst;
    std::uint8_t proto = 0; // 6 tcp, 17 udp
    const std::uint8_t* payload = nullptr;
    std::size_t payload_len = 0;
};

// Returns false when the packet has no parseable UDP/TCP layer.
bool decode_l3(const std::uint8_t* data, std::size_t size, std::uint16_t ethertype,
               std::size_t offset, L4Packet& out) {
    Cursor c(data, size);
    c.seek(offset);
    if (ethertype == 0x0800) {
        std::uint8_t vihl = c.u8();
        if (!c.ok() || (vihl >> 4) != 4) return false;
        std::size_t ihl = static_cast<std::size_t>(vihl & 0x0F) * 4;
        if (ihl < 20) return false;
        c.skip(1);
        std::uint16_t total_len = c.u16();
        c.skip(2); // identification
        std::uint16_t frag = c.u16();
        if ((frag & 0x1FFF) != 0) return false; // non-first fragment
        c.skip(1);
        out.proto = c.u8();
        c.skip(2);
        const std::uint8_t* src = c.bytes(4);
        const std::uint8_t* dst = c.bytes(4);
        if (!c.ok()) return false;
        out.ip_src = ipv4_text(src);
        out.ip_dst = ipv4_text(dst);
        std::size_t l4_off = offset + ihl;
        std::size_t ip_end = std::min(size, offset + total_len);
        if (l4_off > size) return false;
        if (ip_end < l4_off) ip_end = size; // bogus total length, use capture
        out.payload = data + l4_off;
        out.payload_len = ip_end - l4_off;
        return out.proto == 6 || out.proto == 17;
    }
    if (ethertype == 0x86DD) {
        const std::uint8_t* hdr = c.bytes(40);
        if (!c.ok()) return false;
        std::uint8_t next = hdr[6];
        out.ip_src = ipv6_text(hdr + 8);
        out.ip_dst = ipv6_text(hdr + 24);
        std::size_t l4_off = offset + 40;
        // skip chained extension headers
        while (next == 0 || next == 43 || next == 60) {
            if (l4_off + 2 > size) return false;
            std::uint8_t nn = data[l4_off];
            std::size_t ext_len = (static_cast<std::size_t>(data[l4_off + 1]) + 1) * 8;
            l4_off += ext_len;
            next = nn;
            if (l4_off > size) return false;
        }
        out.proto = next;
        if (l4_off > size) return false;
        out.payload = data + l4_off;
        out.payload_len = size - l4_off;
        return out.proto == 6 || out.proto == 17;
    }
    return false;
}

// DNS name decoding with compression-pointer loop guard.
bool dns_name(const std::uint8_t* msg, std::size_t msg_len, std::size_t& pos, std::string& out) {
    out.clear();
    std::size_t p = pos;
    bool jumped = false;
    int jumps = 0;
    std::size_t guard = 0;
    while (true) {
        if (p >= msg_len || ++guard > 512) return false;
        std::uint8_t len = msg[p];
        if (len == 0) {
            ++p;
            break;
        }
        if ((len & 0xC0) == 0xC0) {
            if (p + 1 >= msg_len || ++jumps > 32) return false;
            std::size_t target = (static_cast<std::size_t>(len & 0x3F) << 8) | msg[p + 1];
            if (!jumped) pos = p + 2;
            jumped = true;
            if (target >= msg_len) return false;
            p = target;
            continue;
        }
        if ((len & 0xC0) != 0) return false;
        if (p + 1 + len > msg_len) return false;
        if (!out.empty()) out += '.';
        out.append(reinterpret_cast<const char*>(msg + p + 1), len);
        if (out.size() > 255) return false;
        p += 1 + len;
    }
    if (!jumped) pos = p;
    return true;
}

bool parse_dns(const std::uint8_t* msg, std::size_t len, bool& is_response,
               std::vector<std::string>& names) {
    if (len < 12) return false;
    std::uint16_t flags = static_cast<std::uint16_t>((msg[2] << 8) | msg[3]);
    std::uint16_t qdcount = static_cast<std::uint16_t>((msg[4] << 8) | msg[5]);
    std::uint16_t ancount = static_cast<std::uint16_t>((msg[6] << 8) | msg[7]);
    is_response = (flags & 0x8000) != 0;

    std::size_t pos = 12;
    std::string name;
    for (std::uint16_t i = 0; i < qdcount; ++i) {
        if (!dns_name(msg, len, pos, name)) return false;
        if (pos + 4 > len) return false;
        pos += 4;
        if (!is_response && !name.empty()) names.push_back(name);
    }
    if (is_response) {
        for (std::uint16_t i = 0; i < ancount; ++i) {
            if (!dns_name(msg, len, pos, name)) return false;
            if (pos + 10 > len) return false;
            std::uint16_t rdlen = static_cast<std::uint16_t>((msg[pos + 8] << 8) | msg[pos + 9]);
            pos += 10;
            if (pos + rdlen > len) return false;
            pos += rdlen;
            if (!name.empty()) names.push_back(name);
        }
    }
    return true;
}

// server_name of a ClientHello at the start of a TCP payload. Returns:
//  1 SNI found, 0 not a ClientHello / no SNI, -1 looked like one but malformed.
int parse_client_hello_sni(const std::uint8_t* p, std::size_t len, std::string& sni) {
    if (len < 6 || p[0] != 0x16 || p[1] != 0x03) return 0;
    Cursor c(p, len);
    c.skip(3);
    std::uint16_t record_len = c.u16();
    std::size_t record_end = std::min<std::size_t>(5 + record_len, len);
    if (c.u8() != 0x01) return 0; // not a ClientHello
    std::uint32_t hs_len = c.u24();
    (void)hs_len;
    c.skip(2);  // client version
    c.skip(32); // random
    std::uint8_t sid_len = c.u8();
    c.skip(sid_len);
    std::uint16_t cs_len = c.u16();
    c.skip(cs_len);
    std::uint8_t comp_len = c.u8();
    c.skip(comp_len);
    if (!c.ok() || c.pos() >= record_end) return -1;
    std::uint16_t ext_total = c.u16();
    std::size_t ext_end = std::min<std::size_t>(c.pos() + ext_total, record_end);
    while (c.ok() && c.pos() + 4 <= ext_end) {
        std::uint16_t ext_type = c.u16();
        std::uint16_t ext_len = c.u16();
        if (c.pos() + ext_len > ext_end) return -1;
        if (ext_type == 0x0000) {
            Cursor e(p, c.pos() + ext_len);
            e.seek(c.pos());
            e.skip(2); // server_name_list length
            while (e.ok() && e.remaining() >= 3) {
                std::uint8_t name_type = e.u8();
                std::uint16_t name_len = e.u16();
                const std::uint8_t* s = e.bytes(name_len);
                if (!e.ok()) return -1;
                if (name_type == 0) {
                    sni.assign(reinterpret_cast<const char*>(s), name_len);
                    return 1;
                }
            }
            return -1;
        }
        c.skip(ext_len);
    }
    return c.ok() ? 0 : -1;
}

bool ascii_ieq(std::string_view a, std::string_view b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (std::tolower(static_cast<unsigned char>(a[i])) !=
            std::tolower(static_cast<unsigned char>(b[i])))
            return false;
    return true;
}

std::string strip_host_port(std::string_view host) {
    if (!host.empty() && host.front() == '[') {
        auto close = host.find(']');
        if (close != std::string_view::npos) return std::string(host.substr(0, close + 1));
        return std::string(host);
    }
    auto colon = host.rfind(':');
    if (colon != std::string_view::npos) {
        bool digits = colon + 1 < host.size();
        for (std::size_t i = colon + 1; i < host.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(host[i]))) digits = false;
        if (digits && host.find(':') == colon) return std::string(host.substr(0, colon));
    }
    return std::string(host);
}

bool parse_http_host(const std::uint8_t* p, std::size_t len, std::string& host) {
    static const std::array<std::string_view, 6> kMethods = {"GET ",    "POST ",   "PUT ",
                                                             "HEAD ",   "DELETE ", "OPTIONS "};
    std::string_view payload(reinterpret_cast<const char*>(p), len);
    bool is_request = false;
    for (auto m : kMethods)
        if (payload.substr(0, m.size()) == m) is_request = true;
    if (!is_request) return false;
    auto line_end = payload.find("\r\n");
    if (line_end == std::string_view::npos) return false;
    if (payload.substr(0, line_end).find(" HTTP/1.") == std::string_view::npos) return false;

    std::size_t pos = line_end + 2;
    while (pos < payload.size()) {
        auto eol = payload.find("\r\n", pos);
        if (eol == std::string_view::npos) eol = payload.size();
        std::string_view line = payload.substr(pos, eol - pos);
        if (line.empty()) break; // end of headers
        auto colon = line.find(':');
        if (colon != std::string_view::npos && ascii_ieq(line.substr(0, colon), "Host")) {
            std::string_view value = line.substr(colon + 1);
            while (!value.empty() && (value.front() == ' ' || value.front() == '\t'))
                value.remove_prefix(1);
            while (!value.empty() && (value.back() == ' ' || value.back() == '\t'))
                value.remove_suffix(1);
            if (value.empty()) return false;
            host = strip_host_port(value);
            return true;
        }
        pos = eol + 2;
    }
    return false;
}

struct FlowTable {
    std::unordered_map<std::string, std::string> initiator;

    static std::string key(const std::string& a_ip, std::uint16_t a_port, const std::string& b_ip,
                           std::uint16_t b_port) {
        std::string a = a_ip + '/' + std::to_string(a_port);
        std::string b = b_ip + '/' + std::to_string(b_port);
        return a < b ? a + '|' + b : b + '|' + a;
    }
};

} // namespace

CaptureStats extract_from_pcap(const std::string& path, const EventSink& sink) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_unreadable, "cannot open pcap: " + path);

    std::array<std::uint8_t, 24> global{};
    in.read(reinterpret_cast<char*>(global.data()), global.size());
    if (in.gcount() != static_cast<std::streamsize>(global.size()))
        throw Error(ErrorCode::bad_pcap_magic, "pcap shorter than global header: " + path);

    auto read_u32 = [](const std::uint8_t* p, bool swap) -> std::uint32_t {
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        if (swap) v = __builtin_bswap32(v);
        return v;
    };

    std::uint32_t raw_magic;
    std::memcpy(&raw_magic, global.data(), 4);
    bool swap = false;
    double frac_scale = 1e-6;
    if (raw_magic == kMagicUsec) {
    } else if (raw_magic == kMagicNsec) {
        frac_scale = 1e-9;
    } else if (raw_magic == kMagicUsecSwapped) {
        swap = true;
    } else if (raw_magic == kMagicNsecSwapped) {
        swap = true;
        frac_scale = 1e-9;
    } else {
        throw Error(ErrorCode::bad_pcap_magic, path);
    }

    std::uint32_t linktype = read_u32(global.data() + 20, swap);
    if (linktype != kLinkEthernet && linktype != kLinkLinuxSll)
        throw Error(ErrorCode::schema_violation,
                    "unsupported pcap linktype " + std::to_string(linktype));

    CaptureStats stats;
    FlowTable flows;
    std::vector<std::uint8_t> packet;
    std::array<std::uint8_t, 16> rec{};

    while (in.read(reinterpret_cast<char*>(rec.data()), rec.size())) {
        std::uint32_t ts_sec = read_u32(rec.data(), swap);
        std::uint32_t ts_frac = read_u32(rec.data() + 4, swap);
        std::uint32_t incl_len = read_u32(rec.data() + 8, swap);
        std::uint32_t orig_len = read_u32(rec.data() + 12, swap);
        if (incl_len > kMaxSnapLen)
            throw Error(ErrorCode::schema_violation, "implausible pcap record length");
        packet.resize(incl_len);
        in.read(reinterpret_cast<char*>(packet.data()), incl_len);
        if (in.gcount() != static_cast<std::streamsize>(incl_len)) break; // truncated file

        stats.packets_seen += 1;
        if (incl_len < orig_len) stats.truncated_packets += 1;
        double ts = static_cast<double>(ts_sec) + static_cast<double>(ts_frac) * frac_scale;

        // link layer
        std::size_t offset = 0;
        std::uint16_t ethertype = 0;
        if (linktype == kLinkEthernet) {
            if (packet.size() < 14) continue;
            ethertype = static_cast<std::uint16_t>((packet[12] << 8) | packet[13]);
            offset = 14;
        } else {
            if (packet.size() < 16) continue;
            ethertype = static_cast<std::uint16_t>((packet[14] << 8) | packet[15]);
            offset = 16;
        }
        while (ethertype == 0x8100 && packet.size() >= offset + 4) {
            ethertype = static_cast<std::uint16_t>((packet[offset + 2] << 8) | packet[offset + 3]);
            offset += 4;
        }

        L4Packet l4;
        if (!decode_l3(packet.data(), packet.size(), ethertype, offset, l4)) continue;

        if (l4.proto == 17) {
            if (l4.payload_len < 8) continue;
            std::uint16_t sport = static_cast<std::uint16_t>((l4.payload[0] << 8) | l4.payload[1]);
            std::uint16_t dport = static_cast<std::uint16_t>((l4.payload[2] << 8) | l4.payload[3]);
            std::uint16_t udp_len = static_cast<std::uint16_t>((l4.payload[4] << 8) | l4.payload[5]);
            if (sport != 53 && dport != 53) continue;
            std::size_t body_len = std::min<std::size_t>(
                l4.payload_len - 8, udp_len >= 8 ? udp_len - 8u : l4.payload_len - 8);
            const std::uint8_t* body = l4.payload + 8;

            bool is_response = false;
            std::vector<std::string> names;
            auto& pstats = stats.proto(Protocol::dns);
            if (!parse_dns(body, body_len, is_response, names)) {
                pstats.parse_failures += 1;
                continue;
            }
            if (names.empty()) continue;
            pstats.packets_with_events += 1;
            const std::string& client = is_response ? l4.ip_dst : l4.ip_src;
            for (auto& n : names) {
                sink(DomainEvent{ts, client, Protocol::dns, std::move(n)});
                pstats.events_emitted += 1;
            }
            continue;
        }

        // TCP
        if (l4.payload_len < 20) continue;
        std::uint16_t sport = static_cast<std::uint16_t>((l4.payload[0] << 8) | l4.payload[1]);
        std::uint16_t dport = static_cast<std::uint16_t>((l4.payload[2] << 8) | l4.payload[3]);
        std::size_t doff = static_cast<std::size_t>(l4.payload[12] >> 4) * 4;
        std::uint8_t tcp_flags = l4.payload[13];
        if (doff < 20 || doff > l4.payload_len) continue;

        bool syn = (tcp_flags & 0x02) != 0;
        bool ack = (tcp_flags & 0x10) != 0;
        std::string fkey = FlowTable::key(l4.ip_src, sport, l4.ip_dst, dport);
        if (syn && !ack) flows.initiator[fkey] = l4.ip_src;

        const std::uint8_t* body = l4.payload + doff;
        std::size_t body_len = l4.payload_len - doff;
        if (body_len == 0) continue;

        auto flow_src = [&]() -> std::string {
            auto it = flows.initiator.find(fkey);
            return it != flows.initiator.end() ? it->second : l4.ip_src;
        };

        std::string sni;
        int tls = parse_client_hello_sni(body, body_len, sni);
        if (tls == 1) {
            auto& pstats = stats.proto(Protocol::tls);
            pstats.packets_with_events += 1;
            pstats.events_emitted += 1;
            sink(DomainEvent{ts, flow_src(), Protocol::tls, std::move(sni)});
            continue;
        }
        if (tls == -1) {
            stats.proto(Protocol::tls).parse_failures += 1;
            continue;
        }

        std::string host;
        if (parse_http_host(body, body_len, host)) {
            auto& pstats = stats.proto(Protocol::http);
            pstats.packets_with_events += 1;
            pstats.events_emitted += 1;
            sink(DomainEvent{ts, flow_src(), Protocol::http, std::move(host)});
        }
    }

    return stats;
}

std::pair<std::vector<DomainEvent>, CaptureStats> extract_from_pcap(const std::string& path) {
    std::vector<DomainEvent> events;
    CaptureStats stats = extract_from_pcap(path, [&](const DomainEvent& e) { events.push_back(e); });
    return {std::move(events), stats};
}

} // namespace magnifier
