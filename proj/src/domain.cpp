#include "magnifier/domain.hpp"

#include <arpa/inet.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "magnifier/events.hpp"

namespace magnifier {

namespace {

constexpr std::size_t kMaxLabelLen = 63;
constexpr std::size_t kMaxNameLen = 253;

bool legal_label_char(char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '-' || c == '_';
}

bool all_digits(const std::string& s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](char c) { return c >= '0' && c <= '9'; });
}

bool is_ipv6_text(std::string_view text) {
    unsigned char buf[sizeof(struct in6_addr)];
    std::string copy(text);
    return inet_pton(AF_INET6, copy.c_str(), buf) == 1;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

} // namespace

std::string DomainName::text() const {
    std::string out;
    for (const auto& label : labels) {
        if (!out.empty()) out += '.';
        out += label;
    }
    return out;
}

SuffixRules SuffixRules::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::file_unreadable, "cannot open suffix rules: " + path);
    return from_lines(in);
}

SuffixRules SuffixRules::from_lines(std::istream& in) {
    SuffixRules rules;
    std::string line;
    while (std::getline(in, line)) {
        std::string_view s = trim(line);
        if (s.empty() || s.front() == '#') continue;
        if (s.front() == '*' || s.front() == '!') continue; // wildcard/exception rules unsupported
        rules.add(s);
    }
    return rules;
}

void SuffixRules::add(std::string_view suffix) {
    std::string lower(suffix);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (lower.empty()) return;
    std::size_t labels = 1 + static_cast<std::size_t>(std::count(lower.begin(), lower.end(), '.'));
    max_rule_labels_ = std::max(max_rule_labels_, labels);
    suffixes_.insert(std::move(lower));
}

bool SuffixRules::contains(std::string_view suffix) const {
    return suffixes_.count(std::string(suffix)) > 0;
}

std::size_t SuffixRules::suffix_label_count(const std::vector<std::string>& labels) const {
    std::size_t upper = std::min(max_rule_labels_, labels.size());
    for (std::size_t k = upper; k >= 2; --k) {
        std::string candidate;
        for (std::size_t i = labels.size() - k; i < labels.size(); ++i) {
            if (!candidate.empty()) candidate += '.';
            candidate += labels[i];
        }
        if (suffixes_.count(candidate)) return k;
    }
    return 1; // default rule: rightmost label
}

std::string SuffixRules::digest() const {
    std::vector<std::string> sorted(suffixes_.begin(), suffixes_.end());
    std::sort(sorted.begin(), sorted.end());
    std::uint64_t hash = 0xcbf29ce484222325ull;
    auto mix = [&hash](char c) {
        hash ^= static_cast<unsigned char>(c);
        hash *= 0x100000001b3ull;
    };
    for (const auto& s : sorted) {
        for (char c : s) mix(c);
        mix('\n');
    }
    std::ostringstream out;
    out << std::hex << hash;
    return out.str();
}

std::pair<DomainName, DomainName> parse_and_root(std::string_view text, const SuffixRules& rules) {
    std::string_view s = trim(text);
    if (s.empty()) throw Error(ErrorCode::malformed_domain, "empty name");

    if (s.front() == '[' && s.back() == ']') {
        if (is_ipv6_text(s.substr(1, s.size() - 2)))
            throw Error(ErrorCode::ip_literal, std::string(text));
        throw Error(ErrorCode::malformed_domain, "bracketed non-address: " + std::string(text));
    }
    if (s.find(':') != std::string_view::npos) {
        if (is_ipv6_text(s)) throw Error(ErrorCode::ip_literal, std::string(text));
        throw Error(ErrorCode::malformed_domain, "illegal character ':' in " + std::string(text));
    }

    DomainName name;
    name.raw.assign(text);

    std::string lower(s);
    std::transform(lower.begin(), lower.end(), lower.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (!lower.empty() && lower.back() == '.') lower.pop_back();
    if (lower.empty()) throw Error(ErrorCode::malformed_domain, "empty name");
    if (lower.size() > kMaxNameLen)
        throw Error(ErrorCode::malformed_domain, "name too long: " + std::string(text));

    std::size_t pos = 0;
    while (pos <= lower.size()) {
        std::size_t dot = lower.find('.', pos);
        std::size_t end = dot == std::string::npos ? lower.size() : dot;
        std::string label = lower.substr(pos, end - pos);
        if (label.empty())
            throw Error(ErrorCode::malformed_domain, "empty label in " + std::string(text));
        if (label.size() > kMaxLabelLen)
            throw Error(ErrorCode::malformed_domain, "label too long in " + std::string(text));
        for (char c : label)
            if (!legal_label_char(c))
                throw Error(ErrorCode::malformed_domain,
                            std::string("illegal character '") + c + "' in " + std::string(text));
        name.labels.push_back(std::move(label));
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }

    if (name.labels.size() == 4 &&
        std::all_of(name.labels.begin(), name.labels.end(), all_digits)) {
        throw Error(ErrorCode::ip_literal, std::string(text));
    }

    std::size_t suffix_labels = rules.suffix_label_count(name.labels);
    if (suffix_labels >= name.labels.size())
        throw Error(ErrorCode::bare_suffix, name.text());

    DomainName root;
    root.labels.assign(name.labels.end() - static_cast<std::ptrdiff_t>(suffix_labels) - 1,
                       name.labels.end());
    root.raw = root.text();
    return {std::move(name), std::move(root)};
}

LevelExpansion expand_levels(const DomainName& name, const SuffixRules& rules, int level_cap) {
    if (level_cap < 1) throw Error(ErrorCode::invalid_config, "level cap must be >= 1");
    std::size_t suffix_labels = rules.suffix_label_count(name.labels);
    if (suffix_labels >= name.labels.size())
        throw Error(ErrorCode::bare_suffix, name.text());

    int depth = static_cast<int>(name.labels.size() - suffix_labels);
    int top = std::min(depth, level_cap);

    LevelExpansion expansion;
    expansion.names.reserve(static_cast<std::size_t>(top));
    for (int level = 1; level <= top; ++level) {
        std::string joined;
        std::size_t first = name.labels.size() - suffix_labels - static_cast<std::size_t>(level);
        for (std::size_t i = first; i < name.labels.size(); ++i) {
            if (!joined.empty()) joined += '.';
            joined += name.labels[i];
        }
        expansion.names.push_back({std::move(joined), level});
    }
    return expansion;
}

void DomainFeatureSet::add_expansion(const LevelExpansion& expansion) {
    for (const auto& entry : expansion.names) {
        auto& slot = entries[entry.name];
        slot.level = entry.level;
        slot.count += 1;
    }
}

void DomainFeatureSet::merge(const DomainFeatureSet& other) {
    if (level_cap != other.level_cap)
        throw Error(ErrorCode::invalid_config, "level cap mismatch in feature merge");
    if (!other.class_label.empty() && !class_label.empty() && class_label != other.class_label)
        throw Error(ErrorCode::invalid_config, "class label mismatch in feature merge");
    for (const auto& [name, entry] : other.entries) {
        auto& slot = entries[name];
        slot.level = entry.level;
        slot.count += entry.count;
    }
    total_events += other.total_events;
    skipped_events += other.skipped_events;
}

DomainFeatureSet accumulate_features(const std::vector<DomainEvent>& events,
                                     const std::string& label, const SuffixRules& rules,
                                     int level_cap, const SkipDiagnostic& diag) {
    DomainFeatureSet features;
    features.class_label = label;
    features.level_cap = level_cap;
    for (const auto& event : events) {
        try {
            auto [name, root] = parse_and_root(event.domain, rules);
            features.add_expansion(expand_levels(name, rules, level_cap));
            features.total_events += 1;
        } catch (const Error& err) {
            features.skipped_events += 1;
            if (diag) diag(event, err);
        }
    }
    return features;
}

} // namespace magnifier
