#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "magnifier/error.hpp"

namespace magnifier {

// Names deeper than this many labels above the public suffix are truncated
// to their level-capped ancestor.
inline constexpr int kDefaultLevelCap = 6;

// A normalized DNS name: lowercase labels, leftmost first, trailing dot
// stripped. `raw` keeps the original text; equality ignores it.
struct DomainName {
    std::vector<std::string> labels;
    std::string raw;

    std::string text() const;
    std::size_t label_count() const { return labels.size(); }

    bool operator==(const DomainName& other) const { return labels == other.labels; }
    bool operator!=(const DomainName& other) const { return !(*this == other); }
};

// Public-suffix rules. Plain rules only (no wildcard/exception lines); the
// rightmost single label is always a suffix as fallback, so lookup never
// fails. Longest match wins.
class SuffixRules {
public:
    SuffixRules() = default;

    static SuffixRules from_file(const std::string& path);
    static SuffixRules from_lines(std::istream& in);

    void add(std::string_view suffix);
    bool contains(std::string_view suffix) const;
    std::size_t size() const { return suffixes_.size(); }

    // Number of trailing labels of `labels` covered by the longest matching
    // rule (at least 1 via the default rule).
    std::size_t suffix_label_count(const std::vector<std::string>& labels) const;

    // FNV-1a over the sorted rule set; identifies which rules built a
    // fingerprint.
    std::string digest() const;

private:
    std::unordered_set<std::string> suffixes_;
    std::size_t max_rule_labels_ = 1;
};

// One entry per domain level, level 1 = registrable root, ascending. Each
// name is the direct child of the previous one.
struct LevelExpansion {
    struct Entry {
        std::string name;
        int level;
    };
    std::vector<Entry> names;
};

// Normalizes `text` and resolves its registrable root (suffix + one label).
// Throws Error with malformed_domain / bare_suffix / ip_literal.
std::pair<DomainName, DomainName> parse_and_root(std::string_view text, const SuffixRules& rules);

// Every suffix of `name` down to the registrable root. Levels above `level_cap`
// are dropped, so deep names count toward their capped ancestor.
LevelExpansion expand_levels(const DomainName& name, const SuffixRules& rules,
                             int level_cap = kDefaultLevelCap);

struct DomainEvent;

// Per-class multiset of level-expanded names (name -> count).
struct DomainFeatureSet {
    struct Entry {
        int level = 0;
        std::uint64_t count = 0;

        bool operator==(const Entry&) const = default;
    };

    std::string class_label;
    std::map<std::string, Entry> entries;
    std::uint64_t total_events = 0;
    std::uint64_t skipped_events = 0;
    int level_cap = kDefaultLevelCap;

    bool empty() const { return entries.empty(); }

    // Expands one parsed name into the set.
    void add_expansion(const LevelExpansion& expansion);

    // Merges another set built with the same level cap; counts add.
    void merge(const DomainFeatureSet& other);
};

using SkipDiagnostic = std::function<void(const DomainEvent& event, const Error& error)>;

// Folds an event stream into a feature set. Unparseable domains are skipped,
// tallied, and reported through `diag` when provided.
DomainFeatureSet accumulate_features(const std::vector<DomainEvent>& events,
                                     const std::string& label, const SuffixRules& rules,
                                     int level_cap = kDefaultLevelCap,
                                     const SkipDiagnostic& diag = nullptr);

} // namespace magnifier
