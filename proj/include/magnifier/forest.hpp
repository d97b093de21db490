#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "magnifier/domain.hpp"

namespace magnifier {

// A dnTree is a rooted tree of domain names sharing one registrable root;
// an edge links a name to its direct subdomains. For the feature set
//
//     apple.com:2  m.apple.com:2  store.m.apple.com:1
//
// the tree looks like
//
//     apple.com(2) --> m.apple.com(2) --> store.m.apple.com(1)
//
// Each node carries three values: the raw observation count n, the balanced
// count after intra-class weighting, and the distilled value after TF-IDF.
// Nodes inserted purely to connect structure carry raw_count 0.
struct DnNode {
    std::string name;
    int level = 1;
    std::uint64_t raw_count = 0;
    double balanced_count = 0.0;
    double distilled_value = 0.0;
    std::map<std::string, DnNode> children;

    bool is_leaf() const { return children.empty(); }
    bool is_structural() const { return raw_count == 0; }
};

struct DnTree {
    DnNode root;
    std::size_t node_count = 0;
    double weight = 1.0;

    std::size_t leaf_count() const;
    void recount();
};

// The per-class fingerprint: one tree per distinct registrable root.
class DnForest {
public:
    std::string class_label;
    std::map<std::string, DnTree> trees;
    std::size_t total_nodes = 0;

    const DnTree* tree(const std::string& root) const;
    DnNode* find_node(const std::string& name);
    const DnNode* find_node(const std::string& name) const;

    // Scoring index: name -> (tree ordinal, current node value), plus
    // per-tree aggregates. Must be rebuilt after any value change.
    struct MatchRef {
        std::uint32_t tree_index = 0;
        double value = 0.0;
    };
    struct TreeAggregate {
        std::string root;
        std::size_t node_count = 0;
        double value_sum = 0.0;
    };

    void build_score_index();
    void clear_score_index() { indexed_ = false; name_index_.clear(); aggregates_.clear(); }
    bool indexed() const { return indexed_; }
    const std::unordered_map<std::string, MatchRef>& name_index() const { return name_index_; }
    const std::vector<TreeAggregate>& tree_aggregates() const { return aggregates_; }

    // Sum of node values (distilled_value) over the whole forest.
    double value_sum() const;

private:
    bool indexed_ = false;
    std::unordered_map<std::string, MatchRef> name_index_;
    std::vector<TreeAggregate> aggregates_;
};

// Root-to-leaf sequence paired with effective counts.
struct DecisionPath {
    struct Step {
        const DnNode* node = nullptr;
        double effective = 0.0;
    };
    std::vector<Step> steps;

    std::size_t length() const { return steps.size(); }
    const DnNode* leaf() const { return steps.back().node; }
};

// One tree per distinct registrable root; every entry becomes exactly one
// node carrying its count. Missing intermediate names are repaired with
// raw_count 0. Throws Error(empty_feature_set).
DnForest build_forest(const DomainFeatureSet& features);

// Eq-style effective count: a leaf returns its own raw count, an internal
// node the sum of its children's effective counts (its own count is not
// part of the sum).
double effective_count(const DnNode& node);

// Exactly one path per leaf, ordered lexicographically by leaf name.
std::vector<DecisionPath> decision_paths(const DnTree& tree);

// Inverse of build_forest: nodes with positive counts back to a feature set.
DomainFeatureSet features_from_forest(const DnForest& forest, int level_cap);

} // namespace magnifier
