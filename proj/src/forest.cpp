#include "magnifier/forest.hpp"

#include <algorithm>
#include <unordered_map>

#include "magnifier/error.hpp"

namespace magnifier {

namespace {

std::vector<std::string> split_labels(const std::string& name) {
    std::vector<std::string> labels;
    std::size_t pos = 0;
    while (pos <= name.size()) {
        std::size_t dot = name.find('.', pos);
        std::size_t end = dot == std::string::npos ? name.size() : dot;
        labels.push_back(name.substr(pos, end - pos));
        if (dot == std::string::npos) break;
        pos = dot + 1;
    }
    return labels;
}

std::string join_from(const std::vector<std::string>& labels, std::size_t first) {
    std::string out;
    for (std::size_t i = first; i < labels.size(); ++i) {
        if (!out.empty()) out += '.';
        out += labels[i];
    }
    return out;
}

template <typename Node, typename Fn>
void walk(Node& node, Fn&& fn) {
    fn(node);
    for (auto& [name, child] : node.children) walk(child, fn);
}

void compute_effective(const DnNode& node, std::unordered_map<const DnNode*, double>& memo) {
    if (node.is_leaf()) {
        memo[&node] = static_cast<double>(node.raw_count);
        return;
    }
    double sum = 0.0;
    for (const auto& [name, child] : node.children) {
        compute_effective(child, memo);
        sum += memo.at(&child);
    }
    memo[&node] = sum;
}

} // namespace

std::size_t DnTree::leaf_count() const {
    std::size_t leaves = 0;
    walk(root, [&](const DnNode& n) {
        if (n.is_leaf()) ++leaves;
    });
    return leaves;
}

void DnTree::recount() {
    node_count = 0;
    walk(root, [&](const DnNode&) { ++node_count; });
}

const DnTree* DnForest::tree(const std::string& root) const {
    auto it = trees.find(root);
    return it == trees.end() ? nullptr : &it->second;
}

DnNode* DnForest::find_node(const std::string& name) {
    for (auto& [root, tree] : trees) {
        DnNode* found = nullptr;
        walk(tree.root, [&](DnNode& n) {
            if (n.name == name) found = &n;
        });
        if (found) return found;
    }
    return nullptr;
}

const DnNode* DnForest::find_node(const std::string& name) const {
    return const_cast<DnForest*>(this)->find_node(name);
}

void DnForest::build_score_index() {
    name_index_.clear();
    aggregates_.clear();
    aggregates_.reserve(trees.size());
    std::uint32_t index = 0;
    for (const auto& [root, tree] : trees) {
        TreeAggregate agg;
        agg.root = root;
        walk(tree.root, [&](const DnNode& n) {
            agg.node_count += 1;
            agg.value_sum += n.distilled_value;
            name_index_[n.name] = MatchRef{index, n.distilled_value};
        });
        aggregates_.push_back(std::move(agg));
        ++index;
    }
    indexed_ = true;
}

double DnForest::value_sum() const {
    double sum = 0.0;
    for (const auto& [root, tree] : trees)
        walk(tree.root, [&](const DnNode& n) { sum += n.distilled_value; });
    return sum;
}

DnForest build_forest(const DomainFeatureSet& features) {
    if (features.empty()) throw Error(ErrorCode::empty_feature_set, features.class_label);

    DnForest forest;
    forest.class_label = features.class_label;

    for (const auto& [name, entry] : features.entries) {
        if (entry.level < 1)
            throw Error(ErrorCode::schema_violation, "bad level for " + name);
        auto labels = split_labels(name);
        std::size_t level = static_cast<std::size_t>(entry.level);
        if (labels.size() < level + 1)
            throw Error(ErrorCode::schema_violation, "level/label mismatch for " + name);

        std::string root_name = join_from(labels, level - 1);
        DnTree& tree = forest.trees[root_name];
        if (tree.root.name.empty()) {
            tree.root.name = root_name;
            tree.root.level = 1;
        }

        DnNode* node = &tree.root;
        for (std::size_t l = 2; l <= level; ++l) {
            std::string child_name = join_from(labels, level - l);
            auto [it, inserted] = node->children.try_emplace(child_name);
            node = &it->second;
            if (inserted) {
                node->name = child_name;
                node->level = static_cast<int>(l);
            }
        }
        node->raw_count += entry.count;
        node->balanced_count = static_cast<double>(node->raw_count);
        node->distilled_value = static_cast<double>(node->raw_count);
    }

    forest.total_nodes = 0;
    for (auto& [root, tree] : forest.trees) {
        // structural parents start out with their raw count mirrored into the
        // later stages' fields as well
        walk(tree.root, [](DnNode& n) {
            n.balanced_count = static_cast<double>(n.raw_count);
            n.distilled_value = static_cast<double>(n.raw_count);
        });
        tree.recount();
        forest.total_nodes += tree.node_count;
    }
    return forest;
}

double effective_count(const DnNode& node) {
    if (node.is_leaf()) return static_cast<double>(node.raw_count);
    double sum = 0.0;
    for (const auto& [name, child] : node.children) sum += effective_count(child);
    return sum;
}

std::vector<DecisionPath> decision_paths(const DnTree& tree) {
    std::unordered_map<const DnNode*, double> memo;
    compute_effective(tree.root, memo);

    std::vector<DecisionPath> paths;
    std::vector<DecisionPath::Step> stack;

    auto descend = [&](auto&& self, const DnNode& node) -> void {
        stack.push_back({&node, memo.at(&node)});
        if (node.is_leaf()) {
            paths.push_back(DecisionPath{stack});
        } else {
            for (const auto& [name, child] : node.children) self(self, child);
        }
        stack.pop_back();
    };
    descend(descend, tree.root);

    std::sort(paths.begin(), paths.end(), [](const DecisionPath& a, const DecisionPath& b) {
        return a.leaf()->name < b.leaf()->name;
    });
    return paths;
}

DomainFeatureSet features_from_forest(const DnForest& forest, int level_cap) {
    DomainFeatureSet features;
    features.class_label = forest.class_label;
    features.level_cap = level_cap;
    for (const auto& [root, tree] : forest.trees) {
        walk(tree.root, [&](const DnNode& n) {
            if (n.raw_count == 0) return;
            auto& slot = features.entries[n.name];
            slot.level = n.level;
            slot.count += n.raw_count;
            if (n.level == 1) features.total_events += n.raw_count;
        });
    }
    return features;
}

} // namespace magnifier
