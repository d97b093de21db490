#include "magnifier/distill.hpp"

#include <cmath>
#include <unordered_map>

namespace magnifier {

void DistillationParams::validate() const {
    if (!(sigma > 0.0)) throw Error(ErrorCode::invalid_config, "sigma must be positive");
}

std::vector<std::string> FingerprintSet::class_labels() const {
    std::vector<std::string> labels;
    labels.reserve(forests.size());
    for (const auto& [label, forest] : forests) labels.push_back(label);
    return labels;
}

void FingerprintSet::finalize() {
    calibration.clear();
    for (auto& [label, forest] : forests) {
        forest.build_score_index();
        double scale = 0.0;
        if (forest.total_nodes > 0)
            scale = forest.value_sum() / static_cast<double>(forest.total_nodes);
        calibration[label] = scale;
    }
}

double FingerprintSet::calibration_scale(const std::string& label) const {
    auto it = calibration.find(label);
    if (it == calibration.end() || !(it->second > 0.0)) return 1.0;
    return it->second;
}

FingerprintSet FingerprintSet::undistilled_variant() const {
    FingerprintSet variant(*this);
    for (auto& [label, forest] : variant.forests) {
        for (auto& [root, tree] : forest.trees) {
            auto reset = [](auto&& self, DnNode& node) -> void {
                node.distilled_value = static_cast<double>(node.raw_count);
                for (auto& [name, child] : node.children) self(self, child);
            };
            reset(reset, tree.root);
        }
    }
    variant.distilled = true;
    variant.finalize();
    return variant;
}

double path_contribution(const DecisionPath& path, const DistillationParams& params) {
    params.validate();
    double product = 1.0;
    for (std::size_t l = 0; l + 1 < path.steps.size(); ++l) {
        double parent = path.steps[l].effective;
        double child = path.steps[l + 1].effective;
        if (child == 0.0)
            throw Error(ErrorCode::zero_effective_count,
                        "path through " + path.steps[l + 1].node->name);
        product *= std::log(parent / child + params.sigma);
    }
    return product;
}

double tree_weight(const DnTree& tree, const DistillationParams& params) {
    params.validate();
    double sum = 0.0;
    for (const auto& path : decision_paths(tree)) {
        if (path.steps.back().effective == 0.0) continue; // structural-only path
        sum += path_contribution(path, params);
    }
    return std::log(sum + 1.0);
}

DnForest intra_balance(const DnForest& forest, const DistillationParams& params) {
    DnForest balanced = forest;
    balanced.clear_score_index();
    for (auto& [root, tree] : balanced.trees) {
        tree.weight = tree_weight(tree, params);
        auto apply = [&](auto&& self, DnNode& node) -> void {
            node.balanced_count = tree.weight * static_cast<double>(node.raw_count);
            for (auto& [name, child] : node.children) self(self, child);
        };
        apply(apply, tree.root);
    }
    return balanced;
}

void tfidf_distill(FingerprintSet& set) {
    if (set.distilled) throw Error(ErrorCode::already_distilled, "fingerprint set");
    if (!set.balanced) throw Error(ErrorCode::not_balanced, "run intra-class balancing first");

    // classes carrying an observed node of each name
    std::unordered_map<std::string, std::uint32_t> doc_freq;
    for (const auto& [label, forest] : set.forests) {
        for (const auto& [root, tree] : forest.trees) {
            auto tally = [&](auto&& self, const DnNode& node) -> void {
                if (node.raw_count > 0) doc_freq[node.name] += 1;
                for (const auto& [name, child] : node.children) self(self, child);
            };
            tally(tally, tree.root);
        }
    }

    for (auto& [label, forest] : set.forests) {
        double node_count = static_cast<double>(forest.total_nodes);
        for (auto& [root, tree] : forest.trees) {
            auto apply = [&](auto&& self, DnNode& node) -> void {
                if (node.balanced_count <= 0.0) {
                    node.distilled_value = 0.0;
                } else {
                    double df = static_cast<double>(doc_freq.at(node.name));
                    double tf = node.balanced_count / node_count;
                    double idf = node.balanced_count / df;
                    node.distilled_value = tf * idf * node.balanced_count;
                }
                for (auto& [name, child] : node.children) self(self, child);
            };
            apply(apply, tree.root);
        }
        forest.clear_score_index();
    }

    set.distilled = true;
    set.finalize();
}

FingerprintSet distill_fingerprints(const FingerprintSet& raw, const DistillationParams& params) {
    if (raw.distilled) throw Error(ErrorCode::already_distilled, "fingerprint set");
    params.validate();
    FingerprintSet out = raw;
    out.params = params;
    for (auto& [label, forest] : out.forests) forest = intra_balance(forest, params);
    out.balanced = true;
    tfidf_distill(out);
    return out;
}

} // namespace magnifier
