#include "magnifier/store.hpp"

#include <json.hpp>

#include <cmath>
#include <fstream>

namespace magnifier {

using nlohmann::json;

namespace {

json node_to_json(const DnNode& node) {
    return json{{"name", node.name},
                {"level", node.level},
                {"raw", node.raw_count},
                {"balanced", node.balanced_count},
                {"distilled", node.distilled_value}};
}

void collect_nodes(const DnNode& node, std::map<std::string, json>& out) {
    out[node.name] = node_to_json(node);
    for (const auto& [name, child] : node.children) collect_nodes(child, out);
}

double finite_number(const json& v, const char* what) {
    if (!v.is_number()) throw Error(ErrorCode::schema_violation, std::string(what) + " not a number");
    double d = v.get<double>();
    if (!std::isfinite(d) || d < 0.0)
        throw Error(ErrorCode::schema_violation, std::string(what) + " out of range");
    return d;
}

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

} // namespace

std::string fingerprints_to_string(const FingerprintSet& set) {
    json doc;
    doc["format_version"] = kFingerprintFormatVersion;
    doc["distilled"] = set.distilled;
    doc["balanced"] = set.balanced;
    doc["params"] = {{"sigma", set.params.sigma},
                     {"level_cap", set.level_cap},
                     {"suffix_digest", set.suffix_digest}};
    doc["meta"] = {{"total_events", set.total_events}};

    json calibration = json::object();
    for (const auto& [label, scale] : set.calibration) calibration[label] = scale;
    doc["calibration"] = calibration;

    json classes = json::array();
    for (const auto& [label, forest] : set.forests) {
        json trees = json::array();
        for (const auto& [root, tree] : forest.trees) {
            std::map<std::string, json> nodes;
            collect_nodes(tree.root, nodes);
            json node_array = json::array();
            for (auto& [name, node] : nodes) node_array.push_back(std::move(node));
            trees.push_back(
                json{{"root", root}, {"weight", tree.weight}, {"nodes", std::move(node_array)}});
        }
        classes.push_back(json{{"label", label}, {"trees", std::move(trees)}});
    }
    doc["classes"] = std::move(classes);
    return doc.dump(2) + "\n";
}

void save_fingerprints(const FingerprintSet& set, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::io_failure, "cannot write " + path);
    out << fingerprints_to_string(set);
    if (!out) throw Error(ErrorCode::io_failure, "short write to " + path);
}

FingerprintSet fingerprints_from_string(const std::string& text) {
    json doc = json::parse(text, nullptr, false);
    if (doc.is_discarded() || !doc.is_object())
        throw Error(ErrorCode::schema_violation, "not a fingerprint document");

    if (!doc.contains("format_version") || !doc["format_version"].is_number_integer())
        throw Error(ErrorCode::schema_violation, "missing format_version");
    int version = doc["format_version"].get<int>();
    if (version > kFingerprintFormatVersion || version < 1)
        throw Error(ErrorCode::unsupported_version, "format_version " + std::to_string(version));

    FingerprintSet set;
    try {
        set.distilled = doc.at("distilled").get<bool>();
        set.balanced = doc.at("balanced").get<bool>();
        const auto& params = doc.at("params");
        set.params.sigma = finite_number(params.at("sigma"), "sigma");
        set.level_cap = params.at("level_cap").get<int>();
        set.suffix_digest = params.at("suffix_digest").get<std::string>();
        set.total_events = doc.at("meta").at("total_events").get<std::uint64_t>();

        for (const auto& cls : doc.at("classes")) {
            std::string label = cls.at("label").get<std::string>();
            if (label.empty() || set.forests.count(label))
                throw Error(ErrorCode::schema_violation, "duplicate or empty class " + label);
            DnForest& forest = set.forests[label];
            forest.class_label = label;

            for (const auto& tree_doc : cls.at("trees")) {
                std::string root = tree_doc.at("root").get<std::string>();
                if (forest.trees.count(root))
                    throw Error(ErrorCode::schema_violation,
                                "duplicate tree root " + root + " in class " + label);
                DnTree& tree = forest.trees[root];
                tree.weight = finite_number(tree_doc.at("weight"), "weight");
                tree.root.name = root;
                tree.root.level = 1;

                std::size_t listed = 0;
                bool saw_root = false;
                for (const auto& node_doc : tree_doc.at("nodes")) {
                    std::string name = node_doc.at("name").get<std::string>();
                    int level = node_doc.at("level").get<int>();
                    if (level < 1)
                        throw Error(ErrorCode::schema_violation, "bad level for " + name);
                    auto labels = split_labels(name);
                    if (labels.size() < static_cast<std::size_t>(level) + 1)
                        throw Error(ErrorCode::schema_violation, "level/label mismatch: " + name);

                    DnNode* node = &tree.root;
                    if (level == 1) {
                        if (name != root)
                            throw Error(ErrorCode::schema_violation,
                                        "node " + name + " outside tree " + root);
                        saw_root = true;
                    } else {
                        std::string expect_root;
                        for (std::size_t i = static_cast<std::size_t>(level) - 1; i < labels.size(); ++i) {
                            if (!expect_root.empty()) expect_root += '.';
                            expect_root += labels[i];
                        }
                        if (expect_root != root)
                            throw Error(ErrorCode::schema_violation,
                                        "node " + name + " outside tree " + root);
                        for (int l = 2; l <= level; ++l) {
                            std::string child_name;
                            for (std::size_t i = static_cast<std::size_t>(level - l);
                                 i < labels.size(); ++i) {
                                if (!child_name.empty()) child_name += '.';
                                child_name += labels[i];
                            }
                            auto [it, inserted] = node->children.try_emplace(child_name);
                            node = &it->second;
                            if (inserted) {
                                node->name = child_name;
                                node->level = l;
                            }
                        }
                    }
                    node->raw_count = node_doc.at("raw").get<std::uint64_t>();
                    node->balanced_count = finite_number(node_doc.at("balanced"), "balanced");
                    node->distilled_value = finite_number(node_doc.at("distilled"), "distilled");
                    ++listed;
                }
                if (!saw_root)
                    throw Error(ErrorCode::schema_violation, "tree " + root + " missing its root node");
                tree.recount();
                if (tree.node_count != listed)
                    throw Error(ErrorCode::schema_violation,
                                "tree " + root + " has unlisted intermediate nodes");
            }
            forest.total_nodes = 0;
            for (auto& [root, tree] : forest.trees) forest.total_nodes += tree.node_count;
        }

        if (doc.contains("calibration")) {
            for (const auto& [label, scale] : doc.at("calibration").items()) {
                if (!set.forests.count(label))
                    throw Error(ErrorCode::schema_violation, "calibration for unknown class " + label);
                set.calibration[label] = finite_number(scale, "calibration scale");
            }
        }
    } catch (const Error&) {
        throw;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::schema_violation, e.what());
    }

    // calibration stays exactly as stored; distillation is what records it
    for (auto& [label, forest] : set.forests) forest.build_score_index();
    return set;
}

FingerprintSet load_fingerprints(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::file_unreadable, "cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return fingerprints_from_string(text);
}

} // namespace magnifier
