#include "magnifier/detector.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>

namespace magnifier {

using nlohmann::json;

void DetectionConfig::validate() const {
    if (!(tau > 0.0)) throw Error(ErrorCode::invalid_config, "tau must be positive");
    if (!(epsilon > 0.0)) throw Error(ErrorCode::invalid_config, "epsilon must be positive");
    if (!(gamma > 0.0) || gamma > 1.0)
        throw Error(ErrorCode::invalid_config, "gamma must be in (0, 1]");
    if (reorder_slack < 0.0)
        throw Error(ErrorCode::invalid_config, "reorder slack must be non-negative");
}

void populate_features(DetectionWindow& window, const SuffixRules& rules,
                       const DetectionConfig& config, int level_cap) {
    window.features.clear();
    for (const auto& event : window.events) {
        try {
            auto [name, root] = parse_and_root(event.domain, rules);
            if (config.expand_test_side) {
                for (auto& entry : expand_levels(name, rules, level_cap).names)
                    window.features.insert(std::move(entry.name));
            } else {
                window.features.insert(name.text());
            }
        } catch (const Error&) {
            // unparseable observation, no feature
        }
    }
}

DetectionWindow window_from_events(const std::vector<DomainEvent>& events,
                                   const SuffixRules& rules, const DetectionConfig& config,
                                   int level_cap) {
    DetectionWindow window;
    window.events = events;
    if (!events.empty()) {
        window.source = events.front().src;
        double lo = events.front().ts, hi = events.front().ts;
        for (const auto& e : events) {
            lo = std::min(lo, e.ts);
            hi = std::max(hi, e.ts);
        }
        window.start = lo;
        window.end = hi;
    }
    populate_features(window, rules, config, level_cap);
    return window;
}

WindowScore score_window(const DetectionWindow& window, const DnForest& forest,
                         const DetectionConfig& config) {
    if (!forest.indexed())
        throw Error(ErrorCode::not_distilled, "forest " + forest.class_label + " not prepared");

    struct TreeHit {
        std::size_t matched = 0;
        double sum = 0.0;
    };
    std::unordered_map<std::uint32_t, TreeHit> hits;
    const auto& index = forest.name_index();
    for (const auto& name : window.features) {
        auto it = index.find(name);
        if (it == index.end()) continue;
        auto& hit = hits[it->second.tree_index];
        hit.matched += 1;
        hit.sum += it->second.value;
    }

    WindowScore result;
    if (forest.total_nodes == 0) return result;
    const auto& aggregates = forest.tree_aggregates();
    for (const auto& [tree_index, hit] : hits) {
        const auto& agg = aggregates[tree_index];
        double coverage = static_cast<double>(hit.matched) / static_cast<double>(agg.node_count);
        if (config.collector_enabled && coverage > config.gamma) {
            result.score += agg.value_sum;
            result.fired_tree_roots.push_back(agg.root);
        } else {
            result.score += hit.sum;
        }
    }
    result.score /= static_cast<double>(forest.total_nodes);
    std::sort(result.fired_tree_roots.begin(), result.fired_tree_roots.end());
    return result;
}

Detection classify_window(const DetectionWindow& window, const FingerprintSet& set,
                          const DetectionConfig& config) {
    if (!set.distilled) throw Error(ErrorCode::not_distilled, "fingerprint set");
    Detection detection;
    detection.window = window;
    for (const auto& [label, forest] : set.forests) {
        WindowScore ws = score_window(window, forest, config);
        double score = ws.score;
        if (config.calibrated) score /= set.calibration_scale(label);
        detection.scores[label] = score;
        if (score > config.epsilon) detection.matched_classes.insert(label);
        for (auto& root : ws.fired_tree_roots) detection.collector_fired.emplace_back(label, root);
    }
    return detection;
}

WindowStream::WindowStream(const SuffixRules& rules, const DetectionConfig& config, int level_cap)
    : rules_(rules), config_(config), level_cap_(level_cap) {
    config_.validate();
}

void WindowStream::push(const DomainEvent& event) {
    if (high_water_ >= 0.0 && event.ts < high_water_ - config_.reorder_slack)
        throw Error(ErrorCode::out_of_order,
                    "event at " + std::to_string(event.ts) + " behind high water " +
                        std::to_string(high_water_));
    high_water_ = std::max(high_water_, event.ts);
    reorder_.push(Buffered{event, seq_++});
    while (!reorder_.empty() && reorder_.top().event.ts <= high_water_ - config_.reorder_slack) {
        DomainEvent next = reorder_.top().event;
        reorder_.pop();
        process(next);
    }
}

void WindowStream::flush() {
    while (!reorder_.empty()) {
        DomainEvent next = reorder_.top().event;
        reorder_.pop();
        process(next);
    }
    close_expired(std::numeric_limits<double>::infinity());
}

DetectionWindow WindowStream::pop() {
    DetectionWindow window = std::move(ready_.front());
    ready_.pop_front();
    return window;
}

void WindowStream::process(const DomainEvent& event) {
    close_expired(event.ts);
    auto it = open_.find(event.src);
    if (it != open_.end()) {
        it->second.window.events.push_back(event);
        return;
    }
    if (event.proto == Protocol::dns || config_.trigger_any) {
        Open open;
        open.window.source = event.src;
        open.window.start = event.ts;
        open.window.end = event.ts + config_.tau;
        open.window.events.push_back(event);
        expiry_.push({open.window.end, event.src});
        open_.emplace(event.src, std::move(open));
    }
}

void WindowStream::close_expired(double now) {
    // a source reopens only after its previous window closed, so every
    // expiry entry matches a live window exactly once
    while (!expiry_.empty() && expiry_.top().first < now) {
        auto it = open_.find(expiry_.top().second);
        expiry_.pop();
        if (it == open_.end()) continue;
        DetectionWindow window = std::move(it->second.window);
        open_.erase(it);
        emit(std::move(window));
    }
}

void WindowStream::emit(DetectionWindow&& window) {
    populate_features(window, rules_, config_, level_cap_);
    ready_.push_back(std::move(window));
}

StreamDetector::StreamDetector(const FingerprintSet& set, const SuffixRules& rules,
                               const DetectionConfig& config)
    : set_(set), config_(config), windows_(rules, config, set.level_cap) {
    if (!set.distilled) throw Error(ErrorCode::not_distilled, "fingerprint set");
}

void StreamDetector::push(const DomainEvent& event) {
    windows_.push(event);
    drain_windows();
}

void StreamDetector::flush() {
    windows_.flush();
    drain_windows();
}

Detection StreamDetector::pop() {
    Detection detection = std::move(ready_.front());
    ready_.pop_front();
    return detection;
}

void StreamDetector::drain_windows() {
    while (windows_.pending()) {
        ready_.push_back(classify_window(windows_.pop(), set_, config_));
        ++windows_emitted_;
    }
}

std::string detection_to_line(const Detection& detection) {
    json record;
    record["src"] = detection.window.source;
    record["window_start"] = detection.window.start;
    json scores = json::object();
    for (const auto& [label, score] : detection.scores) scores[label] = score;
    record["scores"] = scores;
    record["matched"] = json::array();
    for (const auto& label : detection.matched_classes) record["matched"].push_back(label);
    record["collector"] = json::array();
    for (const auto& [label, root] : detection.collector_fired)
        record["collector"].push_back(label + "/" + root);
    return record.dump();
}

std::string detection_config_header(const DetectionConfig& config, const std::string& fp_digest) {
    json header;
    header["config"] = {
        {"tau", config.tau},
        {"epsilon", config.epsilon},
        {"gamma", config.gamma},
        {"collector", config.collector_enabled},
        {"expand_test_side", config.expand_test_side},
        {"trigger_any", config.trigger_any},
        {"calibrated", config.calibrated},
        {"reorder_slack", config.reorder_slack},
        {"fp_digest", fp_digest},
    };
    return header.dump();
}

} // namespace magnifier
