#pragma once

#include <cstdint>
#include <deque>
#include <queue>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include "magnifier/distill.hpp"
#include "magnifier/events.hpp"

namespace magnifier {

struct DetectionConfig {
    double tau = 15.0;        // window duration, seconds
    double epsilon = 0.4;     // score threshold
    double gamma = 0.5;       // collector coverage threshold
    bool collector_enabled = true;
    bool expand_test_side = true;
    bool trigger_any = false; // also open windows on TLS/HTTP events
    bool calibrated = true;   // divide scores by per-class self-replay scale
    double reorder_slack = 1.0;

    void validate() const;
};

// The per-source event slice a detection scores: all events from one source
// within tau seconds of the triggering event, with the deduplicated
// level-expanded name set observed in them.
struct DetectionWindow {
    std::string source;
    double start = 0.0;
    double end = 0.0;
    std::vector<DomainEvent> events;
    std::set<std::string> features;
};

struct Detection {
    DetectionWindow window;
    std::map<std::string, double> scores;
    std::set<std::string> matched_classes;
    std::vector<std::pair<std::string, std::string>> collector_fired; // (class, tree root)
};

// Builds a window's feature set from its events; parse failures are skipped.
void populate_features(DetectionWindow& window, const SuffixRules& rules,
                       const DetectionConfig& config, int level_cap);

DetectionWindow window_from_events(const std::vector<DomainEvent>& events,
                                   const SuffixRules& rules, const DetectionConfig& config,
                                   int level_cap);

// Raw fingerprint match of one window against one class forest: the sum of
// matched node values over the forest node count. Trees whose matched-node
// fraction exceeds gamma contribute all their values when the collector is
// on; those tree roots are reported. The forest must be distilled and
// indexed.
struct WindowScore {
    double score = 0.0;
    std::vector<std::string> fired_tree_roots;
};
WindowScore score_window(const DetectionWindow& window, const DnForest& forest,
                         const DetectionConfig& config);

// Scores every class independently; matched_classes holds every label whose
// (optionally calibrated) score exceeds epsilon. Empty set means background.
Detection classify_window(const DetectionWindow& window, const FingerprintSet& set,
                          const DetectionConfig& config);

// Streaming windower. Events arrive approximately time-ordered; events up to
// reorder_slack behind the high-water mark are buffered and reordered, older
// ones are rejected. A DNS event (any event with trigger_any) from a source
// with no open window opens [t, t+tau]; the window closes once any event
// passes t+tau, or at flush.
class WindowStream {
public:
    WindowStream(const SuffixRules& rules, const DetectionConfig& config, int level_cap);

    void push(const DomainEvent& event);
    void flush();

    bool pending() const { return !ready_.empty(); }
    DetectionWindow pop();

private:
    struct Open {
        DetectionWindow window;
    };
    struct Buffered {
        DomainEvent event;
        std::uint64_t seq;
        bool operator>(const Buffered& other) const {
            if (event.ts != other.event.ts) return event.ts > other.event.ts;
            return seq > other.seq;
        }
    };

    void process(const DomainEvent& event);
    void close_expired(double now);
    void emit(DetectionWindow&& window);

    using Expiry = std::pair<double, std::string>; // (window end, source)

    const SuffixRules& rules_;
    DetectionConfig config_;
    int level_cap_;
    double high_water_ = -1.0;
    std::uint64_t seq_ = 0;
    std::priority_queue<Buffered, std::vector<Buffered>, std::greater<>> reorder_;
    std::unordered_map<std::string, Open> open_;
    std::priority_queue<Expiry, std::vector<Expiry>, std::greater<>> expiry_;
    std::deque<DetectionWindow> ready_;
};

// WindowStream composed with classify_window. Detections come out in
// window-close order.
class StreamDetector {
public:
    StreamDetector(const FingerprintSet& set, const SuffixRules& rules,
                   const DetectionConfig& config);

    void push(const DomainEvent& event);
    void flush();

    bool pending() const { return !ready_.empty(); }
    Detection pop();

    std::uint64_t windows_emitted() const { return windows_emitted_; }

private:
    void drain_windows();

    const FingerprintSet& set_;
    DetectionConfig config_;
    WindowStream windows_;
    std::deque<Detection> ready_;
    std::uint64_t windows_emitted_ = 0;
};

std::string detection_to_line(const Detection& detection);
std::string detection_config_header(const DetectionConfig& config, const std::string& fp_digest);

} // namespace magnifier
