#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "magnifier/detector.hpp"

namespace magnifier {

// Truth label of samples that contain no device access.
inline const std::string kBackgroundLabel = "__background__";

using LabelSet = std::set<std::string>;

struct LabeledSample {
    std::string sample_id; // doubles as the event source
    std::vector<DomainEvent> events;
    LabelSet truth;

    bool is_background() const {
        return truth.size() == 1 && *truth.begin() == kBackgroundLabel;
    }
};

struct EvalReport {
    double dr = 0.0;
    double far = 0.0;
    std::map<std::string, std::pair<std::uint64_t, std::uint64_t>> per_class; // hits, misses
    std::uint64_t n_access = 0;
    std::uint64_t n_background = 0;
    std::string config_echo;
};

struct ConfidenceReport {
    double conf_correct = 0.0;
    double conf_wrong = 0.0;
    std::uint64_t n_samples = 0;

    double gap() const { return conf_correct - conf_wrong; }
};

// Fraction of samples whose predicted label set equals the truth exactly.
double detection_rate(const std::vector<LabeledSample>& samples,
                      const std::vector<LabelSet>& predictions);

// Fraction of background samples predicted as anything but background.
double false_alarm_rate(const std::vector<LabeledSample>& background,
                        const std::vector<LabelSet>& predictions);

// Exact-set DR/FAR plus the per-class breakdown over a mixed sample list.
EvalReport evaluate(const std::vector<LabeledSample>& samples,
                    const std::vector<LabelSet>& predictions);

// Mean score of each sample against its own class (conf_correct) and,
// divided by the class count, against the others (conf_wrong), under both
// fingerprint variants. Samples must carry exactly one non-background label.
std::pair<ConfidenceReport, ConfidenceReport> confidence_divergence(
    const FingerprintSet& set_pre, const FingerprintSet& set_post,
    const std::vector<LabeledSample>& samples, const SuffixRules& rules,
    const DetectionConfig& config);

// Synthetic corpus spec standing in for gateway captures: every class gets a
// proprietary multi-level tree under its own registrable root plus draws
// from a background pool shared by all classes.
struct SynthSpec {
    int n_classes = 8;
    int proprietary_domains_per_class = 20;
    int shared_background_domains = 50;
    int events_per_access = 28;
    int access_windows_per_class = 50;
    int background_windows = 500;
    double dns_cache_drop_fraction = 0.4;
    std::uint64_t seed = 42;

    int train_bursts = 10;
    int background_events_per_burst = 400;
    int background_window_min_events = 10;
    int background_window_max_events = 40;
    double window_spacing = 2.0;
    double window_spread = 10.0;

    void validate() const;
};

struct SyntheticCorpus {
    std::vector<std::string> class_labels;
    std::map<std::string, std::vector<std::string>> proprietary_domains;
    std::map<std::string, std::vector<DomainEvent>> training;
    // Initial access windows plus background windows (ScenarioB+D analogue).
    std::vector<LabeledSample> initial;
    // Repetitive access windows (drop fraction applied) plus background.
    std::vector<LabeledSample> repetitive;
};

SyntheticCorpus generate_synthetic(const SynthSpec& spec);

// Merges k single-class samples into one multi-device sample; labels must be
// pairwise distinct.
LabeledSample merge_samples(const std::vector<LabeledSample>& parts);

// Scores merged k-device windows and reports exact-set DR.
EvalReport multi_device_eval(const FingerprintSet& set, int k,
                             const std::vector<LabeledSample>& windows,
                             const SuffixRules& rules, const DetectionConfig& config);

// Classifies every sample as one standalone window.
struct SamplePrediction {
    std::map<std::string, double> scores;
    LabelSet matched;
};
std::vector<SamplePrediction> classify_samples(const FingerprintSet& set,
                                               const std::vector<LabeledSample>& samples,
                                               const SuffixRules& rules,
                                               const DetectionConfig& config);
std::vector<LabelSet> predict_samples(const FingerprintSet& set,
                                      const std::vector<LabeledSample>& samples,
                                      const SuffixRules& rules, const DetectionConfig& config);

// Re-thresholds a fixed score log at each epsilon in [lo, hi].
struct SweepPoint {
    double epsilon = 0.0;
    double dr = 0.0;
    double far = 0.0;
};
std::vector<SweepPoint> sweep_epsilon(
    const std::vector<LabeledSample>& samples,
    const std::vector<std::map<std::string, double>>& score_log, double lo, double hi,
    double step);

} // namespace magnifier
