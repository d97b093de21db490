#pragma once

#include <map>
#include <string>

#include "magnifier/forest.hpp"

namespace magnifier {

struct DistillationParams {
    double sigma = 1.0; // noise-tolerance constant added inside each log

    void validate() const;
};

// Forests for all device classes plus everything needed to score against
// them. `calibration` holds the per-class self-replay score that rescales
// detection scores to a common [0,1]-ish range.
struct FingerprintSet {
    std::map<std::string, DnForest> forests;
    DistillationParams params;
    int level_cap = kDefaultLevelCap;
    std::string suffix_digest;
    bool balanced = false;
    bool distilled = false;
    std::uint64_t total_events = 0;
    std::map<std::string, double> calibration;

    std::vector<std::string> class_labels() const;

    // Builds score indexes and calibration scales from current values.
    void finalize();

    double calibration_scale(const std::string& label) const;

    // Copy whose node values are the raw counts, finalized; the pre-distillation
    // variant used for ablation runs.
    FingerprintSet undistilled_variant() const;
};

// Product over consecutive path steps of log(f(parent)/f(child) + sigma);
// a single-node path is the empty product, 1. Paths through zero-count
// structural leaves contribute 0 and are skipped by callers.
double path_contribution(const DecisionPath& path, const DistillationParams& params);

// W = log(sum of path contributions + 1).
double tree_weight(const DnTree& tree, const DistillationParams& params);

// Stage one: balanced_count = W * raw_count on every node; returns a fresh
// forest with per-tree weights stored.
DnForest intra_balance(const DnForest& forest, const DistillationParams& params);

// Stage two, tree-based TF-IDF over balanced counts:
//   TF  = balanced / node count of the class forest
//   IDF = balanced / number of classes carrying an observed node of that name
//   distilled = TF * IDF * balanced
// Structural nodes are excluded from the document-frequency tally. Requires
// every forest balanced; marks the set distilled and finalizes it.
void tfidf_distill(FingerprintSet& set);

// intra_balance over every class then tfidf_distill, as a fresh copy.
FingerprintSet distill_fingerprints(const FingerprintSet& raw, const DistillationParams& params);

} // namespace magnifier
