#include "magnifier/evaluation.hpp"

#include <algorithm>
#include <cmath>

namespace magnifier {

namespace {

// Deterministic helpers over mt19937_64; std distributions are not
// byte-stable across standard libraries.
struct Rng {
    std::mt19937_64 gen;
    explicit Rng(std::uint64_t seed) : gen(seed) {}

    std::uint64_t below(std::uint64_t n) { return n == 0 ? 0 : gen() % n; }
    int range(int lo, int hi) { return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo + 1))); }
    double unit() { return static_cast<double>(gen() >> 11) * 0x1.0p-53; }
    bool chance(double p) { return unit() < p; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i)
            std::swap(v[i - 1], v[below(i)]);
    }
};

const std::vector<std::string> kClassWords = {
    "aster",  "borealis", "cinder", "drift",  "ember",  "flux",   "garnet", "halcyon", "indigo",
    "juno",   "krait",    "lumen",  "mistral", "nimbus", "onyx",   "pylon",  "quartz",  "rondo",
    "sable",  "tundra",   "umbra",  "vertex", "willow", "xenon",  "yonder", "zephyr",  "arbor",
    "basalt", "coral",    "dune",   "evoke",  "fjord"};

const std::vector<std::string> kServiceWords = {
    "api",  "cdn",  "push", "auth",  "ota",   "store", "img", "log",    "cfg", "sync",
    "time", "stat", "geo",  "msg",   "ads",   "probe", "mdm", "cloud",  "edge", "vault"};

const std::vector<std::string> kBackgroundWords = {
    "news",  "video", "music", "shop",  "social", "mail", "game", "weather", "search", "cast",
    "feed",  "wiki",  "blog",  "photo", "chat",   "bank", "map",  "sport",   "radio",  "clips"};

const std::vector<std::string> kBackgroundTlds = {"net", "org", "io", "info", "co"};

Protocol random_protocol(Rng& rng) {
    switch (rng.below(3)) {
    case 0: return Protocol::dns;
    case 1: return Protocol::tls;
    default: return Protocol::http;
    }
}

struct ClassProfile {
    std::string label;
    std::string root;                 // root of the structural tree
    std::vector<std::string> domains; // observable names across all trees
    std::vector<int> levels;
    std::vector<int> popularity; // per-burst access frequency of each domain
};

// A class profile is one deeper structural tree under <word>mobile.com plus
// a handful of service trees (<svc><word>.com) that each pair one hot
// endpoint with a low-rate config chain. The hot endpoints carry most of the
// traffic, the chain names keep a tree recognizable in windows where the hot
// name is missing.
ClassProfile make_profile(const std::string& word, int n_domains, int level_cap, Rng& rng) {
    ClassProfile profile;
    profile.label = word;
    profile.root = word + "mobile.com";

    int service_trees = n_domains / 4;
    int structural = n_domains - 3 * service_trees;
    if (structural < 1) {
        service_trees = std::max(0, (n_domains - 1) / 3);
        structural = n_domains - 3 * service_trees;
    }

    std::vector<std::pair<std::string, int>> names = {{profile.root, 1}};
    std::set<std::string> used = {profile.root};
    while (static_cast<int>(profile.domains.size()) < structural) {
        const auto& [parent_name, parent_level] = names[rng.below(names.size())];
        if (parent_level >= level_cap) continue;
        int level = parent_level + 1;
        std::string label = kServiceWords[rng.below(kServiceWords.size())];
        std::string name = label + "." + parent_name;
        if (used.count(name)) {
            name = label + std::to_string(rng.below(90) + 10) + "." + parent_name;
            if (used.count(name)) continue;
        }
        used.insert(name);
        names.push_back({name, level}); // may invalidate parent_name/parent_level
        profile.domains.push_back(name);
        profile.levels.push_back(level);
        profile.popularity.push_back(1);
    }

    for (int t = 0; t < service_trees; ++t) {
        std::string tree_root = kServiceWords[t % kServiceWords.size()] + word + ".com";
        double u = rng.unit();
        profile.domains.push_back("api." + tree_root);
        profile.levels.push_back(2);
        profile.popularity.push_back(u < 0.3 ? 16 : u < 0.7 ? 8 : 4);
        // once-ever config fetches: structure and window coverage, no weight
        profile.domains.push_back("cfg." + tree_root);
        profile.levels.push_back(2);
        profile.popularity.push_back(0);
        profile.domains.push_back("beta.cfg." + tree_root);
        profile.levels.push_back(3);
        profile.popularity.push_back(0);
    }
    return profile;
}

} // namespace

double detection_rate(const std::vector<LabeledSample>& samples,
                      const std::vector<LabelSet>& predictions) {
    if (samples.size() != predictions.size())
        throw Error(ErrorCode::length_mismatch,
                    std::to_string(samples.size()) + " samples vs " +
                        std::to_string(predictions.size()) + " predictions");
    if (samples.empty()) return 0.0;
    std::size_t exact = 0;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].truth == predictions[i]) ++exact;
    return static_cast<double>(exact) / static_cast<double>(samples.size());
}

double false_alarm_rate(const std::vector<LabeledSample>& background,
                        const std::vector<LabelSet>& predictions) {
    if (background.size() != predictions.size())
        throw Error(ErrorCode::length_mismatch,
                    std::to_string(background.size()) + " samples vs " +
                        std::to_string(predictions.size()) + " predictions");
    if (background.empty()) return 0.0;
    std::size_t alarms = 0;
    for (std::size_t i = 0; i < background.size(); ++i) {
        if (!background[i].is_background())
            throw Error(ErrorCode::non_background_truth, background[i].sample_id);
        if (!predictions[i].empty()) ++alarms;
    }
    return static_cast<double>(alarms) / static_cast<double>(background.size());
}

EvalReport evaluate(const std::vector<LabeledSample>& samples,
                    const std::vector<LabelSet>& predictions) {
    if (samples.size() != predictions.size())
        throw Error(ErrorCode::length_mismatch,
                    std::to_string(samples.size()) + " samples vs " +
                        std::to_string(predictions.size()) + " predictions");
    EvalReport report;
    std::size_t access_exact = 0, background_alarms = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const auto& sample = samples[i];
        const auto& predicted = predictions[i];
        if (sample.is_background()) {
            report.n_background += 1;
            if (!predicted.empty()) ++background_alarms;
            continue;
        }
        report.n_access += 1;
        bool exact = sample.truth == predicted;
        if (exact) ++access_exact;
        for (const auto& label : sample.truth) {
            auto& [hits, misses] = report.per_class[label];
            if (exact)
                hits += 1;
            else
                misses += 1;
        }
    }
    report.dr = report.n_access ? static_cast<double>(access_exact) / report.n_access : 0.0;
    report.far =
        report.n_background ? static_cast<double>(background_alarms) / report.n_background : 0.0;
    return report;
}

std::vector<SamplePrediction> classify_samples(const FingerprintSet& set,
                                               const std::vector<LabeledSample>& samples,
                                               const SuffixRules& rules,
                                               const DetectionConfig& config) {
    std::vector<SamplePrediction> predictions;
    predictions.reserve(samples.size());
    for (const auto& sample : samples) {
        DetectionWindow window = window_from_events(sample.events, rules, config, set.level_cap);
        Detection detection = classify_window(window, set, config);
        predictions.push_back({std::move(detection.scores), std::move(detection.matched_classes)});
    }
    return predictions;
}

std::vector<LabelSet> predict_samples(const FingerprintSet& set,
                                      const std::vector<LabeledSample>& samples,
                                      const SuffixRules& rules, const DetectionConfig& config) {
    std::vector<LabelSet> out;
    out.reserve(samples.size());
    for (auto& prediction : classify_samples(set, samples, rules, config))
        out.push_back(std::move(prediction.matched));
    return out;
}

std::pair<ConfidenceReport, ConfidenceReport> confidence_divergence(
    const FingerprintSet& set_pre, const FingerprintSet& set_post,
    const std::vector<LabeledSample>& samples, const SuffixRules& rules,
    const DetectionConfig& config) {
    if (samples.empty()) throw Error(ErrorCode::empty_samples, "confidence divergence");

    auto report_for = [&](const FingerprintSet& set) {
        ConfidenceReport report;
        double n_classes = static_cast<double>(set.forests.size());
        for (const auto& sample : samples) {
            if (sample.truth.size() != 1 || sample.is_background())
                throw Error(ErrorCode::invalid_config,
                            "confidence samples must carry one class label");
            const std::string& own = *sample.truth.begin();
            DetectionWindow window = window_from_events(sample.events, rules, config, set.level_cap);
            Detection detection = classify_window(window, set, config);
            double wrong = 0.0;
            for (const auto& [label, score] : detection.scores) {
                if (label == own)
                    report.conf_correct += score;
                else
                    wrong += score;
            }
            report.conf_wrong += wrong / n_classes;
            report.n_samples += 1;
        }
        report.conf_correct /= static_cast<double>(report.n_samples);
        report.conf_wrong /= static_cast<double>(report.n_samples);
        return report;
    };

    return {report_for(set_pre), report_for(set_post)};
}

void SynthSpec::validate() const {
    if (n_classes < 1 || n_classes > static_cast<int>(kClassWords.size()))
        throw Error(ErrorCode::invalid_config,
                    "n_classes must be in [1, " + std::to_string(kClassWords.size()) + "]");
    if (proprietary_domains_per_class < 1 || shared_background_domains < 1 ||
        events_per_access < 1 || access_windows_per_class < 1 || background_windows < 0 ||
        train_bursts < 1 || background_events_per_burst < 0)
        throw Error(ErrorCode::invalid_config, "synthetic counts must be positive");
    if (dns_cache_drop_fraction < 0.0 || dns_cache_drop_fraction >= 1.0)
        throw Error(ErrorCode::invalid_config, "drop fraction must be in [0, 1)");
    if (background_window_min_events < 1 ||
        background_window_max_events < background_window_min_events)
        throw Error(ErrorCode::invalid_config, "bad background window event bounds");
    if (!(window_spacing > 0.0) || !(window_spread > 0.0))
        throw Error(ErrorCode::invalid_config, "window spacing/spread must be positive");
}

SyntheticCorpus generate_synthetic(const SynthSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    SyntheticCorpus corpus;

    std::vector<ClassProfile> profiles;
    for (int c = 0; c < spec.n_classes; ++c) {
        profiles.push_back(
            make_profile(kClassWords[c], spec.proprietary_domains_per_class, kDefaultLevelCap, rng));
        corpus.class_labels.push_back(profiles.back().label);
        corpus.proprietary_domains[profiles.back().label] = profiles.back().domains;
    }

    std::vector<std::string> pool;
    for (int i = 0; i < spec.shared_background_domains; ++i) {
        std::string root = kBackgroundWords[i % kBackgroundWords.size()] + std::to_string(i) + "." +
                           kBackgroundTlds[i % kBackgroundTlds.size()];
        pool.push_back(i % 10 < 7 ? root : "www." + root);
    }
    // big-brand service roots occasionally show up as plain background on
    // every device (ad and CDN ecosystems), which puts them in every class's
    // forest and raises their document frequency
    std::vector<std::string> brand_roots;
    for (const auto& profile : profiles)
        for (std::size_t d = 0; d < profile.domains.size(); ++d)
            if (profile.levels[d] == 2 && profile.domains[d].rfind("api.", 0) == 0)
                brand_roots.push_back(profile.domains[d].substr(4));
    auto draw_background = [&]() -> const std::string& {
        if (!brand_roots.empty() && rng.unit() < 0.1)
            return brand_roots[rng.below(brand_roots.size())];
        return pool[rng.below(pool.size())];
    };

    // ScenarioA analogue: clean per-class bursts, background-heavy by volume
    for (const auto& profile : profiles) {
        std::vector<DomainEvent>& events = corpus.training[profile.label];
        double ts = 0.0;
        std::string src = "train-" + profile.label;
        for (int burst = 0; burst < spec.train_bursts; ++burst) {
            for (std::size_t d = 0; d < profile.domains.size(); ++d) {
                int pop = profile.popularity[d];
                int reps = pop > 0 ? pop + static_cast<int>(rng.below(2)) : (burst == 0 ? 1 : 0);
                for (int r = 0; r < reps; ++r) {
                    events.push_back({ts, src, random_protocol(rng), profile.domains[d]});
                    ts += 0.05;
                }
            }
            for (int i = 0; i < spec.background_events_per_burst; ++i) {
                events.push_back({ts, src, random_protocol(rng), draw_background()});
                ts += 0.05;
            }
        }
    }

    auto make_access_window = [&](const ClassProfile& profile, double t0, const std::string& src,
                                  double drop) {
        LabeledSample sample;
        sample.sample_id = src;
        sample.truth = {profile.label};

        std::vector<std::string> kept;
        for (const auto& domain : profile.domains)
            if (!rng.chance(drop)) kept.push_back(domain);
        if (kept.empty()) kept.push_back(profile.domains[rng.below(profile.domains.size())]);

        sample.events.push_back({t0, src, Protocol::dns, kept[rng.below(kept.size())]});
        for (const auto& domain : kept)
            sample.events.push_back(
                {t0 + 0.05 + rng.unit() * spec.window_spread, src, random_protocol(rng), domain});
        // background chatter is unaffected by the DNS cache, so the fill is
        // sized from the full profile, not the kept part
        int fill = spec.events_per_access - 1 - static_cast<int>(profile.domains.size());
        for (int i = 0; i < fill; ++i)
            sample.events.push_back({t0 + 0.05 + rng.unit() * spec.window_spread, src,
                                     random_protocol(rng), pool[rng.below(pool.size())]});
        std::stable_sort(sample.events.begin(), sample.events.end(),
                         [](const DomainEvent& a, const DomainEvent& b) { return a.ts < b.ts; });
        return sample;
    };

    auto make_background_window = [&](double t0, const std::string& src) {
        LabeledSample sample;
        sample.sample_id = src;
        sample.truth = {kBackgroundLabel};
        int n = rng.range(spec.background_window_min_events, spec.background_window_max_events);
        sample.events.push_back({t0, src, Protocol::dns, pool[rng.below(pool.size())]});
        for (int i = 1; i < n; ++i)
            sample.events.push_back(
                {t0 + 0.05 + rng.unit() * spec.window_spread, src, random_protocol(rng),
                 draw_background()});
        std::stable_sort(sample.events.begin(), sample.events.end(),
                         [](const DomainEvent& a, const DomainEvent& b) { return a.ts < b.ts; });
        return sample;
    };

    auto make_scenario = [&](double drop, const char* prefix) {
        std::vector<int> slots; // class index, or -1 for background
        for (int c = 0; c < spec.n_classes; ++c)
            for (int w = 0; w < spec.access_windows_per_class; ++w) slots.push_back(c);
        for (int w = 0; w < spec.background_windows; ++w) slots.push_back(-1);
        rng.shuffle(slots);

        std::vector<LabeledSample> samples;
        samples.reserve(slots.size());
        for (std::size_t i = 0; i < slots.size(); ++i) {
            double t0 = static_cast<double>(i) * spec.window_spacing;
            std::string src = std::string(prefix) + std::to_string(i);
            if (slots[i] < 0)
                samples.push_back(make_background_window(t0, src));
            else
                samples.push_back(make_access_window(profiles[slots[i]], t0, src, drop));
        }
        return samples;
    };

    corpus.initial = make_scenario(0.0, "b");
    corpus.repetitive = make_scenario(spec.dns_cache_drop_fraction, "c");
    return corpus;
}

LabeledSample merge_samples(const std::vector<LabeledSample>& parts) {
    if (parts.empty()) throw Error(ErrorCode::empty_samples, "merge of zero samples");
    LabeledSample merged;
    for (const auto& part : parts) {
        for (const auto& label : part.truth)
            if (!merged.truth.insert(label).second)
                throw Error(ErrorCode::duplicate_labels, label);
        if (!merged.sample_id.empty()) merged.sample_id += '+';
        merged.sample_id += part.sample_id;
    }
    for (const auto& part : parts) {
        double base = 0.0;
        if (!part.events.empty()) {
            base = part.events.front().ts;
            for (const auto& event : part.events) base = std::min(base, event.ts);
        }
        for (const auto& event : part.events)
            merged.events.push_back({event.ts - base, merged.sample_id, event.proto, event.domain});
    }
    std::stable_sort(merged.events.begin(), merged.events.end(),
                     [](const DomainEvent& a, const DomainEvent& b) { return a.ts < b.ts; });
    return merged;
}

EvalReport multi_device_eval(const FingerprintSet& set, int k,
                             const std::vector<LabeledSample>& windows,
                             const SuffixRules& rules, const DetectionConfig& config) {
    for (const auto& window : windows)
        if (static_cast<int>(window.truth.size()) != k)
            throw Error(ErrorCode::invalid_config,
                        "expected " + std::to_string(k) + " labels in " + window.sample_id);
    EvalReport report = evaluate(windows, predict_samples(set, windows, rules, config));
    return report;
}

std::vector<SweepPoint> sweep_epsilon(const std::vector<LabeledSample>& samples,
                                      const std::vector<std::map<std::string, double>>& score_log,
                                      double lo, double hi, double step) {
    if (samples.size() != score_log.size())
        throw Error(ErrorCode::length_mismatch, "samples vs score log");
    if (!(step > 0.0) || hi < lo) throw Error(ErrorCode::invalid_config, "bad sweep range");

    std::vector<SweepPoint> points;
    for (int i = 0;; ++i) {
        double eps = lo + static_cast<double>(i) * step;
        if (eps > hi + 1e-12) break;
        std::vector<LabelSet> predictions;
        predictions.reserve(score_log.size());
        for (const auto& scores : score_log) {
            LabelSet matched;
            for (const auto& [label, score] : scores)
                if (score > eps) matched.insert(label);
            predictions.push_back(std::move(matched));
        }
        EvalReport report = evaluate(samples, predictions);
        points.push_back({eps, report.dr, report.far});
    }
    return points;
}

} // namespace magnifier
