#include "magnifier.h"

#include <json.hpp>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>

#include "magnifier/detector.hpp"
#include "magnifier/distill.hpp"
#include "magnifier/evaluation.hpp"
#include "magnifier/pcap.hpp"
#include "magnifier/store.hpp"

using nlohmann::json;
using namespace magnifier;

namespace {

thread_local std::string g_last_error;

void set_error(const std::string& message) { g_last_error = message; }

mgf_status status_for(const Error& err) {
    switch (err.code()) {
    case ErrorCode::file_unreadable:
    case ErrorCode::io_failure:
        return MGF_ERR_IO;
    case ErrorCode::not_balanced:
    case ErrorCode::not_distilled:
    case ErrorCode::already_distilled:
        return MGF_ERR_STATE;
    case ErrorCode::invalid_config:
        return MGF_ERR_INVALID_ARGUMENT;
    default:
        return MGF_ERR_DATA;
    }
}

template <typename Fn>
mgf_status wrap(Fn&& fn) {
    try {
        fn();
        return MGF_OK;
    } catch (const Error& err) {
        set_error(err.what());
        return status_for(err);
    } catch (const std::exception& err) {
        set_error(err.what());
        return MGF_ERR_INTERNAL;
    }
}

char* dup_string(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (!out) return nullptr;
    std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

SuffixRules load_rules(const char* suffix_file_path) {
    if (suffix_file_path && *suffix_file_path) return SuffixRules::from_file(suffix_file_path);
    return SuffixRules{};
}

DetectionConfig to_config(const mgf_config* config) {
    DetectionConfig out;
    if (!config) return out;
    out.tau = config->tau;
    out.epsilon = config->epsilon;
    out.gamma = config->gamma;
    out.collector_enabled = config->collector != 0;
    out.trigger_any = config->trigger_any != 0;
    out.expand_test_side = config->expand_test_side != 0;
    out.calibrated = config->calibrated != 0;
    out.reorder_slack = config->reorder_slack;
    out.validate();
    return out;
}

} // namespace

struct mgf_builder {
    SuffixRules rules;
    int level_cap = kDefaultLevelCap;
    std::map<std::string, DomainFeatureSet> features;
};

struct mgf_engine {
    FingerprintSet set;
    SuffixRules rules;
    bool digest_mismatch = false;
};

struct mgf_detector {
    mgf_engine* engine = nullptr;
    DetectionConfig config;
    std::unique_ptr<FingerprintSet> raw_variant;
    std::unique_ptr<StreamDetector> impl;
};

extern "C" {

void mgf_config_init(mgf_config* config) {
    if (!config) return;
    DetectionConfig defaults;
    config->tau = defaults.tau;
    config->epsilon = defaults.epsilon;
    config->gamma = defaults.gamma;
    config->collector = defaults.collector_enabled ? 1 : 0;
    config->trigger_any = defaults.trigger_any ? 1 : 0;
    config->expand_test_side = defaults.expand_test_side ? 1 : 0;
    config->calibrated = defaults.calibrated ? 1 : 0;
    config->use_raw_counts = 0;
    config->reorder_slack = defaults.reorder_slack;
}

const char* mgf_version(void) { return "0.1.0"; }

const char* mgf_last_error(void) { return g_last_error.c_str(); }

void mgf_string_free(char* s) { std::free(s); }

mgf_status mgf_extract_pcap(const char* pcap_path, const char* events_out_path,
                            char** stats_json_out) {
    if (!pcap_path || !events_out_path) {
        set_error("pcap_path and events_out_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        std::ofstream out(events_out_path);
        if (!out) throw Error(ErrorCode::io_failure, std::string("cannot write ") + events_out_path);
        CaptureStats stats = extract_from_pcap(pcap_path, [&](const DomainEvent& event) {
            out << event_to_line(event) << '\n';
        });
        if (!out) throw Error(ErrorCode::io_failure, std::string("short write to ") + events_out_path);
        if (stats_json_out) {
            json j;
            j["packets_seen"] = stats.packets_seen;
            j["truncated_packets"] = stats.truncated_packets;
            for (Protocol p : {Protocol::dns, Protocol::tls, Protocol::http}) {
                const auto& per = stats.proto(p);
                j[protocol_name(p)] = {{"packets_with_events", per.packets_with_events},
                                       {"events_emitted", per.events_emitted},
                                       {"parse_failures", per.parse_failures}};
            }
            *stats_json_out = dup_string(j.dump());
        }
    });
}

mgf_builder* mgf_builder_new(const char* suffix_file_path, int level_cap) {
    auto builder = std::make_unique<mgf_builder>();
    mgf_status rc = wrap([&] {
        builder->rules = load_rules(suffix_file_path);
        builder->level_cap = level_cap > 0 ? level_cap : kDefaultLevelCap;
    });
    return rc == MGF_OK ? builder.release() : nullptr;
}

mgf_status mgf_builder_add_event_log(mgf_builder* builder, const char* events_path,
                                     const char* label) {
    if (!builder || !events_path || !label || !*label) {
        set_error("builder, events_path and label are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        auto events = read_event_log(events_path);
        DomainFeatureSet batch =
            accumulate_features(events, label, builder->rules, builder->level_cap);
        auto it = builder->features.find(label);
        if (it == builder->features.end())
            builder->features.emplace(label, std::move(batch));
        else
            it->second.merge(batch);
    });
}

mgf_status mgf_builder_merge_file(mgf_builder* builder, const char* fp_path) {
    if (!builder || !fp_path) {
        set_error("builder and fp_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        FingerprintSet existing = load_fingerprints(fp_path);
        if (existing.distilled || existing.balanced)
            throw Error(ErrorCode::already_distilled,
                        std::string(fp_path) + " is distilled; merge raw fingerprints only");
        if (existing.level_cap != builder->level_cap)
            throw Error(ErrorCode::schema_violation, "level cap mismatch with " + std::string(fp_path));
        if (existing.suffix_digest != builder->rules.digest())
            throw Error(ErrorCode::schema_violation,
                        "suffix rules mismatch with " + std::string(fp_path));
        for (const auto& [label, forest] : existing.forests) {
            DomainFeatureSet recovered = features_from_forest(forest, existing.level_cap);
            auto it = builder->features.find(label);
            if (it == builder->features.end())
                builder->features.emplace(label, std::move(recovered));
            else
                it->second.merge(recovered);
        }
    });
}

mgf_status mgf_builder_save(mgf_builder* builder, const char* out_path) {
    if (!builder || !out_path) {
        set_error("builder and out_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        if (builder->features.empty())
            throw Error(ErrorCode::empty_feature_set, "builder holds no classes");
        FingerprintSet set;
        set.level_cap = builder->level_cap;
        set.suffix_digest = builder->rules.digest();
        for (const auto& [label, features] : builder->features) {
            if (features.empty())
                throw Error(ErrorCode::empty_feature_set, "class " + label + " has no features");
            set.forests[label] = build_forest(features);
            set.total_events += features.total_events;
        }
        save_fingerprints(set, out_path);
    });
}

void mgf_builder_free(mgf_builder* builder) { delete builder; }

mgf_status mgf_distill(const char* fp_in_path, const char* fp_out_path, double sigma) {
    if (!fp_in_path || !fp_out_path) {
        set_error("fp_in_path and fp_out_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        FingerprintSet raw = load_fingerprints(fp_in_path);
        DistillationParams params;
        params.sigma = sigma > 0.0 ? sigma : 1.0;
        FingerprintSet distilled = distill_fingerprints(raw, params);
        save_fingerprints(distilled, fp_out_path);
    });
}

mgf_engine* mgf_engine_open(const char* fp_path, const char* suffix_file_path) {
    if (!fp_path) {
        set_error("fp_path is required");
        return nullptr;
    }
    auto engine = std::make_unique<mgf_engine>();
    mgf_status rc = wrap([&] {
        engine->set = load_fingerprints(fp_path);
        engine->rules = load_rules(suffix_file_path);
        engine->digest_mismatch = engine->set.suffix_digest != engine->rules.digest();
    });
    return rc == MGF_OK ? engine.release() : nullptr;
}

char* mgf_engine_summary_json(const mgf_engine* engine) {
    if (!engine) {
        set_error("engine is required");
        return nullptr;
    }
    json summary;
    summary["distilled"] = engine->set.distilled;
    summary["balanced"] = engine->set.balanced;
    summary["level_cap"] = engine->set.level_cap;
    summary["sigma"] = engine->set.params.sigma;
    summary["suffix_digest"] = engine->set.suffix_digest;
    summary["suffix_digest_mismatch"] = engine->digest_mismatch;
    summary["total_events"] = engine->set.total_events;
    json classes = json::array();
    for (const auto& [label, forest] : engine->set.forests) {
        json trees = json::array();
        for (const auto& [root, tree] : forest.trees) {
            trees.push_back({{"root", root},
                             {"weight", tree.weight},
                             {"nodes", tree.node_count},
                             {"leaves", tree.leaf_count()}});
        }
        classes.push_back({{"label", label},
                           {"trees", std::move(trees)},
                           {"total_nodes", forest.total_nodes},
                           {"calibration", engine->set.calibration_scale(label)}});
    }
    summary["classes"] = std::move(classes);
    return dup_string(summary.dump());
}

void mgf_engine_close(mgf_engine* engine) { delete engine; }

mgf_detector* mgf_detector_new(mgf_engine* engine, const mgf_config* config) {
    if (!engine) {
        set_error("engine is required");
        return nullptr;
    }
    auto detector = std::make_unique<mgf_detector>();
    mgf_status rc = wrap([&] {
        detector->engine = engine;
        detector->config = to_config(config);
        const FingerprintSet* active = &engine->set;
        if (config && config->use_raw_counts) {
            detector->raw_variant =
                std::make_unique<FingerprintSet>(engine->set.undistilled_variant());
            active = detector->raw_variant.get();
        }
        detector->impl =
            std::make_unique<StreamDetector>(*active, engine->rules, detector->config);
    });
    return rc == MGF_OK ? detector.release() : nullptr;
}

mgf_status mgf_detector_push(mgf_detector* detector, double ts, const char* src,
                             mgf_protocol proto, const char* domain) {
    if (!detector || !src || !domain) {
        set_error("detector, src and domain are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    if (proto < MGF_PROTO_DNS || proto > MGF_PROTO_HTTP) {
        set_error("bad protocol");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        detector->impl->push(DomainEvent{ts, src, static_cast<Protocol>(proto), domain});
    });
}

char* mgf_detector_next_json(mgf_detector* detector) {
    if (!detector || !detector->impl->pending()) return nullptr;
    return dup_string(detection_to_line(detector->impl->pop()));
}

mgf_status mgf_detector_finish(mgf_detector* detector) {
    if (!detector) {
        set_error("detector is required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] { detector->impl->flush(); });
}

void mgf_detector_free(mgf_detector* detector) { delete detector; }

mgf_status mgf_detect_file(mgf_engine* engine, const mgf_config* config, const char* events_path,
                           const char* detections_out_path) {
    if (!engine || !events_path || !detections_out_path) {
        set_error("engine, events_path and detections_out_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        DetectionConfig cpp_config = to_config(config);
        const FingerprintSet* active = &engine->set;
        std::optional<FingerprintSet> variant;
        if (config && config->use_raw_counts) {
            variant = engine->set.undistilled_variant();
            active = &*variant;
        }

        StreamDetector detector(*active, engine->rules, cpp_config);
        EventLogReader reader(events_path);

        std::ofstream out(detections_out_path);
        if (!out)
            throw Error(ErrorCode::io_failure, std::string("cannot write ") + detections_out_path);
        out << detection_config_header(cpp_config, engine->set.suffix_digest) << '\n';

        DomainEvent event;
        while (reader.next(event)) {
            detector.push(event);
            while (detector.pending()) out << detection_to_line(detector.pop()) << '\n';
        }
        detector.flush();
        while (detector.pending()) out << detection_to_line(detector.pop()) << '\n';
        if (!out)
            throw Error(ErrorCode::io_failure, std::string("short write to ") + detections_out_path);
    });
}

mgf_status mgf_eval_file(const char* detections_path, const char* truth_path, const char* sweep,
                         char** report_json_out) {
    if (!detections_path || !truth_path) {
        set_error("detections_path and truth_path are required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        std::ifstream det_in(detections_path);
        if (!det_in)
            throw Error(ErrorCode::file_unreadable,
                        std::string("cannot open ") + detections_path);

        struct SourceResult {
            std::map<std::string, double> scores;
            LabelSet matched;
        };
        std::map<std::string, SourceResult> by_source;
        json config_echo;
        std::string line;
        while (std::getline(det_in, line)) {
            if (line.empty()) continue;
            json record = json::parse(line, nullptr, false);
            if (!record.is_object()) throw Error(ErrorCode::schema_violation, "bad detection line");
            if (record.contains("config")) {
                if (config_echo.is_null()) config_echo = record["config"];
                continue;
            }
            if (!record.contains("src") || !record.contains("scores") ||
                !record.contains("matched"))
                throw Error(ErrorCode::schema_violation, "bad detection line");
            auto& slot = by_source[record["src"].get<std::string>()];
            for (const auto& [label, score] : record["scores"].items()) {
                double s = score.get<double>();
                auto it = slot.scores.find(label);
                if (it == slot.scores.end() || it->second < s) slot.scores[label] = s;
            }
            for (const auto& label : record["matched"])
                slot.matched.insert(label.get<std::string>());
        }

        std::ifstream truth_in(truth_path);
        if (!truth_in)
            throw Error(ErrorCode::file_unreadable, std::string("cannot open ") + truth_path);
        std::vector<LabeledSample> samples;
        std::vector<LabelSet> predictions;
        std::vector<std::map<std::string, double>> score_log;
        while (std::getline(truth_in, line)) {
            if (line.empty()) continue;
            json record = json::parse(line, nullptr, false);
            if (!record.is_object() || !record.contains("src") || !record.contains("labels"))
                throw Error(ErrorCode::schema_violation, "bad truth line");
            LabeledSample sample;
            sample.sample_id = record["src"].get<std::string>();
            for (const auto& label : record["labels"]) sample.truth.insert(label.get<std::string>());
            if (sample.truth.empty())
                throw Error(ErrorCode::schema_violation, "truth without labels: " + sample.sample_id);
            auto it = by_source.find(sample.sample_id);
            if (it == by_source.end()) {
                predictions.push_back({});
                score_log.push_back({});
            } else {
                predictions.push_back(it->second.matched);
                score_log.push_back(it->second.scores);
            }
            samples.push_back(std::move(sample));
        }

        EvalReport report = evaluate(samples, predictions);

        json out;
        out["dr"] = report.dr;
        out["far"] = report.far;
        out["n_access"] = report.n_access;
        out["n_background"] = report.n_background;
        json per_class = json::object();
        for (const auto& [label, counts] : report.per_class)
            per_class[label] = {{"hits", counts.first}, {"misses", counts.second}};
        out["per_class"] = per_class;
        out["config"] = config_echo;

        if (sweep && *sweep) {
            double lo = 0.0, hi = 0.0, step = 0.0;
            if (std::sscanf(sweep, "%lf:%lf:%lf", &lo, &hi, &step) != 3)
                throw Error(ErrorCode::invalid_config,
                            std::string("bad sweep spec: ") + sweep + " (want lo:hi:step)");
            json points = json::array();
            for (const auto& point : sweep_epsilon(samples, score_log, lo, hi, step))
                points.push_back({{"epsilon", point.epsilon}, {"dr", point.dr}, {"far", point.far}});
            out["sweep"] = std::move(points);
        }

        if (report_json_out) *report_json_out = dup_string(out.dump());
    });
}

mgf_status mgf_synth(const char* spec_json_path, const char* out_dir, char** manifest_json_out) {
    if (!out_dir) {
        set_error("out_dir is required");
        return MGF_ERR_INVALID_ARGUMENT;
    }
    return wrap([&] {
        SynthSpec spec;
        if (spec_json_path && *spec_json_path) {
            std::ifstream in(spec_json_path);
            if (!in)
                throw Error(ErrorCode::file_unreadable,
                            std::string("cannot open ") + spec_json_path);
            json doc = json::parse(in, nullptr, false);
            if (!doc.is_object())
                throw Error(ErrorCode::schema_violation, "synth spec must be a JSON object");
            auto get_int = [&](const char* key, int fallback) {
                return doc.contains(key) ? doc[key].get<int>() : fallback;
            };
            spec.n_classes = get_int("classes", spec.n_classes);
            spec.proprietary_domains_per_class =
                get_int("proprietary_domains_per_class", spec.proprietary_domains_per_class);
            spec.shared_background_domains =
                get_int("shared_background_domains", spec.shared_background_domains);
            spec.events_per_access = get_int("events_per_access", spec.events_per_access);
            spec.access_windows_per_class =
                get_int("access_windows_per_class", spec.access_windows_per_class);
            spec.background_windows = get_int("background_windows", spec.background_windows);
            spec.train_bursts = get_int("train_bursts", spec.train_bursts);
            spec.background_events_per_burst =
                get_int("background_events_per_burst", spec.background_events_per_burst);
            spec.background_window_min_events =
                get_int("background_window_min_events", spec.background_window_min_events);
            spec.background_window_max_events =
                get_int("background_window_max_events", spec.background_window_max_events);
            if (doc.contains("dns_cache_drop_fraction"))
                spec.dns_cache_drop_fraction = doc["dns_cache_drop_fraction"].get<double>();
            if (doc.contains("seed")) spec.seed = doc["seed"].get<std::uint64_t>();
        }

        SyntheticCorpus corpus = generate_synthetic(spec);

        namespace fs = std::filesystem;
        std::error_code ec;
        fs::create_directories(out_dir, ec);
        if (ec) throw Error(ErrorCode::io_failure, "cannot create " + std::string(out_dir));
        auto path_of = [&](const std::string& name) {
            return (fs::path(out_dir) / name).string();
        };

        json files = json::object();
        for (const auto& [label, events] : corpus.training) {
            std::string name = "train_" + label + ".events";
            write_event_log(path_of(name), events);
            files["train"][label] = name;
        }

        auto write_scenario = [&](const std::vector<LabeledSample>& samples,
                                  const std::string& stem) {
            std::vector<DomainEvent> events;
            for (const auto& sample : samples)
                events.insert(events.end(), sample.events.begin(), sample.events.end());
            std::stable_sort(events.begin(), events.end(),
                             [](const DomainEvent& a, const DomainEvent& b) { return a.ts < b.ts; });
            write_event_log(path_of(stem + ".events"), events);

            std::ofstream truth(path_of(stem + "_truth.jsonl"));
            if (!truth) throw Error(ErrorCode::io_failure, "cannot write truth for " + stem);
            for (const auto& sample : samples) {
                json record;
                record["src"] = sample.sample_id;
                record["labels"] = json::array();
                for (const auto& label : sample.truth) record["labels"].push_back(label);
                truth << record.dump() << '\n';
            }
            files[stem] = {{"events", stem + ".events"}, {"truth", stem + "_truth.jsonl"}};
        };
        write_scenario(corpus.initial, "scenario_b");
        write_scenario(corpus.repetitive, "scenario_c");

        json manifest;
        manifest["classes"] = corpus.class_labels;
        manifest["files"] = files;
        manifest["spec"] = {{"classes", spec.n_classes},
                            {"proprietary_domains_per_class", spec.proprietary_domains_per_class},
                            {"shared_background_domains", spec.shared_background_domains},
                            {"events_per_access", spec.events_per_access},
                            {"access_windows_per_class", spec.access_windows_per_class},
                            {"background_windows", spec.background_windows},
                            {"dns_cache_drop_fraction", spec.dns_cache_drop_fraction},
                            {"seed", spec.seed}};
        std::ofstream mf(path_of("manifest.json"));
        if (!mf) throw Error(ErrorCode::io_failure, "cannot write manifest");
        mf << manifest.dump(2) << '\n';

        if (manifest_json_out) *manifest_json_out = dup_string(manifest.dump());
    });
}

} // extern "C"
