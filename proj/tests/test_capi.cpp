#include <doctest.h>

#include <json.hpp>

#include <filesystem>
#include <fstream>

#include "magnifier.h"
#include "support/temp.hpp"

using nlohmann::json;

namespace {

struct Owned {
    char* s = nullptr;
    ~Owned() { mgf_string_free(s); }
};

std::string write_spec(const testutil::TempDir& tmp) {
    std::ofstream out(tmp.file("spec.json"));
    out << R"({"classes": 3, "proprietary_domains_per_class": 6,
               "shared_background_domains": 10, "events_per_access": 14,
               "access_windows_per_class": 5, "background_windows": 10,
               "train_bursts": 4, "background_events_per_burst": 30,
               "dns_cache_drop_fraction": 0.4, "seed": 99})";
    return tmp.file("spec.json");
}

} // namespace

TEST_CASE("c api pipeline: synth, build, distill, detect, eval") {
    testutil::TempDir tmp;
    std::string spec = write_spec(tmp);
    std::string corpus_dir = tmp.file("corpus");

    Owned manifest;
    REQUIRE(mgf_synth(spec.c_str(), corpus_dir.c_str(), &manifest.s) == MGF_OK);
    json m = json::parse(manifest.s);
    REQUIRE(m["classes"].size() == 3);

    // build every class into one raw fingerprint file
    std::string raw_fp = tmp.file("raw.fp");
    mgf_builder* builder = mgf_builder_new(nullptr, 0);
    REQUIRE(builder);
    for (const auto& [label, file] : m["files"]["train"].items()) {
        std::string path = corpus_dir + "/" + file.get<std::string>();
        REQUIRE(mgf_builder_add_event_log(builder, path.c_str(), label.c_str()) == MGF_OK);
    }
    REQUIRE(mgf_builder_save(builder, raw_fp.c_str()) == MGF_OK);
    mgf_builder_free(builder);

    std::string dist_fp = tmp.file("dist.fp");
    REQUIRE(mgf_distill(raw_fp.c_str(), dist_fp.c_str(), 1.0) == MGF_OK);

    mgf_engine* engine = mgf_engine_open(dist_fp.c_str(), nullptr);
    REQUIRE(engine);
    Owned summary;
    summary.s = mgf_engine_summary_json(engine);
    REQUIRE(summary.s);
    json s = json::parse(summary.s);
    CHECK(s["distilled"].get<bool>());
    CHECK(s["classes"].size() == 3);
    CHECK_FALSE(s["suffix_digest_mismatch"].get<bool>());

    mgf_config config;
    mgf_config_init(&config);
    CHECK(config.tau == 15.0);
    CHECK(config.epsilon == 0.4);
    CHECK(config.gamma == 0.5);

    std::string events = corpus_dir + "/scenario_b.events";
    std::string truth = corpus_dir + "/scenario_b_truth.jsonl";
    std::string detections = tmp.file("detections.jsonl");
    REQUIRE(mgf_detect_file(engine, &config, events.c_str(), detections.c_str()) == MGF_OK);

    // header first, then one record per window
    std::ifstream det_in(detections);
    std::string first_line;
    std::getline(det_in, first_line);
    CHECK(json::parse(first_line).contains("config"));
    std::size_t records = 0;
    for (std::string line; std::getline(det_in, line);)
        if (!line.empty()) ++records;
    CHECK(records == 25); // 15 access + 10 background windows

    Owned report;
    REQUIRE(mgf_eval_file(detections.c_str(), truth.c_str(), "0.1:0.9:0.2", &report.s) == MGF_OK);
    json r = json::parse(report.s);
    CHECK(r["n_access"].get<int>() == 15);
    CHECK(r["n_background"].get<int>() == 10);
    CHECK(r["dr"].get<double>() > 0.8);
    CHECK(r["far"].get<double>() < 0.2);
    CHECK(r["sweep"].size() == 5);
    CHECK(r["config"]["tau"].get<double>() == 15.0);

    mgf_engine_close(engine);
}

TEST_CASE("c api streaming detector handle") {
    testutil::TempDir tmp;
    std::string spec = write_spec(tmp);
    std::string corpus_dir = tmp.file("corpus");
    Owned manifest;
    REQUIRE(mgf_synth(spec.c_str(), corpus_dir.c_str(), &manifest.s) == MGF_OK);
    json m = json::parse(manifest.s);

    std::string raw_fp = tmp.file("raw.fp");
    mgf_builder* builder = mgf_builder_new(nullptr, 0);
    for (const auto& [label, file] : m["files"]["train"].items()) {
        std::string path = corpus_dir + "/" + file.get<std::string>();
        REQUIRE(mgf_builder_add_event_log(builder, path.c_str(), label.c_str()) == MGF_OK);
    }
    REQUIRE(mgf_builder_save(builder, raw_fp.c_str()) == MGF_OK);
    mgf_builder_free(builder);
    std::string dist_fp = tmp.file("dist.fp");
    REQUIRE(mgf_distill(raw_fp.c_str(), dist_fp.c_str(), 0.0) == MGF_OK);

    mgf_engine* engine = mgf_engine_open(dist_fp.c_str(), nullptr);
    REQUIRE(engine);
    mgf_detector* detector = mgf_detector_new(engine, nullptr);
    REQUIRE(detector);

    std::string label = m["classes"][0].get<std::string>();
    // replay that class's training burst as one source
    std::string train = corpus_dir + "/train_" + label + ".events";
    std::ifstream in(train);
    std::string line;
    double ts = 0.0;
    int pushed = 0;
    while (std::getline(in, line) && pushed < 60) {
        json e = json::parse(line);
        mgf_protocol proto = e["proto"] == "dns"   ? MGF_PROTO_DNS
                             : e["proto"] == "tls" ? MGF_PROTO_TLS
                                                   : MGF_PROTO_HTTP;
        REQUIRE(mgf_detector_push(detector, ts, "handset", proto,
                                  e["domain"].get<std::string>().c_str()) == MGF_OK);
        ts += 0.1;
        ++pushed;
    }
    REQUIRE(mgf_detector_finish(detector) == MGF_OK);

    Owned record;
    record.s = mgf_detector_next_json(detector);
    REQUIRE(record.s);
    json detection = json::parse(record.s);
    CHECK(detection["src"] == "handset");
    REQUIRE(detection["matched"].size() == 1);
    CHECK(detection["matched"][0] == label);
    CHECK(mgf_detector_next_json(detector) == nullptr);

    mgf_detector_free(detector);
    mgf_engine_close(engine);
}

TEST_CASE("c api builder merge extends an existing fingerprint file") {
    testutil::TempDir tmp;
    std::string spec = write_spec(tmp);
    std::string corpus_dir = tmp.file("corpus");
    Owned manifest;
    REQUIRE(mgf_synth(spec.c_str(), corpus_dir.c_str(), &manifest.s) == MGF_OK);
    json m = json::parse(manifest.s);
    std::vector<std::pair<std::string, std::string>> classes;
    for (const auto& [label, file] : m["files"]["train"].items())
        classes.emplace_back(label, corpus_dir + "/" + file.get<std::string>());

    std::string fp = tmp.file("merged.fp");
    {
        mgf_builder* builder = mgf_builder_new(nullptr, 0);
        REQUIRE(mgf_builder_add_event_log(builder, classes[0].second.c_str(),
                                          classes[0].first.c_str()) == MGF_OK);
        REQUIRE(mgf_builder_save(builder, fp.c_str()) == MGF_OK);
        mgf_builder_free(builder);
    }
    {
        mgf_builder* builder = mgf_builder_new(nullptr, 0);
        REQUIRE(mgf_builder_merge_file(builder, fp.c_str()) == MGF_OK);
        REQUIRE(mgf_builder_add_event_log(builder, classes[1].second.c_str(),
                                          classes[1].first.c_str()) == MGF_OK);
        REQUIRE(mgf_builder_save(builder, fp.c_str()) == MGF_OK);
        mgf_builder_free(builder);
    }

    mgf_engine* engine = mgf_engine_open(fp.c_str(), nullptr);
    REQUIRE(engine);
    Owned summary;
    summary.s = mgf_engine_summary_json(engine);
    json s = json::parse(summary.s);
    CHECK(s["classes"].size() == 2);
    CHECK_FALSE(s["distilled"].get<bool>());
    mgf_engine_close(engine);
}

TEST_CASE("c api error discipline") {
    testutil::TempDir tmp;

    CHECK(mgf_extract_pcap(nullptr, "x", nullptr) == MGF_ERR_INVALID_ARGUMENT);
    CHECK(std::string(mgf_last_error()).size() > 0);

    CHECK(mgf_distill("/nonexistent.fp", tmp.file("out.fp").c_str(), 1.0) == MGF_ERR_IO);

    CHECK(mgf_engine_open("/nonexistent.fp", nullptr) == nullptr);

    // a raw fingerprint cannot drive detection without --raw semantics
    std::string spec = write_spec(tmp);
    std::string corpus_dir = tmp.file("corpus");
    Owned manifest;
    REQUIRE(mgf_synth(spec.c_str(), corpus_dir.c_str(), &manifest.s) == MGF_OK);
    json m = json::parse(manifest.s);
    auto train_files = m["files"]["train"].items();
    auto first = train_files.begin();

    std::string raw_fp = tmp.file("raw.fp");
    mgf_builder* builder = mgf_builder_new(nullptr, 0);
    std::string path = corpus_dir + "/" + first.value().get<std::string>();
    REQUIRE(mgf_builder_add_event_log(builder, path.c_str(), first.key().c_str()) == MGF_OK);
    REQUIRE(mgf_builder_save(builder, raw_fp.c_str()) == MGF_OK);
    mgf_builder_free(builder);

    mgf_engine* engine = mgf_engine_open(raw_fp.c_str(), nullptr);
    REQUIRE(engine);
    mgf_config config;
    mgf_config_init(&config);
    std::string detections = tmp.file("d.jsonl");
    std::string events = corpus_dir + "/scenario_b.events";
    CHECK(mgf_detect_file(engine, &config, events.c_str(), detections.c_str()) == MGF_ERR_STATE);

    // the raw-count variant is allowed to
    config.use_raw_counts = 1;
    CHECK(mgf_detect_file(engine, &config, events.c_str(), detections.c_str()) == MGF_OK);
    mgf_engine_close(engine);

    // distilling twice is a state error
    std::string dist_fp = tmp.file("dist.fp");
    REQUIRE(mgf_distill(raw_fp.c_str(), dist_fp.c_str(), 1.0) == MGF_OK);
    CHECK(mgf_distill(dist_fp.c_str(), tmp.file("z.fp").c_str(), 1.0) == MGF_ERR_STATE);

    // events far behind the stream high-water mark are data errors
    mgf_engine* dist_engine = mgf_engine_open(dist_fp.c_str(), nullptr);
    REQUIRE(dist_engine);
    mgf_config stream_config;
    mgf_config_init(&stream_config);
    mgf_detector* detector = mgf_detector_new(dist_engine, &stream_config);
    REQUIRE(detector);
    CHECK(mgf_detector_push(detector, 100.0, "s", MGF_PROTO_DNS, "a.example.com") == MGF_OK);
    CHECK(mgf_detector_push(detector, 50.0, "s", MGF_PROTO_DNS, "b.example.com") == MGF_ERR_DATA);
    mgf_detector_free(detector);
    mgf_engine_close(dist_engine);
}
