// magnifier command line: extract / build / distill / detect / eval / synth /
// inspect, chained through files. Thin client of the C API in magnifier.h.

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include "magnifier.h"

using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

int fail(const char* what) {
    std::cerr << "error: " << what << ": " << mgf_last_error() << "\n";
    return kExitData;
}

std::string env_suffix_file() {
    const char* env = std::getenv("DNFOREST_SUFFIX_FILE");
    return env ? env : "";
}

struct OwnedString {
    char* s = nullptr;
    ~OwnedString() { mgf_string_free(s); }
};

int cmd_extract(const std::string& pcap, const std::string& out) {
    OwnedString stats;
    if (mgf_extract_pcap(pcap.c_str(), out.c_str(), &stats.s) != MGF_OK) return fail("extract");
    json j = json::parse(stats.s);
    std::cout << "packets: " << j["packets_seen"].get<std::uint64_t>();
    for (const char* proto : {"dns", "tls", "http"})
        std::cout << "  " << proto << ": " << j[proto]["events_emitted"].get<std::uint64_t>()
                  << " events (" << j[proto]["parse_failures"].get<std::uint64_t>() << " failed)";
    std::cout << "\nwrote " << out << "\n";
    return kExitOk;
}

int cmd_build(const std::string& events, const std::string& label, const std::string& out,
              const std::string& suffix_file, int level_cap) {
    mgf_builder* builder =
        mgf_builder_new(suffix_file.empty() ? nullptr : suffix_file.c_str(), level_cap);
    if (!builder) return fail("build");
    int rc = kExitOk;
    if (std::filesystem::exists(out) && mgf_builder_merge_file(builder, out.c_str()) != MGF_OK)
        rc = fail("merge existing fingerprints");
    if (rc == kExitOk && mgf_builder_add_event_log(builder, events.c_str(), label.c_str()) != MGF_OK)
        rc = fail("build");
    if (rc == kExitOk && mgf_builder_save(builder, out.c_str()) != MGF_OK) rc = fail("save");
    mgf_builder_free(builder);
    if (rc == kExitOk) std::cout << "wrote " << out << " (class " << label << ")\n";
    return rc;
}

int cmd_distill(const std::string& in, const std::string& out, double sigma) {
    if (mgf_distill(in.c_str(), out.c_str(), sigma) != MGF_OK) return fail("distill");
    std::cout << "wrote " << out << "\n";
    return kExitOk;
}

int cmd_detect(const std::string& fp, const std::string& events, const std::string& out,
               const mgf_config& config, const std::string& suffix_file) {
    mgf_engine* engine =
        mgf_engine_open(fp.c_str(), suffix_file.empty() ? nullptr : suffix_file.c_str());
    if (!engine) return fail("open fingerprints");
    OwnedString summary;
    summary.s = mgf_engine_summary_json(engine);
    if (summary.s && json::parse(summary.s)["suffix_digest_mismatch"].get<bool>())
        std::cerr << "warning: suffix rules differ from the ones the fingerprints were built with\n";
    int rc = kExitOk;
    if (mgf_detect_file(engine, &config, events.c_str(), out.c_str()) != MGF_OK)
        rc = fail("detect");
    mgf_engine_close(engine);
    if (rc == kExitOk) std::cout << "wrote " << out << "\n";
    return rc;
}

int cmd_eval(const std::string& detections, const std::string& truth, const std::string& sweep,
             const std::string& report_out) {
    OwnedString report;
    if (mgf_eval_file(detections.c_str(), truth.c_str(), sweep.empty() ? nullptr : sweep.c_str(),
                      &report.s) != MGF_OK)
        return fail("eval");
    json j = json::parse(report.s);

    std::printf("samples: %llu access, %llu background\n",
                static_cast<unsigned long long>(j["n_access"].get<std::uint64_t>()),
                static_cast<unsigned long long>(j["n_background"].get<std::uint64_t>()));
    std::printf("DR  = %.4f\nFAR = %.4f\n", j["dr"].get<double>(), j["far"].get<double>());
    if (!j["per_class"].empty()) {
        std::printf("%-24s %8s %8s\n", "class", "hits", "misses");
        for (const auto& [label, counts] : j["per_class"].items())
            std::printf("%-24s %8llu %8llu\n", label.c_str(),
                        static_cast<unsigned long long>(counts["hits"].get<std::uint64_t>()),
                        static_cast<unsigned long long>(counts["misses"].get<std::uint64_t>()));
    }
    if (j.contains("sweep")) {
        std::printf("%8s %8s %8s\n", "epsilon", "DR", "FAR");
        for (const auto& point : j["sweep"])
            std::printf("%8.3f %8.4f %8.4f\n", point["epsilon"].get<double>(),
                        point["dr"].get<double>(), point["far"].get<double>());
    }

    if (!report_out.empty()) {
        std::ofstream out(report_out);
        out << report.s << "\n";
        if (!out) {
            std::cerr << "error: cannot write " << report_out << "\n";
            return kExitData;
        }
    } else {
        std::cout << report.s << "\n";
    }
    return kExitOk;
}

int cmd_synth(const std::string& spec, const std::string& out_dir) {
    OwnedString manifest;
    if (mgf_synth(spec.empty() ? nullptr : spec.c_str(), out_dir.c_str(), &manifest.s) != MGF_OK)
        return fail("synth");
    json j = json::parse(manifest.s);
    std::cout << "classes:";
    for (const auto& label : j["classes"]) std::cout << " " << label.get<std::string>();
    std::cout << "\nwrote corpus under " << out_dir << "\n";
    return kExitOk;
}

int cmd_inspect(const std::string& fp, const std::string& suffix_file) {
    mgf_engine* engine =
        mgf_engine_open(fp.c_str(), suffix_file.empty() ? nullptr : suffix_file.c_str());
    if (!engine) return fail("open fingerprints");
    OwnedString summary;
    summary.s = mgf_engine_summary_json(engine);
    mgf_engine_close(engine);
    if (!summary.s) return fail("inspect");

    json j = json::parse(summary.s);
    std::printf("distilled: %s   level cap: %d   sigma: %g   events: %llu\n",
                j["distilled"].get<bool>() ? "yes" : "no", j["level_cap"].get<int>(),
                j["sigma"].get<double>(),
                static_cast<unsigned long long>(j["total_events"].get<std::uint64_t>()));
    std::printf("%-24s %6s %6s %12s\n", "class", "trees", "nodes", "calibration");
    for (const auto& cls : j["classes"]) {
        std::printf("%-24s %6zu %6llu %12.4g\n", cls["label"].get<std::string>().c_str(),
                    cls["trees"].size(),
                    static_cast<unsigned long long>(cls["total_nodes"].get<std::uint64_t>()),
                    cls["calibration"].get<double>());
        // heaviest trees first
        std::vector<json> trees(cls["trees"].begin(), cls["trees"].end());
        std::sort(trees.begin(), trees.end(), [](const json& a, const json& b) {
            return a["weight"].get<double>() > b["weight"].get<double>();
        });
        for (std::size_t i = 0; i < trees.size() && i < 3; ++i)
            std::printf("    %-32s W=%-8.4f nodes=%llu leaves=%llu\n",
                        trees[i]["root"].get<std::string>().c_str(),
                        trees[i]["weight"].get<double>(),
                        static_cast<unsigned long long>(trees[i]["nodes"].get<std::uint64_t>()),
                        static_cast<unsigned long long>(trees[i]["leaves"].get<std::uint64_t>()));
    }
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"dnForest fingerprinting and network-access detection"};
    app.require_subcommand(1);

    std::string suffix_file = env_suffix_file();

    std::string ex_pcap, ex_out;
    auto* extract = app.add_subcommand("extract", "extract domain events from a pcap");
    extract->add_option("pcap", ex_pcap, "pcap file")->required();
    extract->add_option("-o,--output", ex_out, "event log to write")->required();

    std::string b_events, b_label, b_out = "raw.fp";
    int b_level_cap = 0;
    auto* build = app.add_subcommand("build", "accumulate one class into a raw fingerprint file");
    build->add_option("events", b_events, "event log")->required();
    build->add_option("--label", b_label, "device class label")->required();
    build->add_option("-o,--output", b_out, "fingerprint file (merged when it exists)");
    build->add_option("--suffix-file", suffix_file, "public suffix rules");
    build->add_option("--level-cap", b_level_cap, "max domain level (default 6)");

    std::string d_in, d_out;
    double d_sigma = 1.0;
    auto* distill = app.add_subcommand("distill", "two-stage distillation of raw fingerprints");
    distill->add_option("fingerprint", d_in, "raw fingerprint file")->required();
    distill->add_option("-o,--output", d_out, "distilled fingerprint file")->required();
    distill->add_option("--sigma", d_sigma, "noise tolerance (default 1)");

    mgf_config config;
    mgf_config_init(&config);
    std::string det_fp, det_events, det_out;
    bool no_collector = false, raw_counts = false, no_calibrate = false, trigger_any = false;
    auto* detect = app.add_subcommand("detect", "windowed detection over an event log");
    detect->add_option("fingerprint", det_fp, "distilled fingerprint file")->required();
    detect->add_option("events", det_events, "event log")->required();
    detect->add_option("-o,--output", det_out, "detection log to write")->required();
    detect->add_option("--tau", config.tau, "window duration in seconds");
    detect->add_option("--epsilon", config.epsilon, "score threshold");
    detect->add_option("--gamma", config.gamma, "collector coverage threshold");
    detect->add_flag("--no-collector", no_collector, "disable the collector");
    detect->add_flag("--trigger-any", trigger_any, "open windows on any protocol, not only DNS");
    detect->add_flag("--raw", raw_counts, "score with raw counts (pre-distillation ablation)");
    detect->add_flag("--no-calibrate", no_calibrate, "use uncalibrated scores");
    detect->add_option("--suffix-file", suffix_file, "public suffix rules");

    std::string e_detections, e_truth, e_sweep, e_out;
    auto* eval = app.add_subcommand("eval", "score a detection log against truth");
    eval->add_option("detections", e_detections, "detection log")->required();
    eval->add_option("truth", e_truth, "truth file (one {\"src\",\"labels\"} per line)")
        ->required();
    eval->add_option("--sweep-epsilon", e_sweep, "lo:hi:step threshold sweep");
    eval->add_option("-o,--output", e_out, "write the report record here instead of stdout");

    std::string s_spec, s_out;
    auto* synth = app.add_subcommand("synth", "generate a synthetic labelled corpus");
    synth->add_option("spec", s_spec, "synth spec JSON ('-' for defaults)")->required();
    synth->add_option("-o,--output", s_out, "output directory")->required();

    std::string i_fp;
    auto* inspect = app.add_subcommand("inspect", "per-class tree stats for a fingerprint file");
    inspect->add_option("fingerprint", i_fp, "fingerprint file")->required();
    inspect->add_option("--suffix-file", suffix_file, "public suffix rules");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        app.exit(e);
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (extract->parsed()) return cmd_extract(ex_pcap, ex_out);
    if (build->parsed()) return cmd_build(b_events, b_label, b_out, suffix_file, b_level_cap);
    if (distill->parsed()) return cmd_distill(d_in, d_out, d_sigma);
    if (detect->parsed()) {
        config.collector = no_collector ? 0 : 1;
        config.trigger_any = trigger_any ? 1 : 0;
        config.use_raw_counts = raw_counts ? 1 : 0;
        config.calibrated = no_calibrate ? 0 : 1;
        return cmd_detect(det_fp, det_events, det_out, config, suffix_file);
    }
    if (eval->parsed()) return cmd_eval(e_detections, e_truth, e_sweep, e_out);
    if (synth->parsed()) return cmd_synth(s_spec == "-" ? "" : s_spec, s_out);
    if (inspect->parsed()) return cmd_inspect(i_fp, suffix_file);
    return kExitUsage;
}
