#include <doctest.h>

#include <cmath>
#include <random>

#include "magnifier/detector.hpp"
#include "magnifier/error.hpp"
#include "support/oracle.hpp"

using namespace magnifier;

namespace {

DomainFeatureSet make_features(const std::vector<std::tuple<std::string, int, std::uint64_t>>& rows,
                               const std::string& label) {
    DomainFeatureSet features;
    features.class_label = label;
    for (const auto& [name, level, count] : rows) features.entries[name] = {level, count};
    return features;
}

// distilled two-class set: "phone" owns the deep p.com tree, both classes
// share common.net
FingerprintSet example_set() {
    FingerprintSet raw;
    raw.forests["phone"] = build_forest(make_features({{"p.com", 1, 10},
                                                       {"api.p.com", 2, 8},
                                                       {"cdn.api.p.com", 3, 6},
                                                       {"push.p.com", 2, 7},
                                                       {"common.net", 1, 3}},
                                                      "phone"));
    raw.forests["tablet"] = build_forest(make_features({{"t.org", 1, 9},
                                                        {"sync.t.org", 2, 5},
                                                        {"common.net", 1, 2}},
                                                       "tablet"));
    return distill_fingerprints(raw, DistillationParams{});
}

DetectionWindow window_of(const std::vector<std::string>& names) {
    DetectionWindow window;
    window.source = "s";
    for (const auto& name : names) window.features.insert(name);
    return window;
}

std::vector<DetectionWindow> run_stream(const std::vector<DomainEvent>& events,
                                        const DetectionConfig& config) {
    SuffixRules rules;
    WindowStream stream(rules, config, kDefaultLevelCap);
    std::vector<DetectionWindow> windows;
    for (const auto& event : events) {
        stream.push(event);
        while (stream.pending()) windows.push_back(stream.pop());
    }
    stream.flush();
    while (stream.pending()) windows.push_back(stream.pop());
    return windows;
}

} // namespace

TEST_CASE("windows open on dns triggers and collect per-source events") {
    DetectionConfig config;

    SUBCASE("single window") {
        auto windows = run_stream({{0.0, "A", Protocol::dns, "x.p.com"},
                                   {5.0, "A", Protocol::tls, "api.p.com"}},
                                  config);
        REQUIRE(windows.size() == 1);
        CHECK(windows[0].source == "A");
        CHECK(windows[0].start == 0.0);
        CHECK(windows[0].events.size() == 2);
    }

    SUBCASE("a later dns event reopens after the interval") {
        auto windows = run_stream({{0.0, "A", Protocol::dns, "x.p.com"},
                                   {20.0, "A", Protocol::dns, "y.p.com"}},
                                  config);
        REQUIRE(windows.size() == 2);
        CHECK(windows[0].start == 0.0);
        CHECK(windows[1].start == 20.0);
    }

    SUBCASE("non-dns traffic alone never opens a window") {
        auto windows = run_stream({{0.0, "A", Protocol::tls, "x.p.com"}}, config);
        CHECK(windows.empty());

        DetectionConfig any = config;
        any.trigger_any = true;
        auto with_any = run_stream({{0.0, "A", Protocol::tls, "x.p.com"}}, any);
        CHECK(with_any.size() == 1);
    }

    SUBCASE("events at the boundary belong to the window, later ones close it") {
        auto windows = run_stream({{0.0, "A", Protocol::dns, "x.p.com"},
                                   {15.0, "A", Protocol::tls, "y.p.com"},
                                   {16.5, "B", Protocol::dns, "z.p.com"}},
                                  config);
        REQUIRE(windows.size() == 2);
        CHECK(windows[0].source == "A");
        CHECK(windows[0].events.size() == 2); // 15.0 is inside [0, 15]
        CHECK(windows[1].source == "B");
    }

    SUBCASE("windows per source do not overlap") {
        auto windows = run_stream({{0.0, "A", Protocol::dns, "a.p.com"},
                                   {1.0, "A", Protocol::dns, "b.p.com"},
                                   {14.0, "A", Protocol::http, "c.p.com"}},
                                  config);
        REQUIRE(windows.size() == 1);
        CHECK(windows[0].events.size() == 3);
    }
}

TEST_CASE("out of order events") {
    DetectionConfig config;

    SUBCASE("within the slack they are reordered") {
        auto windows = run_stream({{10.0, "A", Protocol::dns, "a.p.com"},
                                   {9.4, "A", Protocol::dns, "b.p.com"},
                                   {30.0, "A", Protocol::dns, "c.p.com"}},
                                  config);
        REQUIRE(windows.size() == 2);
        REQUIRE(windows[0].events.size() == 2);
        CHECK(windows[0].events[0].ts == 9.4); // the earlier event opened the window
        CHECK(windows[0].start == 9.4);
    }

    SUBCASE("beyond the slack they are rejected") {
        SuffixRules rules;
        WindowStream stream(rules, config, kDefaultLevelCap);
        stream.push({10.0, "A", Protocol::dns, "a.p.com"});
        CHECK_THROWS_AS(stream.push({8.0, "A", Protocol::dns, "b.p.com"}), Error);
    }
}

TEST_CASE("window features are deduplicated level expansions") {
    DetectionConfig config;
    auto windows = run_stream({{0.0, "A", Protocol::dns, "cdn.api.p.com"},
                               {1.0, "A", Protocol::tls, "api.p.com"},
                               {2.0, "A", Protocol::tls, "not a domain!"}},
                              config);
    REQUIRE(windows.size() == 1);
    CHECK(windows[0].features ==
          std::set<std::string>{"p.com", "api.p.com", "cdn.api.p.com"});

    DetectionConfig no_expand = config;
    no_expand.expand_test_side = false;
    auto plain = run_stream({{0.0, "A", Protocol::dns, "cdn.api.p.com"}}, no_expand);
    CHECK(plain[0].features == std::set<std::string>{"cdn.api.p.com"});
}

TEST_CASE("score_window matches the formula") {
    auto set = example_set();
    const DnForest& phone = set.forests.at("phone");
    DetectionConfig config;

    SUBCASE("empty feature set scores zero") {
        auto ws = score_window(window_of({}), phone, config);
        CHECK(ws.score == 0.0);
        CHECK(ws.fired_tree_roots.empty());
    }

    SUBCASE("full coverage fires the collector on every tree") {
        std::set<std::string> all;
        double value_sum = 0.0;
        for (const auto& [root, tree] : phone.trees) {
            std::vector<const DnNode*> nodes;
            testoracle::collect_nodes(tree.root, nodes);
            for (const auto* n : nodes) {
                all.insert(n->name);
                value_sum += n->distilled_value;
            }
        }
        auto ws = score_window(window_of({all.begin(), all.end()}), phone, config);
        CHECK(ws.score ==
              doctest::Approx(value_sum / static_cast<double>(phone.total_nodes)).epsilon(1e-12));
        CHECK(ws.fired_tree_roots.size() == phone.trees.size());
    }

    SUBCASE("partial coverage counts only matched nodes") {
        // 1 of 4 nodes in the p.com tree
        auto ws = score_window(window_of({"push.p.com"}), phone, config);
        const DnNode* node = phone.find_node("push.p.com");
        CHECK(ws.score ==
              doctest::Approx(node->distilled_value / static_cast<double>(phone.total_nodes))
                  .epsilon(1e-12));
        CHECK(ws.fired_tree_roots.empty());
    }

    SUBCASE("unprepared forests are rejected") {
        DnForest bare = build_forest(make_features({{"x.com", 1, 1}}, "x"));
        CHECK_THROWS_AS(score_window(window_of({"x.com"}), bare, config), Error);
    }
}

TEST_CASE("scoring equals the naive triple loop on random instances") {
    std::mt19937 gen(77);
    const std::vector<std::string> parts = {"a", "b", "c", "d"};
    const std::vector<std::string> roots = {"q1.com", "q2.net", "q3.org"};

    for (int round = 0; round < 100; ++round) {
        DomainFeatureSet features;
        features.class_label = "r";
        int entries = 1 + static_cast<int>(gen() % 25);
        for (int i = 0; i < entries; ++i) {
            std::string name = roots[gen() % roots.size()];
            int level = 1 + static_cast<int>(gen() % 4);
            for (int l = 2; l <= level; ++l) name = parts[gen() % parts.size()] + "." + name;
            features.entries[name] = {level, 1 + gen() % 12};
        }
        FingerprintSet set;
        set.forests["r"] = build_forest(features);
        set = distill_fingerprints(set, DistillationParams{});
        const DnForest& forest = set.forests.at("r");

        std::set<std::string> names;
        int draws = static_cast<int>(gen() % 30);
        for (int i = 0; i < draws; ++i) {
            if (gen() % 2) {
                // a name known to the forest
                auto it = features.entries.begin();
                std::advance(it, gen() % features.entries.size());
                names.insert(it->first);
            } else {
                names.insert("zz" + std::to_string(gen() % 40) + ".q1.com");
            }
        }

        for (bool collector : {false, true}) {
            DetectionConfig config;
            config.collector_enabled = collector;
            config.gamma = 0.1 + static_cast<double>(gen() % 9) / 10.0;
            auto fast = score_window(window_of({names.begin(), names.end()}), forest, config);
            auto naive = testoracle::naive_score(names, forest, collector, config.gamma);
            CHECK(fast.score == doctest::Approx(naive.score).epsilon(1e-9));
            std::sort(naive.fired.begin(), naive.fired.end());
            CHECK(fast.fired_tree_roots == naive.fired);
        }
    }
}

TEST_CASE("collector and threshold behaviour") {
    auto set = example_set();
    const DnForest& phone = set.forests.at("phone");

    SUBCASE("enabling the collector never lowers a score") {
        std::mt19937 gen(99);
        std::vector<std::string> pool = {"p.com",         "api.p.com", "cdn.api.p.com",
                                         "push.p.com",    "common.net", "absent.x.com"};
        for (int round = 0; round < 50; ++round) {
            std::set<std::string> names;
            for (const auto& name : pool)
                if (gen() % 2) names.insert(name);
            DetectionConfig off;
            off.collector_enabled = false;
            DetectionConfig on;
            on.collector_enabled = true;
            auto window = window_of({names.begin(), names.end()});
            CHECK(score_window(window, phone, on).score >=
                  score_window(window, phone, off).score - 1e-12);
        }
    }

    SUBCASE("feature loss below (1 - gamma) keeps the collector score") {
        DetectionConfig config; // gamma 0.5
        std::set<std::string> full = {"p.com", "api.p.com", "cdn.api.p.com", "push.p.com"};
        auto full_score = score_window(window_of({full.begin(), full.end()}), phone, config);
        // drop 1 of 4 names: coverage 3/4 still above gamma
        auto partial = score_window(window_of({"p.com", "api.p.com", "push.p.com"}), phone, config);
        CHECK(partial.score == doctest::Approx(full_score.score).epsilon(1e-12));
        REQUIRE(partial.fired_tree_roots == std::vector<std::string>{"p.com"});
    }

    SUBCASE("raising epsilon never adds matched classes") {
        DetectionWindow window = window_of({"p.com", "api.p.com", "common.net"});
        DetectionConfig low;
        low.epsilon = 0.05;
        DetectionConfig high;
        high.epsilon = 0.6;
        auto low_det = classify_window(window, set, low);
        auto high_det = classify_window(window, set, high);
        for (const auto& label : high_det.matched_classes)
            CHECK(low_det.matched_classes.count(label) == 1);
    }
}

TEST_CASE("classify_window thresholds every class independently") {
    auto set = example_set();
    DetectionConfig config;

    SUBCASE("own tree fully present matches only that class") {
        auto detection =
            classify_window(window_of({"p.com", "api.p.com", "cdn.api.p.com", "push.p.com"}),
                            set, config);
        CHECK(detection.matched_classes == std::set<std::string>{"phone"});
        CHECK(detection.scores.at("phone") > 0.9);
        CHECK(detection.scores.at("tablet") < 0.1);
    }

    SUBCASE("a mixed window matches both classes") {
        auto detection = classify_window(
            window_of({"p.com", "api.p.com", "cdn.api.p.com", "push.p.com", "t.org", "sync.t.org"}),
            set, config);
        CHECK(detection.matched_classes == std::set<std::string>{"phone", "tablet"});
    }

    SUBCASE("unknown domains are background") {
        auto detection = classify_window(
            window_of({"u1.zz.com", "u2.zz.com", "u3.zz.com", "u4.zz.com", "u5.zz.com"}), set,
            config);
        CHECK(detection.matched_classes.empty());
    }

    SUBCASE("undistilled sets are rejected") {
        FingerprintSet raw;
        raw.forests["x"] = build_forest(make_features({{"x.com", 1, 1}}, "x"));
        CHECK_THROWS_AS(classify_window(window_of({"x.com"}), raw, config), Error);
    }
}

TEST_CASE("stream detection composes windowing and classification") {
    auto set = example_set();
    SuffixRules rules;
    DetectionConfig config;

    SUBCASE("one labeled burst, one detection") {
        StreamDetector detector(set, rules, config);
        double ts = 100.0;
        for (const char* domain : {"p.com", "api.p.com", "cdn.api.p.com", "push.p.com"}) {
            detector.push({ts, "10.0.0.9", ts == 100.0 ? Protocol::dns : Protocol::tls, domain});
            ts += 1.0;
        }
        detector.flush();
        REQUIRE(detector.pending());
        auto detection = detector.pop();
        CHECK(detection.matched_classes == std::set<std::string>{"phone"});
        CHECK_FALSE(detector.pending());
    }

    SUBCASE("background stream yields empty matches") {
        StreamDetector detector(set, rules, config);
        detector.push({0.0, "src", Protocol::dns, "random1.zz.org"});
        detector.push({1.0, "src", Protocol::tls, "random2.zz.org"});
        detector.flush();
        REQUIRE(detector.pending());
        CHECK(detector.pop().matched_classes.empty());
    }

    SUBCASE("interleaved sources produce one detection each") {
        StreamDetector detector(set, rules, config);
        detector.push({0.0, "A", Protocol::dns, "p.com"});
        detector.push({0.5, "B", Protocol::dns, "t.org"});
        detector.push({1.0, "A", Protocol::tls, "api.p.com"});
        detector.push({1.5, "B", Protocol::tls, "sync.t.org"});
        detector.flush();
        std::map<std::string, Detection> by_source;
        while (detector.pending()) {
            auto detection = detector.pop();
            by_source[detection.window.source] = detection;
        }
        REQUIRE(by_source.size() == 2);
        CHECK(by_source.at("A").matched_classes == std::set<std::string>{"phone"});
        CHECK(by_source.at("B").matched_classes == std::set<std::string>{"tablet"});
    }
}

TEST_CASE("scores are independent of event order within a window") {
    auto set = example_set();
    SuffixRules rules;
    DetectionConfig config;
    std::mt19937 gen(321);

    std::vector<DomainEvent> events = {
        {0.0, "s", Protocol::dns, "cdn.api.p.com"}, {1.0, "s", Protocol::tls, "push.p.com"},
        {2.0, "s", Protocol::tls, "common.net"},    {3.0, "s", Protocol::http, "push.p.com"},
        {4.0, "s", Protocol::dns, "t.org"},
    };
    auto baseline = classify_window(window_from_events(events, rules, config, kDefaultLevelCap),
                                    set, config);
    for (int round = 0; round < 20; ++round) {
        auto shuffled = events;
        for (std::size_t i = shuffled.size(); i > 1; --i)
            std::swap(shuffled[i - 1], shuffled[gen() % i]);
        auto detection = classify_window(
            window_from_events(shuffled, rules, config, kDefaultLevelCap), set, config);
        CHECK(detection.scores == baseline.scores);
        CHECK(detection.matched_classes == baseline.matched_classes);
    }
}

TEST_CASE("window stream invariants on randomized event streams") {
    DetectionConfig config;
    std::mt19937 gen(555);
    const std::vector<std::string> sources = {"A", "B", "C", "D"};

    for (int round = 0; round < 30; ++round) {
        std::vector<DomainEvent> events;
        double ts = 0.0;
        std::size_t dns_events = 0;
        for (int i = 0; i < 120; ++i) {
            ts += static_cast<double>(gen() % 300) / 100.0; // 0..3 s steps
            // jitter within the reorder slack
            double jitter = static_cast<double>(gen() % 80) / 100.0;
            Protocol proto = static_cast<Protocol>(gen() % 3);
            if (proto == Protocol::dns) ++dns_events;
            events.push_back({std::max(0.0, ts - jitter), sources[gen() % sources.size()], proto,
                              "d" + std::to_string(gen() % 20) + ".example.com"});
        }

        auto windows = run_stream(events, config);

        std::map<std::string, std::vector<std::pair<double, double>>> spans;
        std::size_t dns_in_windows = 0;
        for (const auto& window : windows) {
            for (const auto& event : window.events) {
                CHECK(event.src == window.source);
                CHECK(event.ts >= window.start);
                CHECK(event.ts <= window.start + config.tau);
                if (event.proto == Protocol::dns) ++dns_in_windows;
            }
            spans[window.source].push_back({window.start, window.end});
        }
        // per-source windows do not overlap
        for (auto& [source, list] : spans) {
            std::sort(list.begin(), list.end());
            for (std::size_t i = 1; i < list.size(); ++i)
                CHECK(list[i].first > list[i - 1].second);
        }
        // every dns event belongs to exactly one window of its source
        CHECK(dns_in_windows == dns_events);
    }
}

TEST_CASE("detection records serialize with config header") {
    auto set = example_set();
    DetectionConfig config;
    auto detection = classify_window(window_of({"p.com"}), set, config);
    detection.window.source = "10.1.1.1";
    detection.window.start = 42.5;
    std::string line = detection_to_line(detection);
    CHECK(line.find("\"src\":\"10.1.1.1\"") != std::string::npos);
    CHECK(line.find("\"window_start\":42.5") != std::string::npos);
    CHECK(line.find("\"scores\"") != std::string::npos);

    std::string header = detection_config_header(config, "abc123");
    CHECK(header.find("\"config\"") != std::string::npos);
    CHECK(header.find("\"tau\":15.0") != std::string::npos);
    CHECK(header.find("\"epsilon\":0.4") != std::string::npos);
}
