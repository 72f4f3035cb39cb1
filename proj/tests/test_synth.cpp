#include <doctest.h>

#include <map>

#include "bcid/synth.hpp"

using namespace bcid;

TEST_CASE("ScenarioConfig validation") {
    ScenarioConfig ok;
    CHECK_NOTHROW(ok.validate());

    ScenarioConfig bad = ok;
    bad.duration = 0.0;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);

    bad = ok;
    bad.benign_tx_rate = -1.0;
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);

    bad = ok;
    bad.attack = AttackConfig{ClassId::Dos, 30.0, 10.0, "10.9.9.9"}; // start >= duration
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);

    bad = ok;
    bad.attack = AttackConfig{ClassId::Normal, 1.0, 10.0, "10.9.9.9"};
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);

    bad = ok;
    bad.attack = AttackConfig{ClassId::Fot, 1.0, 0.0, "10.9.9.9"};
    CHECK_THROWS_AS(bad.validate(), InvalidConfig);
}

TEST_CASE("generate_trace: identical seed gives byte-identical traces") {
    ScenarioConfig cfg;
    cfg.seed = 424242;
    cfg.duration = 6.0;
    cfg.attack = AttackConfig{ClassId::Dos, 2.0, 20.0, "10.9.9.9"};
    const auto a = generate_trace(cfg);
    const auto b = generate_trace(cfg);
    REQUIRE(a.size() == b.size());
    for (std::size_t n = 0; n < a.size(); ++n)
        CHECK(a[n] == b[n]);

    ScenarioConfig other = cfg;
    other.seed = 424243;
    CHECK(generate_trace(other)[0] != a[0]);
}

TEST_CASE("generate_trace: traces are sorted and per node") {
    ScenarioConfig cfg;
    cfg.seed = 7;
    cfg.duration = 5.0;
    cfg.node_count = 3;
    const auto traces = generate_trace(cfg);
    REQUIRE(traces.size() == 3);
    for (std::size_t n = 0; n < traces.size(); ++n) {
        REQUIRE(!traces[n].empty());
        double prev = 0.0;
        for (const auto& p : traces[n]) {
            CHECK(p.timestamp >= prev);
            prev = p.timestamp;
            // traffic the node observes is addressed to or from it
            const auto self = node_ip(n);
            CHECK((p.src_ip == self || p.dst_ip == self));
        }
    }
}

TEST_CASE("generate_trace: attack-free capture labels everything normal") {
    ScenarioConfig cfg;
    cfg.seed = 11;
    cfg.duration = 10.0;
    const auto traces = generate_trace(cfg);
    const auto rules = scenario_label_rules(cfg);
    CHECK(rules.rules.empty());
    for (const auto& trace : traces)
        for (const auto& s : extract_trace_samples(trace, rules))
            CHECK(s.features.label == ClassId::Normal);
}

TEST_CASE("generate_trace: DoS flood count lower bound at the fixed seed") {
    // intensity 50/s over [2, 4): ~100 S0 connections expected in those frames
    ScenarioConfig cfg;
    cfg.seed = 20240501;
    cfg.duration = 4.0;
    cfg.attack = AttackConfig{ClassId::Dos, 2.0, 50.0, "10.9.9.9"};
    const auto trace = generate_trace(cfg)[0];

    std::size_t flood = 0;
    for (const auto& f : make_frames(trace, 2.0))
        if (f.window_start >= 2.0)
            for (const auto& c : f.connections)
                flood += c.five_tuple.src_ip == "10.9.9.9" && c.flag == ConnFlag::S0;
    CHECK(flood >= 80);
}

TEST_CASE("scenario_label_rules: direct construction per attack kind") {
    ScenarioConfig cfg;
    cfg.duration = 10.0;

    cfg.attack = AttackConfig{ClassId::Dos, 1.0, 30.0, "10.9.9.9"};
    auto rules = scenario_label_rules(cfg);
    REQUIRE(rules.rules.size() == 1);
    CHECK(rules.rules[0].cls == ClassId::Dos);
    CHECK(rules.rules[0].src_ip == "10.9.9.9");
    CHECK(rules.rules[0].flag == ConnFlag::S0);

    cfg.attack->kind = ClassId::Fot;
    rules = scenario_label_rules(cfg);
    CHECK(rules.rules[0].cls == ClassId::Fot);
    CHECK(rules.rules[0].service == Service::EthRpc);

    cfg.attack->kind = ClassId::Bp;
    rules = scenario_label_rules(cfg);
    CHECK(rules.rules[0].cls == ClassId::Bp);
    CHECK(rules.rules[0].service == Service::EthRpc);
}

TEST_CASE("scenario rules label exactly the injected connections") {
    ScenarioConfig cfg;
    cfg.seed = 31;
    cfg.duration = 8.0;
    cfg.attack = AttackConfig{ClassId::Fot, 1.0, 60.0, "10.9.9.9"};
    const auto trace = generate_trace(cfg)[0];
    const auto samples = extract_trace_samples(trace, scenario_label_rules(cfg));

    std::size_t attacker_samples = 0, labeled = 0;
    for (const auto& s : samples) {
        const bool from_attacker = s.connection.five_tuple.src_ip == "10.9.9.9";
        attacker_samples += from_attacker;
        labeled += s.features.label == ClassId::Fot;
        CHECK((s.features.label == ClassId::Fot) == from_attacker);
    }
    CHECK(attacker_samples > 0);
    CHECK(labeled == attacker_samples);
}

TEST_CASE("separability: DoS frames saturate dst serror rate, BP stays low-volume") {
    ScenarioConfig dos;
    dos.seed = 41;
    dos.duration = 20.0;
    dos.attack = AttackConfig{ClassId::Dos, 2.0, 15.0, "10.9.9.9"};
    const auto dos_trace = generate_trace(dos)[0];
    std::size_t dos_frames = 0;
    for (const auto& f : make_frames(dos_trace, 2.0)) {
        if (f.window_start < 2.0 || f.connections.empty())
            continue;
        ++dos_frames;
        for (const auto& c : f.connections)
            if (c.five_tuple.src_ip == "10.9.9.9") {
                const auto fv = extract_features(f, c);
                CHECK(fv.values[18] >= 0.5); // dst_host_serror_rate
            }
    }
    CHECK(dos_frames > 0);

    ScenarioConfig bp = dos;
    bp.attack = AttackConfig{ClassId::Bp, 2.0, 5.0, "10.9.9.9"};
    const auto bp_trace = generate_trace(bp)[0];
    for (const auto& f : make_frames(bp_trace, 2.0))
        CHECK(f.connections.size() < 50); // near-normal volume
}

TEST_CASE("downsample_by_class: defaults mirror the designed dataset counts") {
    const ClassTargets t;
    CHECK(t.counts[0] == 30000);
    CHECK(t.counts[1] == 3000);
    CHECK(t.counts[2] == 3000);
    CHECK(t.counts[3] == 3000);
}

TEST_CASE("downsample_by_class: honors targets and scarcity") {
    auto rng = fork_rng(55, "test.downsample.data");
    std::vector<FeatureVector> pool;
    for (int i = 0; i < 400; ++i) {
        FeatureVector fv;
        fv.values[0] = static_cast<double>(i);
        fv.label = static_cast<ClassId>(uniform_index(rng, 0, 3));
        pool.push_back(fv);
    }
    std::array<std::size_t, 4> have{};
    for (const auto& fv : pool)
        ++have[static_cast<std::size_t>(fv.label)];

    ClassTargets t;
    t.counts = {50, 20, 1000, 0}; // class 2 target exceeds supply, class 3 dropped
    auto srng = fork_rng(55, "test.downsample");
    const auto picked = downsample_by_class(pool, t, srng);

    std::array<std::size_t, 4> got{};
    std::map<double, int> seen; // no sample may repeat
    for (const auto& fv : picked) {
        ++got[static_cast<std::size_t>(fv.label)];
        CHECK(++seen[fv.values[0]] == 1);
    }
    CHECK(got[0] == 50);
    CHECK(got[1] == 20);
    CHECK(got[2] == have[2]);
    CHECK(got[3] == 0);

    auto srng2 = fork_rng(55, "test.downsample");
    CHECK(downsample_by_class(pool, t, srng2) == picked);
}

TEST_CASE("stratified_split: per-class proportions, order and determinism") {
    std::vector<FeatureVector> data;
    for (int i = 0; i < 400; ++i) {
        FeatureVector fv;
        fv.values[0] = static_cast<double>(i);
        fv.label = static_cast<ClassId>(i % 2 == 0 ? 0 : 2); // 200 of each
        data.push_back(fv);
    }

    auto srng = fork_rng(66, "test.split");
    const auto s = stratified_split(data, 0.8, srng);
    CHECK(s.train.size() == 320);
    CHECK(s.test.size() == 80);
    std::array<std::size_t, 4> train_cls{}, test_cls{};
    for (const auto& fv : s.train)
        ++train_cls[static_cast<std::size_t>(fv.label)];
    for (const auto& fv : s.test)
        ++test_cls[static_cast<std::size_t>(fv.label)];
    CHECK(train_cls[0] == 160);
    CHECK(train_cls[2] == 160);
    CHECK(test_cls[0] == 40);
    CHECK(test_cls[2] == 40);

    // original order survives within each half
    for (std::size_t i = 1; i < s.train.size(); ++i)
        CHECK(s.train[i - 1].values[0] < s.train[i].values[0]);

    auto srng2 = fork_rng(66, "test.split");
    const auto s2 = stratified_split(data, 0.8, srng2);
    CHECK(s2.train == s.train);
    CHECK(s2.test == s.test);

    auto srng3 = fork_rng(66, "test.split");
    CHECK_THROWS_AS(stratified_split(data, 1.5, srng3), InvalidConfig);
}

TEST_CASE("build_datasets: default quotas are reachable with long enough captures") {
    // full-size build for one node: 30,000 normal and 3,000 per attack class
    DatasetBuildConfig cfg;
    cfg.seed = 71;
    cfg.node_count = 2;
    cfg.normal_duration = 800.0;
    cfg.attack_duration = 70.0;
    cfg.benign_tx_rate = 40.0;
    cfg.bp_intensity = 50.0;
    cfg.dos_intensity = 50.0;
    cfg.fot_intensity = 50.0;
    ClassTargets table, tiny;
    tiny.counts = {10, 5, 5, 5};
    cfg.per_node_targets = {table, tiny};

    const auto datasets = build_datasets(cfg);
    std::array<std::size_t, 4> got{};
    for (const auto& fv : datasets[0])
        ++got[static_cast<std::size_t>(fv.label)];
    CHECK(got[0] == 30000);
    CHECK(got[1] == 3000);
    CHECK(got[2] == 3000);
    CHECK(got[3] == 3000);
}

TEST_CASE("build_datasets: per-node captures hit their class quotas") {
    DatasetBuildConfig cfg;
    cfg.seed = 61;
    cfg.node_count = 2;
    cfg.normal_duration = 40.0;
    cfg.attack_duration = 20.0;
    cfg.benign_tx_rate = 10.0;
    cfg.bp_intensity = 10.0;
    cfg.dos_intensity = 15.0;
    cfg.fot_intensity = 40.0;
    ClassTargets t;
    t.counts = {200, 40, 40, 40};
    cfg.per_node_targets = {t, t};

    const auto datasets = build_datasets(cfg);
    REQUIRE(datasets.size() == 2);
    for (const auto& d : datasets) {
        std::array<std::size_t, 4> got{};
        for (const auto& fv : d)
            ++got[static_cast<std::size_t>(fv.label)];
        CHECK(got[0] == 200);
        CHECK(got[1] == 40);
        CHECK(got[2] == 40);
        CHECK(got[3] == 40);
    }
    // nodes see different traffic
    CHECK(datasets[0] != datasets[1]);
}
