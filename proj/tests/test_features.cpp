#include <doctest.h>

#include <algorithm>

#include "bcid/features.hpp"
#include "bcid/rng.hpp"

#include "helpers.hpp"
#include "oracle_features.hpp"

using namespace bcid;
using testutil::conn;
using testutil::frame_of;

TEST_CASE("extract_features: singleton frame forces self-referential statistics") {
    for (ConnFlag flag : {ConnFlag::SF, ConnFlag::S0}) {
        const auto c = conn("10.0.0.1", 1000, "10.0.0.2", 30303, Service::EthP2p, flag);
        const auto f = frame_of({c});
        const auto fv = extract_features(f, c);
        CHECK(fv.values[6] == 1.0);  // count
        CHECK(fv.values[7] == 1.0);  // srv_count
        CHECK(fv.values[9] == 1.0);  // same_srv_rate
        CHECK(fv.values[10] == 0.0); // diff_srv_rate
        const double serror = flag == ConnFlag::S0 ? 1.0 : 0.0;
        CHECK(fv.values[8] == serror);
        CHECK(fv.values[11] == serror);
        CHECK(fv.values[18] == serror);
        CHECK(fv.values[20] == serror);
    }
}

TEST_CASE("extract_features: hand-enumerated 4-connection frame") {
    // three connections from 10.0.0.1 (two eth-p2p SF, one http S0), one from
    // 10.0.0.2; current = first eth-p2p connection
    const auto c1 = conn("10.0.0.1", 1000, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF, 0.0);
    const auto c2 = conn("10.0.0.1", 1001, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF, 0.1);
    const auto c3 = conn("10.0.0.1", 1002, "10.0.0.3", 80, Service::Http, ConnFlag::S0, 0.2);
    const auto c4 = conn("10.0.0.2", 1003, "10.0.0.3", 80, Service::Http, ConnFlag::SF, 0.3);
    const auto f = frame_of({c1, c2, c3, c4});

    const auto fv = extract_features(f, c1);
    CHECK(fv.values[6] == 3.0);               // count: three from 10.0.0.1
    CHECK(fv.values[8] == doctest::Approx(1.0 / 3.0)); // serror_rate
    CHECK(fv.values[9] == doctest::Approx(2.0 / 3.0)); // same_srv_rate
    CHECK(fv.values[10] == doctest::Approx(1.0 / 3.0)); // diff_srv_rate
}

TEST_CASE("extract_features: DoS-style frame keyed on destination") {
    // ten S0 connections to one destination, distinct source ports
    std::vector<ConnectionRecord> cs;
    for (int i = 0; i < 10; ++i)
        cs.push_back(conn("10.0.9." + std::to_string(i), static_cast<std::uint16_t>(2000 + i),
                          "10.0.0.2", 30303, Service::EthP2p, ConnFlag::S0, 0.01 * i, 0.0, 60, 0));
    const auto f = frame_of(cs);
    const auto fv = extract_features(f, cs[3]);
    CHECK(fv.values[13] == 10.0); // dst_host_count
    CHECK(fv.values[18] == 1.0);  // dst_host_serror_rate
    CHECK(fv.values[17] == doctest::Approx(0.1)); // dst_host_same_src_port_rate
}

TEST_CASE("extract_features: current must belong to the frame") {
    const auto c1 = conn("10.0.0.1", 1000, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF);
    const auto c2 = conn("10.0.0.9", 9999, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF);
    const auto f = frame_of({c1});
    CHECK_THROWS_AS(extract_features(f, c2), CurrentNotInFrame);
}

namespace {

Frame random_frame(std::mt19937_64& rng, std::size_t max_conns) {
    const std::size_t n = 1 + uniform_index(rng, 0, max_conns - 1);
    std::vector<ConnectionRecord> cs;
    for (std::size_t i = 0; i < n; ++i) {
        const auto src = "10.0.0." + std::to_string(uniform_index(rng, 1, 4));
        const auto dst = "10.0.1." + std::to_string(uniform_index(rng, 1, 3));
        const auto service = static_cast<Service>(uniform_index(rng, 0, 4));
        const auto flag = static_cast<ConnFlag>(uniform_index(rng, 0, 3));
        const auto sport = static_cast<std::uint16_t>(uniform_index(rng, 1000, 1006));
        cs.push_back(conn(src, sport, dst, 30303, service, flag, 0.05 * static_cast<double>(i),
                          uniform_range(rng, 0.0, 0.4), uniform_index(rng, 0, 2000),
                          uniform_index(rng, 0, 2000)));
    }
    return frame_of(std::move(cs));
}

} // namespace

TEST_CASE("extract_features: matches brute-force oracle on small random frames") {
    auto rng = fork_rng(7001, "test.features.oracle");
    for (int trial = 0; trial < 500; ++trial) {
        const Frame f = random_frame(rng, 6);
        for (const auto& cur : f.connections) {
            const auto fv = extract_features(f, cur);
            const auto expected = testutil::oracle_features(f, cur);
            for (std::size_t i = 0; i < kFeatureCount; ++i) {
                INFO("trial ", trial, " feature ", kFeatureNames[i]);
                CHECK(fv.values[i] == expected[i]);
            }
        }
    }
}

TEST_CASE("extract_features: rate bounds and count ceilings on random frames") {
    auto rng = fork_rng(7002, "test.features.bounds");
    for (int trial = 0; trial < 1000; ++trial) {
        const Frame f = random_frame(rng, 12);
        const auto n = static_cast<double>(f.connections.size());
        const auto& cur = f.connections[uniform_index(rng, 0, f.connections.size() - 1)];
        const auto fv = extract_features(f, cur);
        for (std::size_t i : {8, 9, 10, 11, 12, 15, 16, 17, 18, 19, 20}) {
            CHECK(fv.values[i] >= 0.0);
            CHECK(fv.values[i] <= 1.0);
        }
        for (std::size_t i : {6, 7, 13, 14}) {
            CHECK(fv.values[i] >= 1.0); // current itself is in every reference set
            CHECK(fv.values[i] <= n);
            CHECK(fv.values[i] == std::floor(fv.values[i]));
        }
    }
}

TEST_CASE("extract_features: invariant under permutation of frame connections") {
    auto rng = fork_rng(7003, "test.features.permute");
    const Frame f = random_frame(rng, 6);
    const auto& cur = f.connections.front();
    const auto base = extract_features(f, cur);

    Frame shuffled = f;
    std::reverse(shuffled.connections.begin(), shuffled.connections.end());
    const auto fv = extract_features(shuffled, cur);
    CHECK(fv.values == base.values);
}

TEST_CASE("label_samples: empty rule set labels everything normal") {
    const auto c = conn("10.0.0.1", 1000, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF);
    const auto f = frame_of({c});
    auto samples = extract_frame_samples(f);
    for (auto& s : samples)
        s.features.label = ClassId::Dos; // pre-dirty
    label_samples(samples, LabelRuleSet{});
    for (const auto& s : samples)
        CHECK(s.features.label == ClassId::Normal);
}

TEST_CASE("label_samples: DoS rule labels the flood frame") {
    std::vector<ConnectionRecord> cs;
    for (int i = 0; i < 10; ++i)
        cs.push_back(conn("10.9.9.9", static_cast<std::uint16_t>(2000 + i), "10.0.0.2", 30303,
                          Service::EthP2p, ConnFlag::S0, 0.01 * i));
    const auto f = frame_of(cs);
    auto samples = extract_frame_samples(f);

    LabelRuleSet rules;
    rules.rules.push_back(LabelRule{ClassId::Dos, "10.9.9.9", {}, {}, ConnFlag::S0, {}, {}});
    label_samples(samples, rules);
    std::size_t dos = 0;
    for (const auto& s : samples)
        dos += s.features.label == ClassId::Dos;
    CHECK(dos == 10);
}

TEST_CASE("label_samples: mixed frame labels exactly the attacker samples") {
    std::vector<ConnectionRecord> cs = {
        conn("10.9.9.9", 2000, "10.0.0.2", 8545, Service::EthRpc, ConnFlag::SF, 0.0),
        conn("10.9.9.9", 2001, "10.0.0.2", 8545, Service::EthRpc, ConnFlag::SF, 0.1),
        conn("10.0.0.3", 2002, "10.0.0.2", 8545, Service::EthRpc, ConnFlag::SF, 0.2),
        conn("10.0.0.4", 2003, "10.0.0.2", 80, Service::Http, ConnFlag::SF, 0.3),
        conn("10.0.0.5", 2004, "10.0.0.2", 30303, Service::EthP2p, ConnFlag::SF, 0.4),
    };
    const auto f = frame_of(cs);
    auto samples = extract_frame_samples(f);

    LabelRuleSet rules;
    rules.rules.push_back(LabelRule{ClassId::Fot, "10.9.9.9", {}, Service::EthRpc, {}, {}, {}});
    label_samples(samples, rules);
    std::size_t attacks = 0;
    for (const auto& s : samples)
        attacks += s.features.label != ClassId::Normal;
    CHECK(attacks == 2);
    // order preserved
    CHECK(samples.size() == 5);
    for (std::size_t i = 0; i < samples.size(); ++i)
        CHECK(samples[i].connection == f.connections[i]);
}

TEST_CASE("label_samples: first matching rule wins") {
    const auto c = conn("10.9.9.9", 2000, "10.0.0.2", 8545, Service::EthRpc, ConnFlag::SF);
    const auto f = frame_of({c});
    auto samples = extract_frame_samples(f);

    LabelRuleSet rules;
    rules.rules.push_back(LabelRule{ClassId::Bp, "10.9.9.9", {}, {}, {}, {}, {}});
    rules.rules.push_back(LabelRule{ClassId::Fot, {}, {}, Service::EthRpc, {}, {}, {}});
    label_samples(samples, rules);
    CHECK(samples[0].features.label == ClassId::Bp);
}

TEST_CASE("label_samples: identical predicates with different classes conflict") {
    LabelRuleSet rules;
    rules.rules.push_back(LabelRule{ClassId::Bp, "10.9.9.9", {}, Service::EthRpc, {}, {}, {}});
    rules.rules.push_back(LabelRule{ClassId::Fot, "10.9.9.9", {}, Service::EthRpc, {}, {}, {}});
    CHECK_THROWS_AS(rules.validate(), ConflictingRules);

    std::vector<Sample> none;
    CHECK_THROWS_AS(label_samples(none, rules), ConflictingRules);
}
