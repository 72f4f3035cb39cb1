#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <fstream>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bcid/dbn.hpp"
#include "bcid/errors.hpp"
#include "bcid/rng.hpp"

namespace bcid {

struct GlobalModel {
    std::uint64_t round_index = 0;
    DbnModel model;
};

struct TrainConfig {
    double mu = 1.0;                   // learning rate of the global update
    std::uint64_t max_rounds = 300;
    double convergence_epsilon = 1e-5; // on the L2 norm of the global delta
    std::size_t local_batch = 0;       // 0 = full batch
    std::size_t node_count = 3;
    std::uint64_t seed = 1;
    bool include_generative_term = false;
    unsigned generative_cd_k = 1;
    PretrainConfig pretrain;
    std::vector<std::size_t> hidden_sizes = {64, 32};
    double message_timeout_s = 30.0;
    std::vector<double> node_latency_s; // simulated per-message latency, per node

    void validate() const {
        if (mu <= 0.0)
            throw InvalidConfig("mu must be positive");
        if (node_count < 1)
            throw InvalidConfig("node_count must be >= 1");
    }
};

// Element-wise arithmetic mean. Bundles are reduced in ascending index order
// so the result is bit-reproducible regardless of arrival order.
inline GradientBundle average_gradients(std::span<const GradientBundle> bundles) {
    if (bundles.empty())
        throw EmptyInput("average_gradients: no bundles");
    GradientBundle avg = bundles[0];
    for (std::size_t k = 1; k < bundles.size(); ++k)
        avg.add(bundles[k]);
    avg.scale_by(1.0 / static_cast<double>(bundles.size()));
    return avg;
}

// --- simulated message layer -------------------------------------------------

enum class MessageKind { GradientUp, ModelDown };

inline std::string_view to_name(MessageKind k) {
    return k == MessageKind::GradientUp ? "gradient_up" : "model_down";
}

// What the wire sees. Payloads are gradient bundles or global models only;
// summaries record just the norm and a checksum.
struct TranscriptEntry {
    MessageKind kind = MessageKind::GradientUp;
    std::uint64_t round = 0;
    int node_id = -1; // -1 for the server broadcast
    double payload_l2 = 0.0;
    std::uint64_t checksum = 0;

    bool operator==(const TranscriptEntry&) const = default;
};

using Transcript = std::vector<TranscriptEntry>;

inline void write_transcript_jsonl(std::ostream& os, const Transcript& t) {
    for (const auto& e : t) {
        nlohmann::ordered_json j;
        j["kind"] = to_name(e.kind);
        j["round"] = e.round;
        j["node"] = e.node_id;
        j["payload_l2"] = e.payload_l2;
        j["checksum"] = e.checksum;
        os << j.dump() << '\n';
    }
}

inline void write_transcript_jsonl(const std::string& path, const Transcript& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw Error("io_error", "cannot open " + path + " for writing");
    write_transcript_jsonl(os, t);
}

namespace detail {

struct GradientUpMessage {
    int node_id = 0;
    std::uint64_t round = 0;
    GradientBundle bundle;
};

// In-process mailbox between node threads and the aggregation role.
class MessageBus {
public:
    void post_gradient(GradientUpMessage msg, double latency_s) {
        if (latency_s > 0.0)
            std::this_thread::sleep_for(std::chrono::duration<double>(latency_s));
        {
            std::lock_guard lock(mutex_);
            inbox_.push_back(std::move(msg));
        }
        cv_.notify_all();
    }

    // Blocks until `expected` gradients for `round` arrived, or times out.
    std::vector<GradientUpMessage> await_round(std::uint64_t round, std::size_t expected,
                                               double timeout_s) {
        std::unique_lock lock(mutex_);
        const auto deadline =
            std::chrono::steady_clock::now() + std::chrono::duration<double>(timeout_s);
        auto count = [&] {
            std::size_t n = 0;
            for (const auto& m : inbox_)
                if (m.round == round)
                    ++n;
            return n;
        };
        if (!cv_.wait_until(lock, deadline, [&] { return count() >= expected; }))
            throw StragglerTimeout("round " + std::to_string(round) + ": " +
                                   std::to_string(count()) + "/" + std::to_string(expected) +
                                   " gradients arrived within " + std::to_string(timeout_s) +
                                   " s");
        std::vector<GradientUpMessage> got;
        for (auto it = inbox_.begin(); it != inbox_.end();) {
            if (it->round == round) {
                got.push_back(std::move(*it));
                it = inbox_.erase(it);
            } else {
                ++it;
            }
        }
        return got;
    }

private:
    std::mutex mutex_;
    std::condition_variable cv_;
    std::vector<GradientUpMessage> inbox_;
};

} // namespace detail

// --- the collaborative loop ---------------------------------------------------

struct NodeState {
    int node_id = 0;
    DbnModel model;
    std::vector<EncodedSample> data;
};

struct ServerState {
    GlobalModel global;
    TrainConfig cfg;
    Transcript transcript;
};

struct RoundMetrics {
    std::uint64_t round = 0;
    double avg_gradient_norm = 0.0;
    double delta_norm = 0.0;
};

namespace detail {

inline std::vector<EncodedSample> select_batch(const NodeState& node, const TrainConfig& cfg,
                                               std::uint64_t round) {
    if (cfg.local_batch == 0 || cfg.local_batch >= node.data.size())
        return node.data;
    auto rng = fork_rng(cfg.seed, "fed.batch",
                        (static_cast<std::uint64_t>(node.node_id) << 32) ^ round);
    std::vector<EncodedSample> batch;
    std::vector<std::size_t> idx(node.data.size());
    std::iota(idx.begin(), idx.end(), 0);
    for (std::size_t i = 0; i < cfg.local_batch; ++i) {
        const std::size_t j = uniform_index(rng, i, idx.size() - 1);
        std::swap(idx[i], idx[j]);
        batch.push_back(node.data[idx[i]]);
    }
    return batch;
}

inline GradientBundle local_gradient(const NodeState& node, const TrainConfig& cfg,
                                     std::uint64_t round) {
    const auto batch = select_batch(node, cfg, round);
    GradientBundle g = supervised_gradient(node.model, batch);
    if (cfg.include_generative_term) {
        auto rng = fork_rng(cfg.seed, "fed.cd",
                            (static_cast<std::uint64_t>(node.node_id) << 32) ^ round);
        add_generative_term(g, node.model, batch, cfg.generative_cd_k, rng);
    }
    return g;
}

inline std::uint64_t model_checksum(const DbnModel& m) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto eat_v = [&](const Vector& v) { h = fnv1a_bytes(v.data(), v.size() * sizeof(double), h); };
    auto eat_m = [&](const Matrix& x) {
        h = fnv1a_bytes(x.data().data(), x.size() * sizeof(double), h);
    };
    eat_m(m.grbm.w); eat_v(m.grbm.b1); eat_v(m.grbm.b2); eat_v(m.grbm.sigma);
    for (const auto& r : m.rbms) {
        eat_m(r.w); eat_v(r.b1); eat_v(r.b2);
    }
    eat_m(m.head.w); eat_v(m.head.b);
    return h;
}

inline double model_l2(const DbnModel& m) {
    double s = sum_squares(m.grbm.w) + sum_squares(m.grbm.b1) + sum_squares(m.grbm.b2);
    for (const auto& r : m.rbms)
        s += sum_squares(r.w) + sum_squares(r.b1) + sum_squares(r.b2);
    s += sum_squares(m.head.w) + sum_squares(m.head.b);
    return std::sqrt(s);
}

} // namespace detail

// One synchronous round: every node computes its local gradient against the
// current global model and posts it; the server waits on the barrier,
// averages in node-id order, updates the global model and broadcasts it.
inline RoundMetrics run_round(ServerState& server, std::vector<NodeState>& nodes) {
    const std::uint64_t round = server.global.round_index;
    detail::MessageBus bus;

    std::vector<std::thread> workers;
    std::vector<std::exception_ptr> failures(nodes.size());
    for (std::size_t i = 0; i < nodes.size(); ++i) {
        workers.emplace_back([&, i] {
            try {
                detail::GradientUpMessage msg;
                msg.node_id = nodes[i].node_id;
                msg.round = round;
                msg.bundle = detail::local_gradient(nodes[i], server.cfg, round);
                const double latency = i < server.cfg.node_latency_s.size()
                                           ? server.cfg.node_latency_s[i]
                                           : 0.0;
                bus.post_gradient(std::move(msg), latency);
            } catch (...) {
                failures[i] = std::current_exception();
            }
        });
    }

    std::vector<detail::GradientUpMessage> arrived;
    try {
        arrived = bus.await_round(round, nodes.size(), server.cfg.message_timeout_s);
    } catch (...) {
        for (auto& w : workers)
            w.join();
        for (auto& f : failures)
            if (f)
                std::rethrow_exception(f);
        throw;
    }
    for (auto& w : workers)
        w.join();
    for (auto& f : failures)
        if (f)
            std::rethrow_exception(f);

    // canonical aggregation order, independent of arrival order
    std::sort(arrived.begin(), arrived.end(),
              [](const auto& a, const auto& b) { return a.node_id < b.node_id; });

    std::vector<GradientBundle> bundles;
    bundles.reserve(arrived.size());
    for (auto& m : arrived) {
        server.transcript.push_back(TranscriptEntry{MessageKind::GradientUp, round, m.node_id,
                                                    m.bundle.l2_norm(), m.bundle.checksum()});
        bundles.push_back(std::move(m.bundle));
    }

    const GradientBundle avg = average_gradients(bundles);
    server.global.model = apply_update(server.global.model, avg, server.cfg.mu);
    server.global.round_index = round + 1;

    server.transcript.push_back(TranscriptEntry{MessageKind::ModelDown, round + 1, -1,
                                                detail::model_l2(server.global.model),
                                                detail::model_checksum(server.global.model)});
    for (auto& n : nodes)
        n.model = server.global.model;

    RoundMetrics rm;
    rm.round = round;
    rm.avg_gradient_norm = avg.l2_norm();
    rm.delta_norm = server.cfg.mu * avg.l2_norm();
    return rm;
}

struct RunReport {
    std::uint64_t rounds_executed = 0;
    bool converged = false;
    double final_delta_norm = 0.0;
    std::vector<RoundMetrics> per_round;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["rounds_executed"] = rounds_executed;
        j["converged"] = converged;
        j["final_delta_norm"] = final_delta_norm;
        j["per_round"] = nlohmann::json::array();
        for (const auto& r : per_round) {
            nlohmann::json rj;
            rj["round"] = r.round;
            rj["avg_gradient_norm"] = r.avg_gradient_norm;
            rj["delta_norm"] = r.delta_norm;
            j["per_round"].push_back(std::move(rj));
        }
        return j;
    }
};

struct CollabResult {
    GlobalModel global;
    RunReport report;
    Transcript transcript;
};

namespace detail {

template <typename Model, typename Slot>
std::vector<Slot*> parameter_slots(Model& m) {
    std::vector<Slot*> s;
    s.push_back(&m.grbm.w.data());
    s.push_back(&m.grbm.b1);
    s.push_back(&m.grbm.b2);
    for (auto& r : m.rbms) {
        s.push_back(&r.w.data());
        s.push_back(&r.b1);
        s.push_back(&r.b2);
    }
    s.push_back(&m.head.w.data());
    s.push_back(&m.head.b);
    return s;
}

// Element-wise parameter mean; the warm start the server broadcasts after
// local pre-training (equals the common model when all nodes agree).
inline DbnModel average_models(std::span<const DbnModel> models) {
    DbnModel avg = models[0];
    const double w = 1.0 / static_cast<double>(models.size());

    const auto slots = parameter_slots<DbnModel, Vector>(avg);
    for (Vector* v : slots)
        std::fill(v->begin(), v->end(), 0.0);
    for (const DbnModel& m : models) {
        const auto src = parameter_slots<const DbnModel, const Vector>(m);
        for (std::size_t i = 0; i < slots.size(); ++i) {
            if (slots[i]->size() != src[i]->size())
                throw ShapeMismatch("average_models: node models are not shape-congruent");
            for (std::size_t j = 0; j < slots[i]->size(); ++j)
                (*slots[i])[j] += w * (*src[i])[j];
        }
    }
    return avg;
}

inline std::vector<Vector> unlabeled_inputs(const std::vector<EncodedSample>& data) {
    std::vector<Vector> v;
    v.reserve(data.size());
    for (const auto& s : data)
        v.push_back(s.input);
    return v;
}

} // namespace detail

// The collaborative mode: every node pre-trains on its own unlabeled inputs,
// the server starts from the parameter mean, then synchronous gradient
// rounds run until the global delta norm drops under epsilon or the round
// cap is hit.
inline CollabResult train_collaborative(std::span<const std::vector<FeatureVector>> datasets,
                                        const TrainConfig& cfg) {
    cfg.validate();
    if (datasets.empty())
        throw EmptyDataset("train_collaborative: no datasets");
    for (std::size_t k = 0; k < datasets.size(); ++k)
        if (datasets[k].empty())
            throw EmptyDataset("train_collaborative: dataset " + std::to_string(k) + " is empty");

    // one shared encoding, agreed from per-node moment summaries
    FeatureMoments moments;
    for (const auto& d : datasets)
        moments.merge(FeatureMoments::of(d));
    const EncodingSpec spec = encoding_from_moments(moments);

    const DbnModel init = init_model(spec, cfg.hidden_sizes, cfg.seed);

    std::vector<NodeState> nodes;
    std::vector<DbnModel> pretrained;
    for (std::size_t k = 0; k < datasets.size(); ++k) {
        NodeState n;
        n.node_id = static_cast<int>(k);
        n.data = encode_dataset(datasets[k], spec);
        if (cfg.pretrain.epochs > 0) {
            auto rng = fork_rng(cfg.seed, "pretrain.node", k);
            n.model = pretrain(init, detail::unlabeled_inputs(n.data), cfg.pretrain, rng);
        } else {
            n.model = init;
        }
        pretrained.push_back(n.model);
        nodes.push_back(std::move(n));
    }

    ServerState server;
    server.cfg = cfg;
    server.global.round_index = 0;
    server.global.model = detail::average_models(pretrained);
    for (auto& n : nodes)
        n.model = server.global.model;

    RunReport report;
    for (std::uint64_t i = 0; i < cfg.max_rounds; ++i) {
        const RoundMetrics rm = run_round(server, nodes);
        report.per_round.push_back(rm);
        report.rounds_executed = i + 1;
        report.final_delta_norm = rm.delta_norm;
        if (rm.delta_norm < cfg.convergence_epsilon) {
            report.converged = true;
            break;
        }
    }
    return CollabResult{std::move(server.global), std::move(report),
                        std::move(server.transcript)};
}

struct CentralResult {
    DbnModel model;
    RunReport report;
};

// Centralized baseline: one node holding the concatenation of all datasets,
// run through the same loop and seed discipline.
inline CentralResult train_centralized(std::span<const std::vector<FeatureVector>> datasets,
                                       const TrainConfig& cfg) {
    if (datasets.empty())
        throw EmptyDataset("train_centralized: no datasets");
    std::vector<FeatureVector> merged;
    for (const auto& d : datasets) {
        if (d.empty())
            throw EmptyDataset("train_centralized: a dataset is empty");
        merged.insert(merged.end(), d.begin(), d.end());
    }
    std::vector<std::vector<FeatureVector>> one = {std::move(merged)};
    auto r = train_collaborative(one, cfg);
    return CentralResult{std::move(r.global.model), std::move(r.report)};
}

struct IndependentResult {
    std::vector<DbnModel> models;
    std::vector<RunReport> reports;
};

// Independent baseline: each node trains in isolation on its own dataset and
// never exchanges anything.
inline IndependentResult train_independent(std::span<const std::vector<FeatureVector>> datasets,
                                           const TrainConfig& cfg) {
    if (datasets.empty())
        throw EmptyDataset("train_independent: no datasets");
    IndependentResult out;
    for (const auto& d : datasets) {
        if (d.empty())
            throw EmptyDataset("train_independent: a dataset is empty");
        std::vector<std::vector<FeatureVector>> one = {d};
        auto r = train_collaborative(one, cfg);
        out.models.push_back(std::move(r.global.model));
        out.reports.push_back(std::move(r.report));
    }
    return out;
}

} // namespace bcid
