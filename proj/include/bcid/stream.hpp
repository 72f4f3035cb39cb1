#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <mutex>
#include <optional>
#include <span>
#include <thread>
#include <vector>

#include <json.hpp>

#include "bcid/dbn.hpp"
#include "bcid/errors.hpp"
#include "bcid/features.hpp"
#include "bcid/traffic.hpp"

namespace bcid {

struct DetectConfig {
    double frame_length = 2.0;
    double idle_timeout = 1.0;
    // an attack class raises an alert when it holds >= alert_fraction of the
    // frame's samples AND >= alert_min_count samples
    double alert_fraction = 0.10;
    std::uint64_t alert_min_count = 5;
    bool pipelined = false; // staged extraction/classification pipeline
};

struct Alert {
    ClassId cls = ClassId::Dos;
    double confidence = 0.0; // share of the frame's samples in that class

    bool operator==(const Alert&) const = default;
};

struct FrameVerdict {
    std::uint64_t frame_index = 0;
    std::array<std::uint64_t, kClassCount> class_counts{};
    ClassId dominant_state = ClassId::Normal;
    std::optional<Alert> alert;
    double processing_time_s = 0.0;
    bool deadline_overrun = false;

    std::uint64_t sample_count() const {
        std::uint64_t n = 0;
        for (auto c : class_counts)
            n += c;
        return n;
    }
};

namespace detail {

inline FrameVerdict judge_frame(std::uint64_t frame_index,
                                const std::array<std::uint64_t, kClassCount>& counts,
                                const DetectConfig& cfg) {
    FrameVerdict v;
    v.frame_index = frame_index;
    v.class_counts = counts;

    std::size_t dominant = 0;
    std::uint64_t total = 0;
    for (std::size_t c = 0; c < kClassCount; ++c) {
        total += counts[c];
        if (counts[c] > counts[dominant])
            dominant = c; // ties keep the lower class id
    }
    v.dominant_state = static_cast<ClassId>(dominant);

    std::optional<std::size_t> alert_class;
    for (std::size_t c = 1; c < kClassCount; ++c) {
        if (counts[c] < cfg.alert_min_count)
            continue;
        if (static_cast<double>(counts[c]) <
            cfg.alert_fraction * static_cast<double>(total))
            continue;
        if (!alert_class || counts[c] > counts[*alert_class])
            alert_class = c;
    }
    if (alert_class)
        v.alert = Alert{static_cast<ClassId>(*alert_class),
                        static_cast<double>(counts[*alert_class]) / static_cast<double>(total)};
    return v;
}

struct FrameSlice {
    std::uint64_t index = 0;
    std::span<const PacketRecord> packets;
};

// Window boundaries only; assembly stays inside the per-frame timed region.
inline std::vector<FrameSlice> slice_frames(std::span<const PacketRecord> trace,
                                            double frame_length) {
    std::vector<FrameSlice> slices;
    if (trace.empty())
        return slices;
    double prev_ts = trace.front().timestamp;
    std::uint64_t current = 0;
    std::size_t begin = 0;
    for (std::size_t i = 0; i < trace.size(); ++i) {
        if (trace[i].timestamp < prev_ts)
            throw UnsortedInput("packet timestamps decrease at record " + std::to_string(i));
        prev_ts = trace[i].timestamp;
        const auto idx = static_cast<std::uint64_t>(trace[i].timestamp / frame_length);
        while (idx > current) {
            slices.push_back(FrameSlice{current, trace.subspan(begin, i - begin)});
            begin = i;
            ++current;
        }
    }
    slices.push_back(FrameSlice{current, trace.subspan(begin)});
    return slices;
}

} // namespace detail

// Replays a sorted trace through the capture -> extract -> predict loop, one
// verdict per tumbling frame (empty frames included, so two traces split at
// a frame boundary compose). processing_time_s covers assembly, extraction
// and classification of the frame; overruns of the frame budget are flagged,
// not fatal.
inline std::vector<FrameVerdict> detect_stream(std::span<const PacketRecord> trace,
                                               const DbnModel& model,
                                               const DetectConfig& cfg = {}) {
    const std::vector<detail::FrameSlice> frames = detail::slice_frames(trace, cfg.frame_length);
    std::vector<FrameVerdict> verdicts(frames.size());

    struct ExtractedFrame {
        std::size_t slot = 0;
        std::uint64_t frame_index = 0;
        std::vector<Vector> encoded;
        double extract_seconds = 0.0;
    };

    auto extract_stage = [&](std::size_t slot) {
        const auto t0 = std::chrono::steady_clock::now();
        Frame f;
        f.frame_index = frames[slot].index;
        f.window_start = static_cast<double>(frames[slot].index) * cfg.frame_length;
        f.window_length = cfg.frame_length;
        f.connections = assemble_connections(frames[slot].packets, cfg.idle_timeout);
        ExtractedFrame e;
        e.slot = slot;
        e.frame_index = f.frame_index;
        for (const auto& conn : f.connections)
            e.encoded.push_back(encode(extract_features(f, conn), model.encoding));
        e.extract_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        return e;
    };

    auto classify_stage = [&](const ExtractedFrame& e) {
        const auto t0 = std::chrono::steady_clock::now();
        std::array<std::uint64_t, kClassCount> counts{};
        for (const auto& x : e.encoded)
            ++counts[static_cast<std::size_t>(predict(model, x))];
        const double tau = e.extract_seconds +
                           std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                               .count();
        FrameVerdict v = detail::judge_frame(e.frame_index, counts, cfg);
        v.processing_time_s = tau;
        v.deadline_overrun = tau > cfg.frame_length;
        verdicts[e.slot] = std::move(v);
    };

    if (!cfg.pipelined) {
        for (std::size_t i = 0; i < frames.size(); ++i)
            classify_stage(extract_stage(i));
        return verdicts;
    }

    // staged pipeline: assembly+extraction feed a bounded queue, the consumer
    // classifies; verdicts stay in frame order because slots are indexed
    std::mutex mtx;
    std::condition_variable cv;
    std::deque<ExtractedFrame> queue;
    bool done = false;
    constexpr std::size_t kQueueCap = 8;

    std::thread consumer([&] {
        for (;;) {
            ExtractedFrame e;
            {
                std::unique_lock lock(mtx);
                cv.wait(lock, [&] { return !queue.empty() || done; });
                if (queue.empty())
                    return;
                e = std::move(queue.front());
                queue.pop_front();
            }
            cv.notify_all();
            classify_stage(e);
        }
    });
    for (std::size_t i = 0; i < frames.size(); ++i) {
        ExtractedFrame e = extract_stage(i);
        std::unique_lock lock(mtx);
        cv.wait(lock, [&] { return queue.size() < kQueueCap; });
        queue.push_back(std::move(e));
        cv.notify_all();
    }
    {
        std::lock_guard lock(mtx);
        done = true;
    }
    cv.notify_all();
    consumer.join();
    return verdicts;
}

inline nlohmann::ordered_json verdict_to_json(const FrameVerdict& v) {
    nlohmann::ordered_json j;
    j["frame_index"] = v.frame_index;
    j["counts"] = v.class_counts;
    j["dominant_state"] = static_cast<unsigned>(v.dominant_state);
    if (v.alert) {
        j["alert"]["class"] = static_cast<unsigned>(v.alert->cls);
        j["alert"]["confidence"] = v.alert->confidence;
    } else {
        j["alert"] = nullptr;
    }
    j["processing_time_s"] = v.processing_time_s;
    j["deadline_overrun"] = v.deadline_overrun;
    return j;
}

inline void write_verdicts_jsonl(std::ostream& os, std::span<const FrameVerdict> verdicts) {
    for (const auto& v : verdicts)
        os << verdict_to_json(v).dump() << '\n';
}

// --- throughput benchmark ----------------------------------------------------

struct BenchResult {
    std::size_t n_samples = 0;
    std::size_t repetitions = 0;
    std::vector<double> taus; // seconds, one per repetition
    double mean_s = 0.0;
    double p50_s = 0.0;
    double p98_s = 0.0;
    double max_s = 0.0;

    struct Bucket {
        double low = 0.0;
        double high = 0.0;
        std::uint64_t count = 0;
    };
    std::vector<Bucket> histogram;
};

inline double percentile(std::vector<double> sorted, double q) {
    const auto rank = static_cast<std::size_t>(
        std::max(1.0, std::ceil(q * static_cast<double>(sorted.size()))));
    return sorted[rank - 1];
}

// One repetition sweeps the in-memory samples through encode + forward +
// argmax; tau covers exactly that sweep, matching the verification-phase
// budget the detector has to honor per frame.
inline BenchResult throughput_benchmark(const DbnModel& model,
                                        std::span<const FeatureVector> pool,
                                        std::size_t n_samples, std::size_t repetitions) {
    if (n_samples < 1)
        throw InvalidConfig("throughput_benchmark: n_samples must be >= 1");
    if (repetitions < 1)
        throw InvalidConfig("throughput_benchmark: repetitions must be >= 1");
    if (pool.empty())
        throw EmptyDataset("throughput_benchmark: empty sample pool");

    std::vector<FeatureVector> samples;
    samples.reserve(n_samples);
    for (std::size_t i = 0; i < n_samples; ++i)
        samples.push_back(pool[i % pool.size()]);

    BenchResult r;
    r.n_samples = n_samples;
    r.repetitions = repetitions;
    r.taus.reserve(repetitions);

    volatile std::uint64_t sink = 0; // keep the classification loop observable
    for (std::size_t rep = 0; rep < repetitions; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        std::uint64_t acc = 0;
        for (const FeatureVector& fv : samples)
            acc += static_cast<std::uint64_t>(predict(model, encode(fv, model.encoding)));
        sink = sink + acc;
        r.taus.push_back(
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }

    std::vector<double> sorted = r.taus;
    std::sort(sorted.begin(), sorted.end());
    double sum = 0.0;
    for (double t : sorted)
        sum += t;
    r.mean_s = sum / static_cast<double>(sorted.size());
    r.p50_s = percentile(sorted, 0.50);
    r.p98_s = percentile(sorted, 0.98);
    r.max_s = sorted.back();

    constexpr std::size_t kBuckets = 24;
    const double hi = sorted.back();
    const double width = hi > 0.0 ? hi / static_cast<double>(kBuckets) : 1.0;
    r.histogram.resize(kBuckets);
    for (std::size_t b = 0; b < kBuckets; ++b) {
        r.histogram[b].low = width * static_cast<double>(b);
        r.histogram[b].high = width * static_cast<double>(b + 1);
    }
    for (double t : r.taus) {
        auto b = static_cast<std::size_t>(t / width);
        if (b >= kBuckets)
            b = kBuckets - 1;
        ++r.histogram[b].count;
    }
    return r;
}

} // namespace bcid
