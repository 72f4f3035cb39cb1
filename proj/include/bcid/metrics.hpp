#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "bcid/errors.hpp"
#include "bcid/traffic.hpp"
#include "bcid/trace_io.hpp"

namespace bcid {

// T x T counts, rows = true class, columns = predicted class.
struct ConfusionMatrix {
    std::array<std::array<std::uint64_t, kClassCount>, kClassCount> counts{};

    std::uint64_t total() const {
        std::uint64_t t = 0;
        for (const auto& row : counts)
            for (auto c : row)
                t += c;
        return t;
    }

    bool operator==(const ConfusionMatrix&) const = default;
};

inline ConfusionMatrix accumulate(std::span<const std::pair<ClassId, ClassId>> pairs) {
    ConfusionMatrix cm;
    for (const auto& [truth, predicted] : pairs)
        ++cm.counts[static_cast<std::size_t>(truth)][static_cast<std::size_t>(predicted)];
    return cm;
}

struct ClassCounts {
    std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct MetricsResult {
    double accuracy_eq12 = 0.0;  // macro one-vs-rest accuracy
    double accuracy_plain = 0.0; // diagonal / total
    double precision_macro = 0.0;
    double recall_macro = 0.0;
    std::array<double, kClassCount> precision{};
    std::array<double, kClassCount> recall{};
    std::array<ClassCounts, kClassCount> per_class{};
    // a zero-denominator ratio was reported as 0
    std::array<bool, kClassCount> precision_undefined{};
    std::array<bool, kClassCount> recall_undefined{};
};

inline MetricsResult metrics(const ConfusionMatrix& cm) {
    const std::uint64_t total = cm.total();
    if (total == 0)
        throw EmptyMatrix("metrics over an empty confusion matrix");

    MetricsResult r;
    double acc_sum = 0.0, prec_sum = 0.0, rec_sum = 0.0;
    std::uint64_t diagonal = 0;
    for (std::size_t t = 0; t < kClassCount; ++t) {
        std::uint64_t row = 0, col = 0;
        for (std::size_t i = 0; i < kClassCount; ++i) {
            row += cm.counts[t][i];
            col += cm.counts[i][t];
        }
        ClassCounts c;
        c.tp = cm.counts[t][t];
        c.fp = col - c.tp;
        c.fn = row - c.tp;
        c.tn = total - c.tp - c.fp - c.fn;
        r.per_class[t] = c;
        diagonal += c.tp;

        acc_sum += static_cast<double>(c.tp + c.tn) / static_cast<double>(total);
        if (c.tp + c.fp == 0) {
            r.precision_undefined[t] = true;
            r.precision[t] = 0.0;
        } else {
            r.precision[t] = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
        }
        if (c.tp + c.fn == 0) {
            r.recall_undefined[t] = true;
            r.recall[t] = 0.0;
        } else {
            r.recall[t] = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
        }
        prec_sum += r.precision[t];
        rec_sum += r.recall[t];
    }
    r.accuracy_eq12 = acc_sum / static_cast<double>(kClassCount);
    r.accuracy_plain = static_cast<double>(diagonal) / static_cast<double>(total);
    r.precision_macro = prec_sum / static_cast<double>(kClassCount);
    r.recall_macro = rec_sum / static_cast<double>(kClassCount);
    return r;
}

struct NamedResult {
    std::string name;
    ConfusionMatrix cm;
};

struct ComparisonReport {
    std::string csv;
    std::string text;
};

inline ComparisonReport compare_report(std::span<const NamedResult> results) {
    if (results.empty())
        throw EmptyInput("compare_report: no results");

    std::string csv = "model,accuracy_eq12,accuracy_plain,precision_macro,recall_macro";
    for (std::size_t t = 0; t < kClassCount; ++t)
        csv += ",precision_" + std::to_string(t);
    for (std::size_t t = 0; t < kClassCount; ++t)
        csv += ",recall_" + std::to_string(t);
    csv += '\n';

    std::string text;
    char line[256];
    std::snprintf(line, sizeof(line), "%-16s %12s %12s %12s %12s\n", "model", "acc(eq12)",
                  "acc(plain)", "precision", "recall");
    text += line;

    for (const auto& res : results) {
        const MetricsResult m = metrics(res.cm);
        csv += res.name;
        for (double v : {m.accuracy_eq12, m.accuracy_plain, m.precision_macro, m.recall_macro})
            csv += ',' + format_double(v);
        for (double v : m.precision)
            csv += ',' + format_double(v);
        for (double v : m.recall)
            csv += ',' + format_double(v);
        csv += '\n';

        std::snprintf(line, sizeof(line), "%-16s %12.5f %12.5f %12.5f %12.5f%s\n",
                      res.name.c_str(), m.accuracy_eq12, m.accuracy_plain, m.precision_macro,
                      m.recall_macro,
                      [&] {
                          for (std::size_t t = 0; t < kClassCount; ++t)
                              if (m.precision_undefined[t] || m.recall_undefined[t])
                                  return " (undefined ratios reported as 0)";
                          return "";
                      }());
        text += line;
    }
    return ComparisonReport{std::move(csv), std::move(text)};
}

} // namespace bcid
