// bcid - blockchain network intrusion detection workbench
//
// Subcommands cover the full pipeline: generate synthetic captures, extract
// window features, train in collaborative/centralized/independent modes,
// evaluate on merged test sets, replay-detect, and benchmark throughput.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "bcid/config.hpp"
#include "bcid/dbn_io.hpp"
#include "bcid/errors.hpp"
#include "bcid/federation.hpp"
#include "bcid/manifest.hpp"
#include "bcid/metrics.hpp"
#include "bcid/stream.hpp"
#include "bcid/synth.hpp"
#include "bcid/trace_io.hpp"
#include "bcid/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out_dir = ".";
};

std::string joined(const std::vector<std::string>& v) {
    std::string s;
    for (const auto& e : v) {
        if (!s.empty())
            s += ',';
        s += e;
    }
    return s;
}

std::string out_path(const GlobalOptions& g, const std::string& name) {
    return (fs::path(g.out_dir) / name).string();
}

void ensure_out_dir(const GlobalOptions& g) {
    std::error_code ec;
    fs::create_directories(g.out_dir, ec);
    if (ec)
        throw bcid::Error("io_error", "cannot create out-dir " + g.out_dir + ": " + ec.message());
}

bcid::ConfigFile load_config_or_empty(const GlobalOptions& g) {
    if (g.config_path.empty()) {
        std::stringstream empty;
        return bcid::ConfigFile::parse(empty, "<defaults>");
    }
    return bcid::ConfigFile::load(g.config_path);
}

std::string stem_of(const std::string& path) { return fs::path(path).stem().string(); }

void write_text(const std::string& path, const std::string& text) {
    std::ofstream os(path, std::ios::binary);
    if (!os)
        throw bcid::Error("io_error", "cannot open " + path + " for writing");
    os << text;
}

void write_json_artifact(const std::string& path, json j, const bcid::RunManifest& manifest) {
    j["manifest"] = manifest.ref();
    write_text(path, j.dump(2) + "\n");
}

std::vector<bcid::FeatureVector> feature_labels_only(const std::vector<bcid::Sample>& samples) {
    std::vector<bcid::FeatureVector> out;
    out.reserve(samples.size());
    for (const auto& s : samples)
        out.push_back(s.features);
    return out;
}

// --- generate -----------------------------------------------------------------

int cmd_generate(const GlobalOptions& g) {
    const auto cfg_file = load_config_or_empty(g);
    const auto scenario = bcid::scenario_from_config(cfg_file, g.seed);
    ensure_out_dir(g);

    auto manifest = bcid::RunManifest::make("generate", scenario.seed, cfg_file.canonical());
    if (!g.config_path.empty())
        manifest.inputs.push_back(g.config_path);

    const auto traces = bcid::generate_trace(scenario);
    for (std::size_t k = 0; k < traces.size(); ++k) {
        const auto path = out_path(g, "node-" + std::to_string(k + 1) + ".trace.jsonl");
        bcid::write_trace_jsonl(path, traces[k]);
        manifest.outputs.push_back(path);
    }
    const auto rules_path = out_path(g, "label-rules.json");
    bcid::write_rules_json(rules_path, bcid::scenario_label_rules(scenario));
    manifest.outputs.push_back(rules_path);
    manifest.write(out_path(g, "generate.manifest.json"));

    std::cout << "generated " << traces.size() << " node traces under " << g.out_dir << "\n";
    return 0;
}

// --- extract ------------------------------------------------------------------

int cmd_extract(const GlobalOptions& g, const std::vector<std::string>& trace_paths,
                const std::vector<std::string>& rules_paths, std::string out_csv,
                double frame_length, double idle_timeout) {
    if (trace_paths.empty())
        throw bcid::InvalidConfig("extract needs at least one --trace");
    if (rules_paths.size() > 1 && rules_paths.size() != trace_paths.size())
        throw bcid::InvalidConfig("give one --rules total or one per --trace");
    ensure_out_dir(g);
    if (out_csv.empty())
        out_csv = out_path(g, "features.csv");

    std::string canonical = "command=extract\nframe_length=" +
                            bcid::format_double(frame_length) +
                            "\nidle_timeout=" + bcid::format_double(idle_timeout) +
                            "\nrules=" + joined(rules_paths) + "\ntraces=" + joined(trace_paths) +
                            "\n";
    auto manifest = bcid::RunManifest::make("extract", g.seed.value_or(0), canonical);
    manifest.inputs = trace_paths;
    manifest.inputs.insert(manifest.inputs.end(), rules_paths.begin(), rules_paths.end());

    std::vector<bcid::FeatureVector> rows;
    for (std::size_t i = 0; i < trace_paths.size(); ++i) {
        const auto trace = bcid::read_trace_jsonl_file(trace_paths[i]);
        bcid::LabelRuleSet rules;
        if (!rules_paths.empty())
            rules = bcid::read_rules_json(rules_paths.size() == 1 ? rules_paths[0]
                                                                  : rules_paths[i]);
        const auto samples = bcid::extract_trace_samples(trace, rules, frame_length, idle_timeout);
        const auto vecs = feature_labels_only(samples);
        rows.insert(rows.end(), vecs.begin(), vecs.end());
    }
    bcid::write_features_csv(out_csv, rows);
    manifest.outputs.push_back(out_csv);
    manifest.write(out_path(g, "extract.manifest.json"));

    std::cout << "extracted " << rows.size() << " samples -> " << out_csv << "\n";
    return 0;
}

// --- train --------------------------------------------------------------------

int cmd_train(const GlobalOptions& g, const std::string& mode,
              const std::vector<std::string>& data_paths, double split_fraction, bool no_split) {
    if (data_paths.empty())
        throw bcid::EmptyDataset("train needs at least one --data CSV");
    const auto cfg_file = load_config_or_empty(g);
    auto cfg = bcid::train_config_from_config(cfg_file, g.seed);
    ensure_out_dir(g);

    std::string canonical = cfg_file.canonical() + "command=train\ndata=" + joined(data_paths) +
                            "\nmode=" + mode + "\nno_split=" + (no_split ? "1" : "0") +
                            "\nseed=" + std::to_string(cfg.seed) +
                            "\nsplit=" + bcid::format_double(split_fraction) + "\n";
    auto manifest = bcid::RunManifest::make("train", cfg.seed, canonical);
    manifest.inputs = data_paths;
    if (!g.config_path.empty())
        manifest.inputs.push_back(g.config_path);

    std::vector<std::vector<bcid::FeatureVector>> trains, tests;
    for (std::size_t k = 0; k < data_paths.size(); ++k) {
        auto all = bcid::read_features_csv_file(data_paths[k]);
        if (all.empty())
            throw bcid::EmptyDataset(data_paths[k] + " holds no samples");
        if (no_split) {
            trains.push_back(std::move(all));
            tests.emplace_back();
        } else {
            auto rng = bcid::fork_rng(cfg.seed, "cli.split", k);
            auto split = bcid::stratified_split(all, split_fraction, rng);
            trains.push_back(std::move(split.train));
            tests.push_back(std::move(split.test));
        }
    }
    if (!no_split)
        for (std::size_t k = 0; k < tests.size(); ++k) {
            const auto path = out_path(g, "node-" + std::to_string(k + 1) + ".test.csv");
            bcid::write_features_csv(path, tests[k]);
            manifest.outputs.push_back(path);
        }

    json report;
    report["mode"] = mode;
    report["nodes"] = data_paths.size();

    if (mode == "col") {
        const auto result = bcid::train_collaborative(trains, cfg);
        const auto model_path = out_path(g, "model_col.json");
        bcid::save_model(model_path, result.global.model, manifest.ref());
        manifest.outputs.push_back(model_path);

        const auto transcript_path = out_path(g, "transcript.jsonl");
        bcid::write_transcript_jsonl(transcript_path, result.transcript);
        manifest.outputs.push_back(transcript_path);
        report["run"] = result.report.to_json();
    } else if (mode == "cel") {
        const auto result = bcid::train_centralized(trains, cfg);
        const auto model_path = out_path(g, "model_cel.json");
        bcid::save_model(model_path, result.model, manifest.ref());
        manifest.outputs.push_back(model_path);
        report["run"] = result.report.to_json();
    } else if (mode == "il") {
        const auto result = bcid::train_independent(trains, cfg);
        report["run"] = json::array();
        for (std::size_t k = 0; k < result.models.size(); ++k) {
            const auto model_path =
                out_path(g, "model_il_node" + std::to_string(k + 1) + ".json");
            bcid::save_model(model_path, result.models[k], manifest.ref());
            manifest.outputs.push_back(model_path);
            report["run"].push_back(result.reports[k].to_json());
        }
    } else {
        throw bcid::InvalidConfig("mode must be col, cel or il; got '" + mode + "'");
    }

    const auto report_path = out_path(g, "train_report.json");
    write_json_artifact(report_path, report, manifest);
    manifest.outputs.push_back(report_path);
    manifest.write(out_path(g, "train.manifest.json"));

    std::cout << "trained mode=" << mode << ", report -> " << report_path << "\n";
    return 0;
}

// --- evaluate -----------------------------------------------------------------

int cmd_evaluate(const GlobalOptions& g, const std::vector<std::string>& model_paths,
                 const std::vector<std::string>& test_paths) {
    if (model_paths.empty())
        throw bcid::InvalidConfig("evaluate needs at least one --model");
    if (test_paths.empty())
        throw bcid::InvalidConfig("evaluate needs at least one --test CSV");
    ensure_out_dir(g);

    std::string canonical = "command=evaluate\nmodels=" + joined(model_paths) +
                            "\ntests=" + joined(test_paths) + "\n";
    auto manifest = bcid::RunManifest::make("evaluate", g.seed.value_or(0), canonical);
    manifest.inputs = model_paths;
    manifest.inputs.insert(manifest.inputs.end(), test_paths.begin(), test_paths.end());

    std::vector<bcid::FeatureVector> merged;
    for (const auto& p : test_paths) {
        const auto part = bcid::read_features_csv_file(p);
        merged.insert(merged.end(), part.begin(), part.end());
    }
    if (merged.empty())
        throw bcid::EmptyMatrix("merged test set is empty");

    std::vector<bcid::NamedResult> results;
    json detail = json::array();
    for (const auto& mp : model_paths) {
        const auto model = bcid::load_model(mp);
        std::vector<std::pair<bcid::ClassId, bcid::ClassId>> pairs;
        pairs.reserve(merged.size());
        for (const auto& fv : merged)
            pairs.emplace_back(fv.label, bcid::predict(model, bcid::encode(fv, model.encoding)));
        bcid::NamedResult r{stem_of(mp), bcid::accumulate(pairs)};
        const auto m = bcid::metrics(r.cm);
        json dj;
        dj["model"] = r.name;
        dj["accuracy_eq12"] = m.accuracy_eq12;
        dj["accuracy_plain"] = m.accuracy_plain;
        dj["precision_macro"] = m.precision_macro;
        dj["recall_macro"] = m.recall_macro;
        dj["confusion"] = r.cm.counts;
        detail.push_back(std::move(dj));
        results.push_back(std::move(r));
    }

    const auto report = bcid::compare_report(results);
    write_text(out_path(g, "evaluation.csv"), report.csv);
    write_text(out_path(g, "evaluation.txt"), report.text);
    json j;
    j["samples"] = merged.size();
    j["models"] = std::move(detail);
    write_json_artifact(out_path(g, "evaluation.json"), j, manifest);
    manifest.outputs = {out_path(g, "evaluation.csv"), out_path(g, "evaluation.txt"),
                        out_path(g, "evaluation.json")};
    manifest.write(out_path(g, "evaluate.manifest.json"));

    std::cout << report.text;
    return 0;
}

// --- detect -------------------------------------------------------------------

int cmd_detect(const GlobalOptions& g, const std::string& model_path,
               const std::string& trace_path, std::string out_jsonl,
               const bcid::DetectConfig& dc) {
    ensure_out_dir(g);
    if (out_jsonl.empty())
        out_jsonl = out_path(g, "verdicts.jsonl");

    std::string canonical = "alert_fraction=" + bcid::format_double(dc.alert_fraction) +
                            "\nalert_min_count=" + std::to_string(dc.alert_min_count) +
                            "\ncommand=detect\nframe_length=" +
                            bcid::format_double(dc.frame_length) + "\nmodel=" + model_path +
                            "\ntrace=" + trace_path + "\n";
    auto manifest = bcid::RunManifest::make("detect", g.seed.value_or(0), canonical);
    manifest.inputs = {model_path, trace_path};

    const auto model = bcid::load_model(model_path);
    const auto trace = bcid::read_trace_jsonl_file(trace_path);
    const auto verdicts = bcid::detect_stream(trace, model, dc);

    std::ofstream os(out_jsonl, std::ios::binary);
    if (!os)
        throw bcid::Error("io_error", "cannot open " + out_jsonl + " for writing");
    bcid::write_verdicts_jsonl(os, verdicts);
    manifest.outputs.push_back(out_jsonl);
    manifest.write(out_path(g, "detect.manifest.json"));

    std::size_t alerts = 0;
    for (const auto& v : verdicts)
        alerts += v.alert.has_value();
    std::cout << verdicts.size() << " frames, " << alerts << " alerts -> " << out_jsonl << "\n";
    return 0;
}

// --- bench ----------------------------------------------------------------------

int cmd_bench(const GlobalOptions& g, const std::string& model_path, std::size_t n_samples,
              std::size_t repetitions, const std::string& features_path) {
    ensure_out_dir(g);
    const std::uint64_t seed = g.seed.value_or(1);

    std::string canonical = "command=bench\nfeatures=" + features_path +
                            "\nmodel=" + model_path + "\nn=" + std::to_string(n_samples) +
                            "\nreps=" + std::to_string(repetitions) +
                            "\nseed=" + std::to_string(seed) + "\n";
    auto manifest = bcid::RunManifest::make("bench", seed, canonical);
    manifest.inputs.push_back(model_path);

    const auto model = bcid::load_model(model_path);

    std::vector<bcid::FeatureVector> pool;
    if (!features_path.empty()) {
        manifest.inputs.push_back(features_path);
        pool = bcid::read_features_csv_file(features_path);
    } else {
        // a short seeded capture with a DoS window gives a mixed sample pool
        bcid::ScenarioConfig sc;
        sc.seed = bcid::mix64(seed ^ bcid::fnv1a("bench.pool"));
        sc.duration = 20.0;
        sc.node_count = 1;
        sc.attack = bcid::AttackConfig{bcid::ClassId::Dos, 10.0, 15.0, "10.9.9.9"};
        const auto trace = bcid::generate_trace(sc)[0];
        pool = feature_labels_only(
            bcid::extract_trace_samples(trace, bcid::scenario_label_rules(sc)));
    }

    const auto r = bcid::throughput_benchmark(model, pool, n_samples, repetitions);

    std::string hist = "bucket_low_s,bucket_high_s,count\n";
    for (const auto& b : r.histogram)
        hist += bcid::format_double(b.low) + "," + bcid::format_double(b.high) + "," +
                std::to_string(b.count) + "\n";
    write_text(out_path(g, "bench_hist.csv"), hist);

    std::string summary = "n_samples,repetitions,mean_s,p50_s,p98_s,max_s\n";
    summary += std::to_string(r.n_samples) + "," + std::to_string(r.repetitions) + "," +
               bcid::format_double(r.mean_s) + "," + bcid::format_double(r.p50_s) + "," +
               bcid::format_double(r.p98_s) + "," + bcid::format_double(r.max_s) + "\n";
    write_text(out_path(g, "bench_summary.csv"), summary);

    manifest.outputs = {out_path(g, "bench_hist.csv"), out_path(g, "bench_summary.csv")};
    manifest.write(out_path(g, "bench.manifest.json"));

    std::cout << "n=" << r.n_samples << " reps=" << r.repetitions << " p50=" << r.p50_s
              << "s p98=" << r.p98_s << "s\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"blockchain traffic intrusion detection workbench"};
    app.set_version_flag("--version", bcid::kVersion);
    app.require_subcommand(1);

    GlobalOptions g;
    app.add_option("--config", g.config_path, "key = value configuration file")
        ->envname("BCID_CONFIG");
    std::uint64_t seed_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "root seed override");
    app.add_option("--out-dir", g.out_dir, "directory for outputs (default: .)");

    auto* generate = app.add_subcommand("generate", "synthesize per-node packet traces");

    auto* extract = app.add_subcommand("extract", "assemble frames and emit feature CSV");
    std::vector<std::string> trace_paths, rules_paths;
    std::string out_csv;
    double frame_length = 2.0, idle_timeout = 1.0;
    extract->add_option("--trace", trace_paths, "packet trace JSONL (repeatable)")->required();
    extract->add_option("--rules", rules_paths, "label rules JSON (one total or one per trace)");
    extract->add_option("--out", out_csv, "output CSV path");
    extract->add_option("--frame-length", frame_length, "frame window seconds (default 2.0)");
    extract->add_option("--idle-timeout", idle_timeout, "connection idle timeout (default 1.0)");

    auto* train = app.add_subcommand("train", "train col/cel/il models");
    std::string mode;
    std::vector<std::string> data_paths;
    double split_fraction = 0.8;
    bool no_split = false;
    train->add_option("--mode", mode, "col, cel or il")->required();
    train->add_option("--data", data_paths, "per-node feature CSV (repeatable)")->required();
    train->add_option("--split", split_fraction, "train fraction (default 0.8)");
    train->add_flag("--no-split", no_split, "train on the full dataset");

    auto* evaluate = app.add_subcommand("evaluate", "score models on merged test CSVs");
    std::vector<std::string> model_paths, test_paths;
    evaluate->add_option("--model", model_paths, "model JSON (repeatable)")->required();
    evaluate->add_option("--test", test_paths, "test CSV (repeatable)")->required();

    auto* detect = app.add_subcommand("detect", "replay a trace through a trained model");
    std::string detect_model, detect_trace, detect_out;
    bcid::DetectConfig dc;
    detect->add_option("--model", detect_model, "model JSON")->required();
    detect->add_option("--trace", detect_trace, "packet trace JSONL")->required();
    detect->add_option("--out", detect_out, "verdict JSONL path");
    detect->add_option("--frame-length", dc.frame_length, "frame window seconds");
    detect->add_option("--alert-fraction", dc.alert_fraction, "alert share threshold");
    detect->add_option("--alert-min", dc.alert_min_count, "alert absolute floor");
    detect->add_flag("--pipelined", dc.pipelined, "staged extraction/classification");

    auto* bench = app.add_subcommand("bench", "throughput benchmark");
    std::string bench_model, bench_features;
    std::size_t bench_n = 85000, bench_reps = 1000;
    bench->add_option("--model", bench_model, "model JSON")->required();
    bench->add_option("--n", bench_n, "samples per repetition (default 85000)");
    bench->add_option("--reps", bench_reps, "repetitions (default 1000)");
    bench->add_option("--features", bench_features, "feature CSV pool (default: seeded synthetic)");

    for (auto* sub : {generate, extract, train, evaluate, detect, bench})
        sub->fallthrough();

    CLI11_PARSE(app, argc, argv);
    if (*seed_opt)
        g.seed = seed_value;

    try {
        if (*generate)
            return cmd_generate(g);
        if (*extract)
            return cmd_extract(g, trace_paths, rules_paths, out_csv, frame_length, idle_timeout);
        if (*train)
            return cmd_train(g, mode, data_paths, split_fraction, no_split);
        if (*evaluate)
            return cmd_evaluate(g, model_paths, test_paths);
        if (*detect)
            return cmd_detect(g, detect_model, detect_trace, detect_out, dc);
        if (*bench)
            return cmd_bench(g, bench_model, bench_n, bench_reps, bench_features);
    } catch (const bcid::Error& e) {
        json err;
        err["error"] = e.code();
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 1;
    } catch (const std::exception& e) {
        json err;
        err["error"] = "internal";
        err["message"] = e.what();
        std::cerr << err.dump() << "\n";
        return 2;
    }
    return 0;
}
