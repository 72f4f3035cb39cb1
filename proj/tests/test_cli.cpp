#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

struct Scratch {
    fs::path dir;
    Scratch() {
        static int counter = 0;
        dir = fs::temp_directory_path() /
              ("bcid_cli_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
    fs::path operator/(const std::string& name) const { return dir / name; }
};

CliResult run_cli(const Scratch& s, const std::string& args) {
    const fs::path out = s.dir / "._stdout";
    const fs::path err = s.dir / "._stderr";
    const std::string cmd = std::string(BCID_CLI_PATH) + " " + args + " > " + out.string() +
                            " 2> " + err.string();
    const int raw = std::system(cmd.c_str());
    CliResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
}

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream os(p, std::ios::binary);
    os << text;
}

const char* kGenConf = "seed = 42\n"
                       "duration = 24\n"
                       "node_count = 3\n"
                       "benign_tx_rate = 4\n"
                       "attack.kind = dos\n"
                       "attack.start = 4\n"
                       "attack.intensity = 15\n"
                       "attack.attacker_ip = 10.9.9.9\n";

const char* kTrainConf = "mu = 0.5\n"
                         "max_rounds = 25\n"
                         "hidden_sizes = 8,6\n"
                         "pretrain.epochs = 1\n";

} // namespace

TEST_CASE("cli: version flag") {
    Scratch s;
    const auto r = run_cli(s, "--version");
    CHECK(r.exit_code == 0);
}

TEST_CASE("cli: generate -> extract -> train -> evaluate -> detect composes") {
    Scratch s;
    write_file(s / "gen.conf", kGenConf);
    write_file(s / "train.conf", kTrainConf);

    auto r = run_cli(s, "generate --config " + (s / "gen.conf").string() + " --out-dir " +
                            (s / "run").string());
    REQUIRE(r.exit_code == 0);
    for (int n = 1; n <= 3; ++n)
        CHECK(fs::exists(s / ("run/node-" + std::to_string(n) + ".trace.jsonl")));
    CHECK(fs::exists(s / "run/label-rules.json"));

    for (int n = 1; n <= 3; ++n) {
        r = run_cli(s, "extract --trace " +
                           (s / ("run/node-" + std::to_string(n) + ".trace.jsonl")).string() +
                           " --rules " + (s / "run/label-rules.json").string() + " --out " +
                           (s / ("node" + std::to_string(n) + ".csv")).string() + " --out-dir " +
                           (s / "run").string());
        REQUIRE(r.exit_code == 0);
    }

    r = run_cli(s, "train --mode col --data " + (s / "node1.csv").string() + " --data " +
                       (s / "node2.csv").string() + " --data " + (s / "node3.csv").string() +
                       " --config " + (s / "train.conf").string() + " --seed 7 --out-dir " +
                       (s / "train").string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(s / "train/model_col.json"));
    CHECK(fs::exists(s / "train/transcript.jsonl"));
    const auto report = json::parse(slurp(s / "train/train_report.json"));
    CHECK(report["run"]["rounds_executed"].get<std::uint64_t>() <= 25);
    CHECK(report["run"].contains("converged"));
    for (int n = 1; n <= 3; ++n)
        CHECK(fs::exists(s / ("train/node-" + std::to_string(n) + ".test.csv")));

    r = run_cli(s, "evaluate --model " + (s / "train/model_col.json").string() + " --test " +
                       (s / "train/node-1.test.csv").string() + " --test " +
                       (s / "train/node-2.test.csv").string() + " --test " +
                       (s / "train/node-3.test.csv").string() + " --out-dir " +
                       (s / "eval").string());
    REQUIRE(r.exit_code == 0);
    const std::string csv = slurp(s / "eval/evaluation.csv");
    CHECK(csv.find("model,accuracy_eq12,accuracy_plain,precision_macro,recall_macro") == 0);
    CHECK(csv.find("model_col,") != std::string::npos);
    CHECK(fs::exists(s / "eval/evaluation.txt"));
    CHECK(fs::exists(s / "eval/evaluation.json"));

    r = run_cli(s, "detect --model " + (s / "train/model_col.json").string() + " --trace " +
                       (s / "run/node-1.trace.jsonl").string() + " --out-dir " +
                       (s / "det").string());
    REQUIRE(r.exit_code == 0);
    std::ifstream verdicts(s / "det/verdicts.jsonl");
    std::string line;
    std::size_t frames = 0;
    while (std::getline(verdicts, line)) {
        const auto j = json::parse(line);
        CHECK(j.contains("frame_index"));
        CHECK(j.contains("counts"));
        ++frames;
    }
    CHECK(frames == 12); // 24 s capture over 2 s frames
}

TEST_CASE("cli: artifacts reference the manifest that created them") {
    Scratch s;
    write_file(s / "gen.conf", kGenConf);
    write_file(s / "train.conf", kTrainConf);
    auto r = run_cli(s, "generate --config " + (s / "gen.conf").string() + " --out-dir " +
                            (s / "run").string());
    REQUIRE(r.exit_code == 0);
    r = run_cli(s, "extract --trace " + (s / "run/node-1.trace.jsonl").string() + " --rules " +
                       (s / "run/label-rules.json").string() + " --out " +
                       (s / "node1.csv").string() + " --out-dir " + (s / "run").string());
    REQUIRE(r.exit_code == 0);
    r = run_cli(s, "train --mode cel --data " + (s / "node1.csv").string() + " --config " +
                       (s / "train.conf").string() + " --seed 3 --out-dir " +
                       (s / "train").string());
    REQUIRE(r.exit_code == 0);

    const auto manifest = json::parse(slurp(s / "train/train.manifest.json"));
    const auto model = json::parse(slurp(s / "train/model_cel.json"));
    const auto report = json::parse(slurp(s / "train/train_report.json"));
    CHECK(model["manifest"]["config_hash"] == manifest["config_hash"]);
    CHECK(model["manifest"]["seed"] == manifest["seed"]);
    CHECK(report["manifest"]["config_hash"] == manifest["config_hash"]);
    // the manifest lists every artifact it produced
    const auto outputs = manifest["outputs"].get<std::vector<std::string>>();
    CHECK(std::find_if(outputs.begin(), outputs.end(), [](const std::string& p) {
              return p.find("model_cel.json") != std::string::npos;
          }) != outputs.end());
}

TEST_CASE("cli: extract of the hand-built four-packet trace matches the hand oracle") {
    Scratch s;
    write_file(
        s / "hand.jsonl",
        R"({"timestamp":0.0,"src_ip":"10.0.0.1","dst_ip":"10.0.0.2","src_port":1000,"dst_port":30303,"protocol":"tcp","length_bytes":60,"tcp_flags":"S"})"
        "\n"
        R"({"timestamp":0.01,"src_ip":"10.0.0.2","dst_ip":"10.0.0.1","src_port":30303,"dst_port":1000,"protocol":"tcp","length_bytes":60,"tcp_flags":"SA"})"
        "\n"
        R"({"timestamp":0.1,"src_ip":"10.0.0.1","dst_ip":"10.0.0.2","src_port":1000,"dst_port":30303,"protocol":"tcp","length_bytes":100,"tcp_flags":"A"})"
        "\n"
        R"({"timestamp":0.2,"src_ip":"10.0.0.1","dst_ip":"10.0.0.2","src_port":1000,"dst_port":30303,"protocol":"tcp","length_bytes":60,"tcp_flags":"FA"})"
        "\n");
    const auto r = run_cli(s, "extract --trace " + (s / "hand.jsonl").string() + " --out " +
                                  (s / "hand.csv").string() + " --out-dir " + s.dir.string());
    REQUIRE(r.exit_code == 0);

    std::ifstream csv(s / "hand.csv");
    std::string header, row;
    REQUIRE(std::getline(csv, header));
    REQUIRE(std::getline(csv, row));
    std::vector<std::string> cells;
    std::stringstream ss(row);
    std::string cell;
    while (std::getline(ss, cell, ','))
        cells.push_back(cell);
    REQUIRE(cells.size() == 22);
    CHECK(std::stod(cells[0]) == 0.2); // duration
    CHECK(cells[1] == "tcp");
    CHECK(cells[2] == "eth-p2p");
    CHECK(cells[3] == "220"); // src_bytes: 60 + 100 + 60
    CHECK(cells[4] == "60");
    CHECK(cells[5] == "SF");
    CHECK(cells[6] == "1"); // singleton window statistics
    CHECK(cells[7] == "1");
    CHECK(cells[8] == "0");
    CHECK(cells[9] == "1");
    CHECK(cells[21] == "0"); // no rules: class 0
}

TEST_CASE("cli: malformed trace lines are named") {
    Scratch s;
    write_file(s / "bad.jsonl",
               R"({"timestamp":0.1,"src_ip":"a","dst_ip":"b","src_port":1,"dst_port":2,)"
               R"("protocol":"tcp","length_bytes":60,"tcp_flags":""})"
               "\nnot json at all\n");
    const auto r = run_cli(s, "extract --trace " + (s / "bad.jsonl").string() + " --out " +
                                  (s / "x.csv").string() + " --out-dir " + s.dir.string());
    CHECK(r.exit_code == 1);
    const auto err = json::parse(r.err);
    CHECK(err["error"] == "parse_error");
    CHECK(err["message"].get<std::string>().find("bad.jsonl:2") != std::string::npos);
}

TEST_CASE("cli: evaluating an empty test set reports empty_matrix") {
    Scratch s;
    write_file(s / "gen.conf", kGenConf);
    write_file(s / "train.conf", kTrainConf);
    run_cli(s, "generate --config " + (s / "gen.conf").string() + " --out-dir " +
                   (s / "run").string());
    run_cli(s, "extract --trace " + (s / "run/node-1.trace.jsonl").string() + " --rules " +
                   (s / "run/label-rules.json").string() + " --out " + (s / "d.csv").string() +
                   " --out-dir " + (s / "run").string());
    run_cli(s, "train --mode cel --data " + (s / "d.csv").string() + " --config " +
                   (s / "train.conf").string() + " --out-dir " + (s / "train").string());

    const std::string all = slurp(s / "d.csv");
    write_file(s / "empty.csv", all.substr(0, all.find('\n') + 1)); // header only
    const auto r = run_cli(s, "evaluate --model " + (s / "train/model_cel.json").string() +
                                  " --test " + (s / "empty.csv").string() + " --out-dir " +
                                  (s / "eval").string());
    CHECK(r.exit_code == 1);
    CHECK(json::parse(r.err)["error"] == "empty_matrix");
}

TEST_CASE("cli: argument validation errors") {
    Scratch s;
    write_file(s / "x.csv", "duration\n");
    auto r = run_cli(s, "train --mode bogus --data " + (s / "x.csv").string() + " --out-dir " +
                            s.dir.string());
    CHECK(r.exit_code == 1);
    CHECK(!json::parse(r.err)["error"].get<std::string>().empty());

    write_file(s / "t1", "");
    write_file(s / "t2", "");
    write_file(s / "r1", "[]");
    write_file(s / "r2", "[]");
    write_file(s / "r3", "[]");
    r = run_cli(s, "extract --trace " + (s / "t1").string() + " --trace " + (s / "t2").string() +
                       " --rules " + (s / "r1").string() + " --rules " + (s / "r2").string() +
                       " --rules " + (s / "r3").string() + " --out-dir " + s.dir.string());
    CHECK(r.exit_code == 1);
    CHECK(json::parse(r.err)["error"] == "invalid_config");
}

TEST_CASE("cli: bench emits histogram and summary with a p98 column") {
    Scratch s;
    write_file(s / "gen.conf", kGenConf);
    write_file(s / "train.conf", kTrainConf);
    run_cli(s, "generate --config " + (s / "gen.conf").string() + " --out-dir " +
                   (s / "run").string());
    run_cli(s, "extract --trace " + (s / "run/node-1.trace.jsonl").string() + " --rules " +
                   (s / "run/label-rules.json").string() + " --out " + (s / "d.csv").string() +
                   " --out-dir " + (s / "run").string());
    run_cli(s, "train --mode cel --data " + (s / "d.csv").string() + " --config " +
                   (s / "train.conf").string() + " --out-dir " + (s / "train").string());

    const auto r = run_cli(s, "bench --model " + (s / "train/model_cel.json").string() +
                                  " --n 200 --reps 10 --out-dir " + (s / "bench").string());
    REQUIRE(r.exit_code == 0);
    const std::string summary = slurp(s / "bench/bench_summary.csv");
    CHECK(summary.find("n_samples,repetitions,mean_s,p50_s,p98_s,max_s") == 0);
    CHECK(summary.find("\n200,10,") != std::string::npos);

    const std::string hist = slurp(s / "bench/bench_hist.csv");
    CHECK(hist.find("bucket_low_s,bucket_high_s,count") == 0);
    std::size_t total = 0;
    std::stringstream hs(hist);
    std::string line;
    std::getline(hs, line); // header
    while (std::getline(hs, line))
        total += std::stoull(line.substr(line.rfind(',') + 1));
    CHECK(total == 10);
}

TEST_CASE("cli: il mode writes one model per node") {
    Scratch s;
    write_file(s / "gen.conf", kGenConf);
    write_file(s / "train.conf", kTrainConf);
    run_cli(s, "generate --config " + (s / "gen.conf").string() + " --out-dir " +
                   (s / "run").string());
    for (int n = 1; n <= 2; ++n)
        run_cli(s, "extract --trace " +
                       (s / ("run/node-" + std::to_string(n) + ".trace.jsonl")).string() +
                       " --rules " + (s / "run/label-rules.json").string() + " --out " +
                       (s / ("node" + std::to_string(n) + ".csv")).string() + " --out-dir " +
                       (s / "run").string());
    const auto r = run_cli(s, "train --mode il --data " + (s / "node1.csv").string() +
                                  " --data " + (s / "node2.csv").string() + " --config " +
                                  (s / "train.conf").string() + " --out-dir " +
                                  (s / "train").string());
    REQUIRE(r.exit_code == 0);
    CHECK(fs::exists(s / "train/model_il_node1.json"));
    CHECK(fs::exists(s / "train/model_il_node2.json"));
    CHECK_FALSE(fs::exists(s / "train/model_il_node3.json"));
    CHECK(slurp(s / "train/model_il_node1.json") != slurp(s / "train/model_il_node2.json"));
}
