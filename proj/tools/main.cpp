// probverif command-line front end. Links the shared C API only.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "probverif/probverif.h"

namespace {

struct CommonFlags {
    std::string strategy = "ordered";
    std::string mode = "bab";
    double eta = -1.0; // < 0: use the problem file's value
    double tau = 0.01;
    std::int64_t samples = 100000;
    int split_depth = 1;
    int batch = 1;
    double time_limit = 120.0;
    std::uint64_t seed = 0;
    bool seed_set = false;
    double z = -1.0; // < 0: use the problem file's value
    int workers = 1;
};

void add_common_flags(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--strategy", f.strategy, "Splitting strategy")
        ->check(CLI::IsMember({"ordered", "babsr-prob"}));
    cmd->add_option("--mode", f.mode, "Run mode")
        ->check(CLI::IsMember({"bab", "no-split", "oracle"}));
    cmd->add_option("--eta", f.eta, "Probability threshold override");
    cmd->add_option("--tau", f.tau, "babsr-prob uncertainty threshold");
    cmd->add_option("--samples", f.samples, "Monte Carlo samples per branch");
    cmd->add_option("--split-depth", f.split_depth, "Nested splits per pop");
    cmd->add_option("--batch", f.batch, "Concurrent child evaluations");
    cmd->add_option("--time-limit", f.time_limit,
                    "Per-instance time limit in seconds (<= 0: none)");
    cmd->add_option("--seed", f.seed, "RNG seed (fallback: PROBVERIF_SEED)")
        ->each([&f](const std::string&) { f.seed_set = true; });
    cmd->add_option("--z", f.z, "Truncation half-width override (in sigmas)");
    cmd->add_option("--workers", f.workers, "Oracle sampling workers");
}

std::uint64_t resolve_seed(const CommonFlags& f) {
    if (f.seed_set)
        return f.seed;
    if (const char* env = std::getenv("PROBVERIF_SEED"))
        return std::strtoull(env, nullptr, 10);
    return 0;
}

struct ConfigHandle {
    pv_config_t* cfg;
    explicit ConfigHandle(const CommonFlags& f) : cfg(pv_config_create()) {
        pv_config_set_strategy(cfg, f.strategy.c_str(), nullptr);
        pv_config_set_mode(cfg, f.mode.c_str(), nullptr);
        pv_config_set_tau(cfg, f.tau);
        pv_config_set_samples(cfg, f.samples);
        pv_config_set_split_depth(cfg, f.split_depth);
        pv_config_set_batch_size(cfg, f.batch);
        pv_config_set_time_limit(cfg, f.time_limit);
        pv_config_set_seed(cfg, resolve_seed(f));
        if (f.eta >= 0.0)
            pv_config_set_eta_override(cfg, f.eta);
        if (f.z > 0.0)
            pv_config_set_z_override(cfg, f.z);
        pv_config_set_oracle_workers(cfg, f.workers);
    }
    ~ConfigHandle() { pv_config_free(cfg); }
};

int fail(const std::string& what, char* err) {
    std::cerr << "error: " << what;
    if (err) {
        std::cerr << ": " << err;
        pv_string_free(err);
    }
    std::cerr << "\n";
    return 3;
}

int verdict_exit_code(pv_verdict v) {
    switch (v) {
    case PV_VERDICT_TRUE: return 0;
    case PV_VERDICT_FALSE: return 1;
    case PV_VERDICT_TIMEOUT: return 2;
    }
    return 2;
}

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty())
            out.push_back(std::stod(item));
    return out;
}

int run_verify(const std::string& problem_path, const CommonFlags& flags) {
    pv_problem_t* problem = nullptr;
    char* err = nullptr;
    if (pv_problem_load(problem_path.c_str(), &problem, &err) != PV_OK)
        return fail("cannot load problem", err);

    ConfigHandle config(flags);
    pv_report_t* report = nullptr;
    const pv_status st = pv_verify(problem, config.cfg, &report, &err);
    pv_problem_free(problem);
    if (st != PV_OK)
        return fail("verification failed", err);

    char* json = pv_report_to_json(report, 1);
    std::cout << json << "\n";
    pv_string_free(json);
    const int code = verdict_exit_code(pv_report_verdict(report));
    pv_report_free(report);
    return code;
}

int run_oracle(const std::string& problem_path, const CommonFlags& flags) {
    pv_problem_t* problem = nullptr;
    char* err = nullptr;
    if (pv_problem_load(problem_path.c_str(), &problem, &err) != PV_OK)
        return fail("cannot load problem", err);

    CommonFlags f = flags;
    f.mode = "oracle";
    ConfigHandle config(f);
    pv_report_t* report = nullptr;
    const pv_status st = pv_verify(problem, config.cfg, &report, &err);
    pv_problem_free(problem);
    if (st != PV_OK)
        return fail("oracle run failed", err);

    const double value = pv_report_p_lower(report);
    const double n = static_cast<double>(f.samples);
    nlohmann::json j;
    j["value"] = value;
    j["n_samples"] = f.samples;
    j["std_error"] = std::sqrt(value * (1.0 - value) / n);
    j["seed"] = resolve_seed(f);
    j["verdict"] = pv_report_verdict(report) == PV_VERDICT_TRUE ? "TRUE" : "FALSE";
    std::cout << j.dump(2) << "\n";
    pv_report_free(report);
    return 0;
}

struct BenchRow {
    std::string instance;
    std::string strategy;
    std::string verdict;
    double p_lower = 0.0, p_upper = 0.0, confidence = 0.0;
    std::int64_t splits = 0;
    double time_s = 0.0;
};

int run_bench(const std::string& corpus_dir, const std::string& strategies_csv,
              const CommonFlags& flags, const std::string& out_csv,
              const std::string& out_json) {
    std::vector<std::string> files;
    std::error_code ec;
    for (const auto& entry : std::filesystem::directory_iterator(corpus_dir, ec))
        if (entry.path().extension() == ".json")
            files.push_back(entry.path().string());
    if (ec)
        return fail("cannot read corpus dir " + corpus_dir, nullptr);
    if (files.empty())
        return fail("no .json problem files in corpus dir", nullptr);
    std::sort(files.begin(), files.end());

    std::vector<std::string> strategies;
    {
        std::stringstream ss(strategies_csv);
        std::string item;
        while (std::getline(ss, item, ','))
            if (!item.empty())
                strategies.push_back(item);
    }

    std::vector<BenchRow> rows;
    for (const std::string& strat : strategies) {
        for (const std::string& file : files) {
            pv_problem_t* problem = nullptr;
            char* err = nullptr;
            if (pv_problem_load(file.c_str(), &problem, &err) != PV_OK)
                return fail("cannot load " + file, err);
            CommonFlags f = flags;
            if (strat == "no-split")
                f.mode = "no-split";
            else
                f.strategy = strat;
            ConfigHandle config(f);
            pv_report_t* report = nullptr;
            const pv_status st = pv_verify(problem, config.cfg, &report, &err);
            pv_problem_free(problem);
            if (st != PV_OK)
                return fail("verification failed on " + file, err);
            BenchRow row;
            row.instance = std::filesystem::path(file).filename().string();
            row.strategy = strat;
            switch (pv_report_verdict(report)) {
            case PV_VERDICT_TRUE: row.verdict = "TRUE"; break;
            case PV_VERDICT_FALSE: row.verdict = "FALSE"; break;
            default: row.verdict = "TIMEOUT"; break;
            }
            row.p_lower = pv_report_p_lower(report);
            row.p_upper = pv_report_p_upper(report);
            row.confidence = pv_report_confidence(report);
            row.splits = pv_report_splits(report);
            row.time_s = pv_report_wall_time(report);
            pv_report_free(report);
            rows.push_back(std::move(row));
        }
    }

    std::ostringstream csv;
    csv << "instance,strategy,verdict,P_lower,P_upper,confidence,splits,time_s\n";
    for (const BenchRow& r : rows)
        csv << r.instance << ',' << r.strategy << ',' << r.verdict << ','
            << r.p_lower << ',' << r.p_upper << ',' << r.confidence << ','
            << r.splits << ',' << r.time_s << "\n";
    csv << "\nstrategy,success_rate,avg_time_s,avg_splits\n";

    nlohmann::json ja;
    ja["per_instance"] = nlohmann::json::array();
    for (const BenchRow& r : rows)
        ja["per_instance"].push_back({{"instance", r.instance},
                                      {"strategy", r.strategy},
                                      {"verdict", r.verdict},
                                      {"P_lower", r.p_lower},
                                      {"P_upper", r.p_upper},
                                      {"confidence", r.confidence},
                                      {"splits", r.splits},
                                      {"time_s", r.time_s}});
    ja["aggregates"] = nlohmann::json::array();
    for (const std::string& strat : strategies) {
        int total = 0, decided = 0;
        double time_sum = 0.0, split_sum = 0.0;
        for (const BenchRow& r : rows) {
            if (r.strategy != strat)
                continue;
            ++total;
            if (r.verdict != "TIMEOUT")
                ++decided;
            time_sum += r.time_s;
            split_sum += static_cast<double>(r.splits);
        }
        const double rate = total ? static_cast<double>(decided) / total : 0.0;
        csv << strat << ',' << rate << ',' << (total ? time_sum / total : 0.0)
            << ',' << (total ? split_sum / total : 0.0) << "\n";
        ja["aggregates"].push_back({{"strategy", strat},
                                    {"success_rate", rate},
                                    {"avg_time_s", total ? time_sum / total : 0.0},
                                    {"avg_splits", total ? split_sum / total : 0.0},
                                    {"instances", total}});
    }

    if (out_csv.empty()) {
        std::cout << csv.str();
    } else {
        std::ofstream f(out_csv);
        if (!f)
            return fail("cannot write " + out_csv, nullptr);
        f << csv.str();
    }
    if (!out_json.empty()) {
        std::ofstream f(out_json);
        if (!f)
            return fail("cannot write " + out_json, nullptr);
        f << ja.dump(2) << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Probabilistic verifier for feedforward-ReLU networks under "
                 "Gaussian input noise"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(pv_version()));

    // verify
    CommonFlags vflags;
    std::string problem_path;
    CLI::App* verify_cmd =
        app.add_subcommand("verify", "Verify P[f(X) > 0] >= eta for a problem file");
    verify_cmd->add_option("problem", problem_path, "Problem JSON file")
        ->required();
    add_common_flags(verify_cmd, vflags);

    // oracle
    CommonFlags oflags;
    oflags.samples = 1000000;
    std::string oracle_problem;
    CLI::App* oracle_cmd = app.add_subcommand(
        "oracle", "Direct-sampling reference estimate of P[f(X) > 0]");
    oracle_cmd->add_option("problem", oracle_problem, "Problem JSON file")
        ->required();
    add_common_flags(oracle_cmd, oflags);

    // make-problem
    std::string model_path, x0_text, cov_text, out_path;
    double sigma = -1.0, radius997 = -1.0, mp_eta = 0.95, mp_z = 3.0;
    int target = -1, attack = -1;
    CLI::App* make_cmd = app.add_subcommand(
        "make-problem", "Emit a local-robustness problem for a classifier model");
    make_cmd->add_option("--model", model_path, "Multi-output model JSON")->required();
    make_cmd->add_option("--x0", x0_text, "Input point, comma-separated")->required();
    make_cmd->add_option("--sigma", sigma, "Isotropic noise std deviation");
    make_cmd->add_option("--cov-diag", cov_text, "Diagonal covariance, comma-separated");
    make_cmd->add_option("--radius-99.7", radius997,
                         "Radius of the 99.7%-confidence ball (sets sigma = r/3)");
    make_cmd->add_option("--target", target, "Ground-truth label")->required();
    make_cmd->add_option("--attack", attack, "Attacking label")->required();
    make_cmd->add_option("--eta", mp_eta, "Probability threshold");
    make_cmd->add_option("--z", mp_z, "Truncation half-width in sigmas");
    make_cmd->add_option("--out", out_path, "Output problem file")->required();

    // bench
    CommonFlags bflags;
    std::string corpus_dir, strategies = "ordered,babsr-prob";
    std::string bench_csv, bench_json;
    CLI::App* bench_cmd =
        app.add_subcommand("bench", "Run a corpus of problems per strategy");
    bench_cmd->add_option("corpus", corpus_dir, "Directory of problem files")
        ->required();
    bench_cmd->add_option("--strategies", strategies,
                          "Comma list of ordered|babsr-prob|no-split");
    bench_cmd->add_option("--out", bench_csv, "CSV output path (default stdout)");
    bench_cmd->add_option("--json", bench_json, "JSON output path");
    add_common_flags(bench_cmd, bflags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 3;
    }

    try {
        if (verify_cmd->parsed())
            return run_verify(problem_path, vflags);
        if (oracle_cmd->parsed())
            return run_oracle(oracle_problem, oflags);
        if (bench_cmd->parsed())
            return run_bench(corpus_dir, strategies, bflags, bench_csv, bench_json);
        if (make_cmd->parsed()) {
            const std::vector<double> x0 = parse_double_list(x0_text);
            std::vector<double> cov;
            if (!cov_text.empty()) {
                cov = parse_double_list(cov_text);
            } else {
                double s = sigma;
                if (s <= 0.0 && radius997 > 0.0)
                    s = radius997 / 3.0;
                if (s <= 0.0)
                    return fail("need --sigma, --cov-diag, or --radius-99.7", nullptr);
                cov.assign(x0.size(), s * s);
            }
            char* err = nullptr;
            if (pv_make_robustness_problem(model_path.c_str(), x0.data(), x0.size(),
                                           cov.data(), cov.size(), target, attack,
                                           mp_eta, mp_z, out_path.c_str(),
                                           &err) != PV_OK)
                return fail("make-problem failed", err);
            std::cout << "wrote " << out_path << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        return fail(e.what(), nullptr);
    }
    return 3;
}
