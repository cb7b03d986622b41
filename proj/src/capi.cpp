#include "probverif/probverif.h"

#include <cstdlib>
#include <cstring>
#include <string>

#include "bab.hpp"
#include "error.hpp"
#include "model.hpp"
#include "oracle.hpp"

namespace {

char* dup_cstring(const std::string& s) {
    char* out = static_cast<char*>(std::malloc(s.size() + 1));
    if (out)
        std::memcpy(out, s.c_str(), s.size() + 1);
    return out;
}

void set_err(char** err, const std::string& message) {
    if (err)
        *err = dup_cstring(message);
}

pv_status status_of(const pv::Error& e) {
    switch (e.code()) {
    case pv::ErrorCode::InvalidArgument: return PV_ERR_INVALID_ARGUMENT;
    case pv::ErrorCode::Parse: return PV_ERR_PARSE;
    case pv::ErrorCode::Dimension: return PV_ERR_DIMENSION;
    case pv::ErrorCode::NonFinite: return PV_ERR_NONFINITE;
    case pv::ErrorCode::Io: return PV_ERR_IO;
    case pv::ErrorCode::Precondition: return PV_ERR_PRECONDITION;
    case pv::ErrorCode::Internal: return PV_ERR_INTERNAL;
    }
    return PV_ERR_INTERNAL;
}

template <typename Fn>
pv_status guarded(char** err, Fn&& fn) {
    try {
        fn();
        return PV_OK;
    } catch (const pv::Error& e) {
        set_err(err, e.what());
        return status_of(e);
    } catch (const std::exception& e) {
        set_err(err, e.what());
        return PV_ERR_INTERNAL;
    } catch (...) {
        set_err(err, "unknown error");
        return PV_ERR_INTERNAL;
    }
}

enum class RunMode { Bab, NoSplit, Oracle };

} // namespace

struct pv_problem_t {
    pv::ProblemInstance instance;
};

struct pv_config_t {
    RunMode mode = RunMode::Bab;
    pv::StrategyKind strategy = pv::StrategyKind::Ordered;
    double tau = 0.01;
    pv::Budget budget;
    std::uint64_t seed = 0;
    double eta_override = -1.0;
    double z_override = -1.0;
    int oracle_workers = 1;
};

struct pv_report_t {
    pv::VerificationReport report;
};

extern "C" {

const char* pv_version(void) { return "0.1.0"; }

pv_status pv_problem_load(const char* path, pv_problem_t** out, char** err) {
    if (!path || !out) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    return guarded(err, [&] {
        *out = new pv_problem_t{pv::load_problem(path)};
    });
}

pv_status pv_problem_from_json(const char* json_text, const char* base_dir,
                               pv_problem_t** out, char** err) {
    if (!json_text || !out) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    return guarded(err, [&] {
        *out = new pv_problem_t{
            pv::parse_problem_json(json_text, base_dir ? base_dir : "")};
    });
}

void pv_problem_free(pv_problem_t* problem) { delete problem; }

int pv_problem_input_dim(const pv_problem_t* problem) {
    return problem ? problem->instance.network.input_dim() : 0;
}

double pv_problem_eta(const pv_problem_t* problem) {
    return problem ? problem->instance.eta : 0.0;
}

pv_config_t* pv_config_create(void) {
    auto* cfg = new pv_config_t;
    cfg->budget.n_samples = 100000;
    cfg->budget.split_depth = 1;
    cfg->budget.batch_size = 1;
    cfg->budget.time_limit_s = 120.0;
    return cfg;
}

void pv_config_free(pv_config_t* config) { delete config; }

pv_status pv_config_set_mode(pv_config_t* config, const char* mode, char** err) {
    if (!config || !mode) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    const std::string m = mode;
    if (m == "bab")
        config->mode = RunMode::Bab;
    else if (m == "no-split")
        config->mode = RunMode::NoSplit;
    else if (m == "oracle")
        config->mode = RunMode::Oracle;
    else {
        set_err(err, "unknown mode: " + m + " (expected bab|no-split|oracle)");
        return PV_ERR_INVALID_ARGUMENT;
    }
    return PV_OK;
}

pv_status pv_config_set_strategy(pv_config_t* config, const char* strategy,
                                 char** err) {
    if (!config || !strategy) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    const std::string s = strategy;
    if (s == "ordered")
        config->strategy = pv::StrategyKind::Ordered;
    else if (s == "babsr-prob")
        config->strategy = pv::StrategyKind::BabsrProb;
    else {
        set_err(err, "unknown strategy: " + s + " (expected ordered|babsr-prob)");
        return PV_ERR_INVALID_ARGUMENT;
    }
    return PV_OK;
}

void pv_config_set_tau(pv_config_t* config, double tau) {
    if (config)
        config->tau = tau;
}

void pv_config_set_samples(pv_config_t* config, int64_t n_samples) {
    if (config)
        config->budget.n_samples = n_samples;
}

void pv_config_set_split_depth(pv_config_t* config, int split_depth) {
    if (config)
        config->budget.split_depth = split_depth;
}

void pv_config_set_batch_size(pv_config_t* config, int batch_size) {
    if (config)
        config->budget.batch_size = batch_size;
}

void pv_config_set_time_limit(pv_config_t* config, double time_limit_s) {
    if (config)
        config->budget.time_limit_s = time_limit_s;
}

void pv_config_set_seed(pv_config_t* config, uint64_t seed) {
    if (config)
        config->seed = seed;
}

void pv_config_set_eta_override(pv_config_t* config, double eta) {
    if (config)
        config->eta_override = eta;
}

void pv_config_set_z_override(pv_config_t* config, double z) {
    if (config)
        config->z_override = z;
}

void pv_config_set_oracle_workers(pv_config_t* config, int workers) {
    if (config)
        config->oracle_workers = workers;
}

pv_status pv_verify(const pv_problem_t* problem, const pv_config_t* config,
                    pv_report_t** out, char** err) {
    if (!problem || !config || !out) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    *out = nullptr;
    return guarded(err, [&] {
        pv::ProblemInstance instance = problem->instance;
        if (config->eta_override >= 0.0)
            instance.eta = config->eta_override;
        if (config->z_override > 0.0)
            instance.truncation_z = config->z_override;

        pv::VerificationReport report;
        if (config->mode == RunMode::Oracle) {
            pv::GaussianInput gaussian(instance.input_mean, instance.input_cov);
            const pv::OracleEstimate est = pv::oracle_probability(
                instance.network, gaussian, nullptr, config->budget.n_samples,
                config->seed, config->oracle_workers);
            report.verdict = est.value >= instance.eta ? pv::Verdict::True
                                                       : pv::Verdict::False;
            report.p_lower = est.value;
            report.p_upper = est.value;
            report.confidence = 0.0;
            report.splits = 0;
            report.branches_final = 0;
            report.seed = config->seed;
            report.strategy = "oracle";
            report.n_samples_final = est.n_samples;
            report.eta = instance.eta;
        } else if (config->mode == RunMode::NoSplit) {
            report = pv::verify_no_split(instance, config->budget, config->seed);
        } else {
            pv::EngineOptions options;
            options.strategy = config->strategy;
            options.tau = config->tau;
            options.budget = config->budget;
            options.seed = config->seed;
            report = pv::verify(instance, options);
        }
        *out = new pv_report_t{std::move(report)};
    });
}

void pv_report_free(pv_report_t* report) { delete report; }

pv_verdict pv_report_verdict(const pv_report_t* report) {
    if (!report)
        return PV_VERDICT_TIMEOUT;
    switch (report->report.verdict) {
    case pv::Verdict::True: return PV_VERDICT_TRUE;
    case pv::Verdict::False: return PV_VERDICT_FALSE;
    case pv::Verdict::Timeout: return PV_VERDICT_TIMEOUT;
    }
    return PV_VERDICT_TIMEOUT;
}

double pv_report_p_lower(const pv_report_t* report) {
    return report ? report->report.p_lower : 0.0;
}

double pv_report_p_upper(const pv_report_t* report) {
    return report ? report->report.p_upper : 0.0;
}

double pv_report_confidence(const pv_report_t* report) {
    return report ? report->report.confidence : 0.0;
}

int64_t pv_report_splits(const pv_report_t* report) {
    return report ? report->report.splits : 0;
}

int64_t pv_report_branches(const pv_report_t* report) {
    return report ? report->report.branches_final : 0;
}

double pv_report_wall_time(const pv_report_t* report) {
    return report ? report->report.wall_time_s : 0.0;
}

char* pv_report_to_json(const pv_report_t* report, int include_timing) {
    if (!report)
        return nullptr;
    return dup_cstring(report->report.to_json(include_timing != 0));
}

pv_status pv_make_robustness_problem(const char* model_path, const double* x0,
                                     size_t x0_len, const double* cov_diag,
                                     size_t cov_len, int target, int attack,
                                     double eta, double truncation_z,
                                     const char* out_path, char** err) {
    if (!model_path || !x0 || !cov_diag || !out_path) {
        set_err(err, "null argument");
        return PV_ERR_INVALID_ARGUMENT;
    }
    return guarded(err, [&] {
        const pv::Network net = pv::load_model(model_path);
        if (static_cast<int>(x0_len) != net.input_dim())
            throw pv::Error(pv::ErrorCode::Dimension,
                            "x0 length != model input width");
        if (cov_len != x0_len)
            throw pv::Error(pv::ErrorCode::Dimension,
                            "cov_diag length != x0 length");
        const int m = net.output_dim();
        if (target < 0 || target >= m || attack < 0 || attack >= m)
            throw pv::Error(pv::ErrorCode::InvalidArgument,
                            "target/attack label out of range");
        if (target == attack)
            throw pv::Error(pv::ErrorCode::InvalidArgument,
                            "target and attack labels must differ");

        const Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(
            x0, static_cast<Eigen::Index>(x0_len));
        const Eigen::VectorXd y = net.forward_vec(x);
        Eigen::Index argmax = 0;
        y.maxCoeff(&argmax);
        if (static_cast<int>(argmax) != target)
            throw pv::Error(pv::ErrorCode::Precondition,
                            "x0 is classified as " + std::to_string(argmax) +
                                ", not as target " + std::to_string(target));

        pv::HalfSpaceSpec spec;
        spec.c = Eigen::VectorXd::Zero(m);
        spec.c(target) = 1.0;
        spec.c(attack) = -1.0;
        spec.d = 0.0;
        const Eigen::VectorXd cov = Eigen::Map<const Eigen::VectorXd>(
            cov_diag, static_cast<Eigen::Index>(cov_len));
        if ((cov.array() <= 0.0).any())
            throw pv::Error(pv::ErrorCode::InvalidArgument,
                            "covariance entries must be positive");
        pv::save_problem(model_path, &spec, x, cov, eta, truncation_z, out_path);
    });
}

void pv_string_free(char* s) { std::free(s); }

} // extern "C"
