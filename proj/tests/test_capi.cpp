#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "probverif/probverif.h"

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

// Affine scalar model f(x) = x + b as JSON text.
std::string affine_model_json(double b) {
    return std::string(R"({"layers": [{"weights": [[1.0]], "bias": [)") +
           std::to_string(b) + "]}]}";
}

std::string write_problem(double bias, double eta, const std::string& tag) {
    const std::string model = temp_path("capi_model_" + tag + ".json");
    {
        std::ofstream f(model);
        f << affine_model_json(bias);
    }
    const std::string problem = temp_path("capi_problem_" + tag + ".json");
    {
        std::ofstream f(problem);
        f << R"({"model": ")" << model << R"(", "spec": null, "mean": [0.0],
              "cov_diag": [1.0], "eta": )"
          << eta << "}";
    }
    return problem;
}

} // namespace

TEST_CASE("version string") {
    CHECK(pv_version() != nullptr);
    CHECK(std::strlen(pv_version()) > 0);
}

TEST_CASE("problem load: missing file sets an error message") {
    pv_problem_t* p = nullptr;
    char* err = nullptr;
    const pv_status st = pv_problem_load("/nonexistent/file.json", &p, &err);
    CHECK(st == PV_ERR_IO);
    CHECK(p == nullptr);
    REQUIRE(err != nullptr);
    CHECK(std::strlen(err) > 0);
    pv_string_free(err);
}

TEST_CASE("problem from json text with base dir resolution") {
    const std::string model = temp_path("capi_rel_model.json");
    {
        std::ofstream f(model);
        f << affine_model_json(0.0);
    }
    const std::string text =
        R"({"model": "capi_rel_model.json", "spec": null, "mean": [0.0],
            "cov_diag": [1.0], "eta": 0.5})";
    pv_problem_t* p = nullptr;
    char* err = nullptr;
    REQUIRE(pv_problem_from_json(
                text.c_str(),
                std::filesystem::temp_directory_path().string().c_str(), &p,
                &err) == PV_OK);
    CHECK(pv_problem_input_dim(p) == 1);
    CHECK(pv_problem_eta(p) == 0.5);
    pv_problem_free(p);
    std::filesystem::remove(model);
}

TEST_CASE("verify through the C surface: verdicts and report accessors") {
    const std::string true_problem = write_problem(10.0, 0.95, "true");
    pv_problem_t* p = nullptr;
    char* err = nullptr;
    REQUIRE(pv_problem_load(true_problem.c_str(), &p, &err) == PV_OK);

    pv_config_t* cfg = pv_config_create();
    pv_config_set_samples(cfg, 20000);
    pv_config_set_seed(cfg, 7);
    pv_config_set_time_limit(cfg, 0.0);

    pv_report_t* r = nullptr;
    REQUIRE(pv_verify(p, cfg, &r, &err) == PV_OK);
    CHECK(pv_report_verdict(r) == PV_VERDICT_TRUE);
    CHECK(pv_report_p_lower(r) >= 0.95);
    CHECK(pv_report_splits(r) == 0);
    CHECK(pv_report_branches(r) == 1);
    CHECK(pv_report_confidence(r) >= 1.0 - 1e-4);
    CHECK(pv_report_wall_time(r) >= 0.0);

    char* json_timed = pv_report_to_json(r, 1);
    char* json_stable = pv_report_to_json(r, 0);
    CHECK(std::string(json_timed).find("wall_time_s") != std::string::npos);
    CHECK(std::string(json_stable).find("wall_time_s") == std::string::npos);
    pv_string_free(json_timed);
    pv_string_free(json_stable);
    pv_report_free(r);

    // eta override flips the verdict on a borderline threshold.
    pv_config_set_eta_override(cfg, 0.9999999);
    REQUIRE(pv_verify(p, cfg, &r, &err) == PV_OK);
    CHECK(pv_report_verdict(r) != PV_VERDICT_TRUE);
    pv_report_free(r);
    pv_config_free(cfg);
    pv_problem_free(p);
}

TEST_CASE("verify: identical seeds give byte-identical stable reports") {
    const std::string problem = write_problem(0.5, 0.6, "det");
    pv_problem_t* p = nullptr;
    char* err = nullptr;
    REQUIRE(pv_problem_load(problem.c_str(), &p, &err) == PV_OK);
    pv_config_t* cfg = pv_config_create();
    pv_config_set_samples(cfg, 20000);
    pv_config_set_seed(cfg, 11);
    pv_config_set_time_limit(cfg, 0.0);

    std::string a, b;
    for (std::string* out : {&a, &b}) {
        pv_report_t* r = nullptr;
        REQUIRE(pv_verify(p, cfg, &r, &err) == PV_OK);
        char* s = pv_report_to_json(r, 0);
        *out = s;
        pv_string_free(s);
        pv_report_free(r);
    }
    CHECK(a == b);
    pv_config_free(cfg);
    pv_problem_free(p);
}

TEST_CASE("config validation errors") {
    pv_config_t* cfg = pv_config_create();
    char* err = nullptr;
    CHECK(pv_config_set_strategy(cfg, "bogus", &err) == PV_ERR_INVALID_ARGUMENT);
    REQUIRE(err != nullptr);
    pv_string_free(err);
    err = nullptr;
    CHECK(pv_config_set_mode(cfg, "bogus", &err) == PV_ERR_INVALID_ARGUMENT);
    pv_string_free(err);
    CHECK(pv_config_set_strategy(cfg, "babsr-prob", nullptr) == PV_OK);
    CHECK(pv_config_set_mode(cfg, "no-split", nullptr) == PV_OK);
    pv_config_free(cfg);
}

TEST_CASE("oracle mode through the C surface") {
    const std::string problem = write_problem(0.0, 0.4, "oracle");
    pv_problem_t* p = nullptr;
    char* err = nullptr;
    REQUIRE(pv_problem_load(problem.c_str(), &p, &err) == PV_OK);
    pv_config_t* cfg = pv_config_create();
    REQUIRE(pv_config_set_mode(cfg, "oracle", nullptr) == PV_OK);
    pv_config_set_samples(cfg, 200000);
    pv_config_set_seed(cfg, 5);
    pv_config_set_oracle_workers(cfg, 2);
    pv_report_t* r = nullptr;
    REQUIRE(pv_verify(p, cfg, &r, &err) == PV_OK);
    CHECK(pv_report_p_lower(r) == doctest::Approx(0.5).epsilon(0.01));
    CHECK(pv_report_verdict(r) == PV_VERDICT_TRUE); // 0.5 >= 0.4
    pv_report_free(r);
    pv_config_free(cfg);
    pv_problem_free(p);
}

TEST_CASE("make-problem: precondition and success paths") {
    // Two-output model: y0 = x + 1, y1 = x - 1; argmax at x = 0 is 0.
    const std::string model = temp_path("capi_classifier.json");
    {
        std::ofstream f(model);
        f << R"({"layers": [{"weights": [[1.0], [1.0]], "bias": [1.0, -1.0]}]})";
    }
    const std::string out = temp_path("capi_generated_problem.json");
    const double x0[] = {0.0};
    const double cov[] = {0.01};
    char* err = nullptr;

    // Misclassified target refused.
    CHECK(pv_make_robustness_problem(model.c_str(), x0, 1, cov, 1, 1, 0,
                                     0.95, 3.0, out.c_str(),
                                     &err) == PV_ERR_PRECONDITION);
    REQUIRE(err != nullptr);
    pv_string_free(err);
    err = nullptr;

    // Correct target emits a loadable, already-foldable problem.
    REQUIRE(pv_make_robustness_problem(model.c_str(), x0, 1, cov, 1, 0, 1,
                                       0.95, 3.0, out.c_str(), &err) == PV_OK);
    pv_problem_t* p = nullptr;
    REQUIRE(pv_problem_load(out.c_str(), &p, &err) == PV_OK);
    CHECK(pv_problem_eta(p) == 0.95);

    // Tiny noise: the margin dominates, verdict TRUE.
    pv_config_t* cfg = pv_config_create();
    pv_config_set_samples(cfg, 20000);
    pv_config_set_time_limit(cfg, 0.0);
    pv_report_t* r = nullptr;
    REQUIRE(pv_verify(p, cfg, &r, &err) == PV_OK);
    CHECK(pv_report_verdict(r) == PV_VERDICT_TRUE);
    pv_report_free(r);
    pv_config_free(cfg);
    pv_problem_free(p);
    std::filesystem::remove(model);
    std::filesystem::remove(out);
}
