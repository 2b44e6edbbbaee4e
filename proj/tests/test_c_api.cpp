#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "ssnls/ssnls.h"

namespace {

struct Problem {
  std::vector<double> a;  // column-major
  std::vector<double> b;
  int64_t rows, cols;
};

Problem random_problem(unsigned seed, int64_t rows, int64_t cols) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  Problem p{std::vector<double>(size_t(rows * cols)), std::vector<double>(size_t(rows)), rows, cols};
  for (auto& v : p.a) v = std::abs(g(rng));
  for (auto& v : p.b) v = g(rng);
  return p;
}

double dot_col(const Problem& p, int64_t c, const std::vector<double>& r) {
  double s = 0.0;
  for (int64_t i = 0; i < p.rows; ++i) s += p.a[size_t(c * p.rows + i)] * r[size_t(i)];
  return s;
}

}  // namespace

TEST_CASE("version and empty error message") {
  CHECK(std::string(ssnls_version()) == "0.1.0");
  CHECK(ssnls_last_error() != nullptr);
}

TEST_CASE("dictionary handles") {
  auto p = random_problem(1, 6, 4);
  const int64_t offsets[] = {0, 2, 4};
  ssnls_dictionary* d = nullptr;
  REQUIRE(ssnls_dictionary_create(p.a.data(), 6, 4, offsets, 2, nullptr, 1, &d) == SSNLS_OK);
  CHECK(ssnls_dictionary_rows(d) == 6);
  CHECK(ssnls_dictionary_cols(d) == 4);
  CHECK(ssnls_dictionary_groups(d) == 2);
  std::vector<double> scales(4);
  CHECK(ssnls_dictionary_scales(d, scales.data()) == SSNLS_OK);
  for (int64_t c = 0; c < 4; ++c) {
    double n = 0.0;
    for (int64_t i = 0; i < 6; ++i) n += p.a[size_t(c * 6 + i)] * p.a[size_t(c * 6 + i)];
    CHECK(scales[size_t(c)] == doctest::Approx(std::sqrt(n)));
  }
  ssnls_dictionary_destroy(d);
  ssnls_dictionary_destroy(nullptr);
  CHECK(ssnls_dictionary_rows(nullptr) == 0);
}

TEST_CASE("status codes and last error") {
  auto p = random_problem(2, 5, 3);
  ssnls_dictionary* d = nullptr;
  CHECK(ssnls_dictionary_create(nullptr, 5, 3, nullptr, 0, nullptr, 1, &d) == SSNLS_ERR_CONFIG);
  CHECK(std::strlen(ssnls_last_error()) > 0);
  const int64_t bad_offsets[] = {0, 2, 5};
  CHECK(ssnls_dictionary_create(p.a.data(), 5, 3, bad_offsets, 2, nullptr, 1, &d) == SSNLS_ERR_SHAPE);
  CHECK(d == nullptr);
  // Unnormalized columns are rejected without normalize.
  CHECK(ssnls_dictionary_create(p.a.data(), 5, 3, nullptr, 0, nullptr, 0, &d) != SSNLS_OK);
  std::vector<double> zero(15, 0.0);
  CHECK(ssnls_dictionary_create(zero.data(), 5, 3, nullptr, 0, nullptr, 1, &d) != SSNLS_OK);

  REQUIRE(ssnls_dictionary_create(p.a.data(), 5, 3, nullptr, 0, nullptr, 1, &d) == SSNLS_OK);
  CHECK(std::strlen(ssnls_last_error()) == 0);
  std::vector<double> x(3);
  CHECK(ssnls_nnls(d, p.b.data(), 4, x.data()) == SSNLS_ERR_SHAPE);
  CHECK(ssnls_l1_penalized(d, p.b.data(), 5, -1.0, x.data()) == SSNLS_ERR_CONFIG);
  ssnls_options o;
  ssnls_options_default(SSNLS_DIFF_L1_L2, &o);
  o.sigma = -1.0;
  ssnls_result* r = nullptr;
  CHECK(ssnls_solve(d, p.b.data(), 5, &o, &r) == SSNLS_ERR_CONFIG);
  CHECK(r == nullptr);
  ssnls_options_default(SSNLS_HOYER_RATIO, &o);
  o.eps_intra = -1.0;
  CHECK(ssnls_solve(d, p.b.data(), 5, &o, &r) != SSNLS_OK);
  ssnls_dictionary_destroy(d);
}

TEST_CASE("solve returns coefficients, traces and termination") {
  auto p = random_problem(3, 12, 6);
  const int64_t offsets[] = {0, 3, 6};
  ssnls_dictionary* d = nullptr;
  REQUIRE(ssnls_dictionary_create(p.a.data(), 12, 6, offsets, 2, nullptr, 1, &d) == SSNLS_OK);
  for (ssnls_family f : {SSNLS_DIFF_L1_L2, SSNLS_HOYER_RATIO}) {
    ssnls_options o;
    ssnls_options_default(f, &o);
    CHECK(o.family == f);
    CHECK(o.min_active_groups == (f == SSNLS_HOYER_RATIO ? 1 : 0));
    ssnls_result* r = nullptr;
    REQUIRE(ssnls_solve(d, p.b.data(), 12, &o, &r) == SSNLS_OK);
    REQUIRE(ssnls_result_size(r) == 6);
    std::vector<double> x(6);
    CHECK(ssnls_result_coeffs(r, x.data(), 6) == SSNLS_OK);
    CHECK(ssnls_result_coeffs(r, x.data(), 5) == SSNLS_ERR_SHAPE);
    for (double v : x) CHECK(v >= 0.0);
    CHECK(ssnls_result_outer_iters(r) >= 1);
    CHECK(ssnls_result_inner_iters(r) >= 1);
    const std::string term = ssnls_result_termination(r);
    CHECK((term == "step_tol" || term == "energy_tol" || term == "max_iters"));
    const int64_t n = ssnls_result_trace_length(r);
    REQUIRE(n >= 2);
    std::vector<double> trace(static_cast<size_t>(n));
    CHECK(ssnls_result_trace(r, trace.data(), n) == SSNLS_OK);
    for (size_t k = 1; k < trace.size(); ++k) CHECK(trace[k] <= trace[k - 1]);
    ssnls_result_destroy(r);
  }
  ssnls_result_destroy(nullptr);
  ssnls_dictionary_destroy(d);
}

TEST_CASE("baselines through the C interface") {
  auto p = random_problem(4, 10, 5);
  ssnls_dictionary* d = nullptr;
  REQUIRE(ssnls_dictionary_create(p.a.data(), 10, 5, nullptr, 0, nullptr, 1, &d) == SSNLS_OK);
  std::vector<double> unit(p.a.size());
  for (int64_t c = 0; c < 5; ++c) {
    double n = 0.0;
    for (int64_t i = 0; i < 10; ++i) n += p.a[size_t(c * 10 + i)] * p.a[size_t(c * 10 + i)];
    for (int64_t i = 0; i < 10; ++i) unit[size_t(c * 10 + i)] = p.a[size_t(c * 10 + i)] / std::sqrt(n);
  }
  Problem u{unit, p.b, 10, 5};
  auto residual = [&](const std::vector<double>& x) {
    std::vector<double> r(10);
    for (int64_t i = 0; i < 10; ++i) {
      r[size_t(i)] = -u.b[size_t(i)];
      for (int64_t c = 0; c < 5; ++c) r[size_t(i)] += u.a[size_t(c * 10 + i)] * x[size_t(c)];
    }
    return r;
  };

  std::vector<double> x(5);
  REQUIRE(ssnls_nnls(d, p.b.data(), 10, x.data()) == SSNLS_OK);
  auto r = residual(x);
  for (int64_t c = 0; c < 5; ++c) {
    const double g = dot_col(u, c, r);
    CHECK(x[size_t(c)] >= 0.0);
    if (x[size_t(c)] > 0.0) CHECK(std::abs(g) < 1e-9);
    else CHECK(g >= -1e-9);
  }

  REQUIRE(ssnls_l1_penalized(d, p.b.data(), 10, 0.2, x.data()) == SSNLS_OK);
  r = residual(x);
  for (int64_t c = 0; c < 5; ++c) {
    const double g = dot_col(u, c, r) + 0.2;
    if (x[size_t(c)] > 0.0) CHECK(std::abs(g) < 1e-7);
    else CHECK(g >= -1e-7);
  }

  double bn = 0.0;
  for (double v : p.b) bn += v * v;
  REQUIRE(ssnls_l1_constrained(d, p.b.data(), 10, std::sqrt(bn), x.data()) == SSNLS_OK);
  for (double v : x) CHECK(v == 0.0);

  REQUIRE(ssnls_l0_penalty_decomposition(d, p.b.data(), 10, x.data()) == SSNLS_OK);
  int nonzeros = 0;
  for (double v : x) nonzeros += v > 0.0;
  CHECK(nonzeros <= 1);
  ssnls_dictionary_destroy(d);
}

TEST_CASE("config resolution and experiment runs") {
  char* resolved = nullptr;
  REQUIRE(ssnls_resolve_config(R"({"experiment": "doas_align", "scale": 4})", &resolved) == SSNLS_OK);
  const auto j = nlohmann::json::parse(resolved);
  ssnls_string_free(resolved);
  CHECK(j.at("doas").at("bands") == 256);
  CHECK(j.at("doas").at("grid") == "desk");
  CHECK(ssnls_resolve_config("{", &resolved) == SSNLS_ERR_CONFIG);
  CHECK(resolved == nullptr);
  CHECK(ssnls_resolve_config(R"({"bogus": 1})", &resolved) == SSNLS_ERR_CONFIG);
  CHECK(std::string(ssnls_last_error()).find("bogus") != std::string::npos);

  const auto out = std::filesystem::temp_directory_path() / "ssnls_test_c_api";
  std::filesystem::remove_all(out);
  char* record = nullptr;
  REQUIRE(ssnls_run_experiment(R"({"experiment": "doas_align", "scale": 4, "seed": 3, "solvers": ["nnls"]})",
                               out.string().c_str(), &record) == SSNLS_OK);
  REQUIRE(record != nullptr);
  const auto rec = nlohmann::json::parse(record);
  ssnls_string_free(record);
  CHECK(rec.contains("config"));
  CHECK(std::filesystem::exists(out / "metrics.csv"));
  CHECK(ssnls_run_experiment(R"({"experiment": "doas_align", "solvers": ["x"]})", out.string().c_str(), nullptr) ==
        SSNLS_ERR_CONFIG);
}
