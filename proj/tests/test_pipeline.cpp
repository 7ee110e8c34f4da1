#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <type_traits>

#include "fabreg/error.hpp"
#include "fabreg/pipeline.hpp"
#include "fixtures.hpp"

using namespace fabreg;

namespace {

RegressionData small_effects(std::uint64_t seed, Eigen::Index n, Eigen::Index p, double sd) {
  Rng rng(seed);
  return fixture::linear_model(seed + 1, n, p, fixture::gaussian_vector(rng, p, sd));
}

void check_same_records(const AnalysisReport& a, const AnalysisReport& b, double tol) {
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t j = 0; j < a.records.size(); ++j) {
    CAPTURE(j);
    CHECK(a.records[j].column == b.records[j].column);
    CHECK(std::fabs(a.records[j].beta_hat - b.records[j].beta_hat) <= tol);
    CHECK(std::fabs(a.records[j].umau.lower - b.records[j].umau.lower) <= tol);
    CHECK(std::fabs(a.records[j].fab.lower - b.records[j].fab.lower) <= tol);
    CHECK(std::fabs(a.records[j].fab.upper - b.records[j].fab.upper) <= tol);
  }
}

}  // namespace

TEST_CASE("single coefficient falls back to UMAU") {
  const RegressionData data = small_effects(1, 30, 1, 1.0);
  const AnalysisReport r = analyze(data, AnalysisConfig{});
  REQUIRE(r.records.size() == 1);
  const CoefficientRecord& rec = r.records[0];
  CHECK_FALSE(rec.prior.has_value());
  CHECK(rec.fab.lower == rec.umau.lower);
  CHECK(rec.fab.upper == rec.umau.upper);
  CHECK(rec.relative_width == 1.0);
  CHECK(std::find(rec.flags.begin(), rec.flags.end(), "empty_context") != rec.flags.end());
}

TEST_CASE("small effects give narrower FAB intervals on average") {
  const RegressionData data = small_effects(2, 200, 40, 0.02);
  const AnalysisReport r = analyze(data, AnalysisConfig{});
  CHECK(r.p == 40);
  CHECK(r.df == 160);
  CHECK(r.mean_relative_width() < 1.0);
  for (const CoefficientRecord& rec : r.records) {
    CHECK(rec.prior.has_value());
    CHECK(rec.fab.lower < rec.beta_hat + 1e-12);
    CHECK(rec.significant_umau == !rec.umau.contains(0.0));
    CHECK(rec.significant_fab == !rec.fab.contains(0.0));
    CHECK(rec.relative_width == std::round(rec.fab.width / rec.umau.width * 1e4) / 1e4);
  }
}

TEST_CASE("UMAU intervals do not depend on the prior settings") {
  const RegressionData data = small_effects(3, 80, 10, 0.5);
  AnalysisConfig a, b;
  b.estimator = PriorMethod::moment;
  b.prior_mean_mode = PriorMeanMode::estimated;
  const AnalysisReport ra = analyze(data, a), rb = analyze(data, b);
  for (std::size_t j = 0; j < 10; ++j) {
    CHECK(ra.records[j].umau.lower == rb.records[j].umau.lower);
    CHECK(ra.records[j].umau.upper == rb.records[j].umau.upper);
  }
}

TEST_CASE("analysis is deterministic and thread-count invariant") {
  const RegressionData data = small_effects(4, 120, 15, 0.3);
  AnalysisConfig one, three;
  three.threads = 3;
  const AnalysisReport a = analyze(data, one), b = analyze(data, one), c = analyze(data, three);
  check_same_records(a, b, 0.0);
  check_same_records(a, c, 0.0);
}

TEST_CASE("spending spec depends only on adaptation statistics") {
  // The signature admits nothing but the adaptation data, w and the config.
  static_assert(std::is_same_v<decltype(&build_spending_spec),
                               AdaptiveSpec (*)(const AdaptationData&, double,
                                                const AnalysisConfig&)>);
  const RegressionData data = small_effects(5, 60, 8, 0.4);
  const OlsFit fit = fit_ols(data);
  for (std::size_t j = 0; j < 8; ++j) {
    const ProjectionDecomposition d = decompose(data, j);
    RegressionData shifted = data;
    shifted.y += 5.0 * d.a / d.a.squaredNorm();
    const CoefficientContext c0 = coefficient_context(data, fit, j);
    const CoefficientContext c1 = coefficient_context(shifted, fit_ols(shifted), j);
    const AdaptiveSpec s0 = build_spending_spec(c0.adaptation, c0.w, AnalysisConfig{});
    const AdaptiveSpec s1 = build_spending_spec(c1.adaptation, c1.w, AnalysisConfig{});
    CHECK(std::fabs(s1.spec.tau2 - s0.spec.tau2) <= 1e-6 * std::max(s0.spec.tau2, 1e-12));
    CHECK(std::fabs(s1.spec.sigma - s0.spec.sigma) <= 1e-6 * s0.spec.sigma);
    CHECK(s1.spec.mu == s0.spec.mu);
  }
}

TEST_CASE("grouped analysis") {
  const RegressionData data = small_effects(6, 150, 12, 0.3);
  const AnalysisReport full = analyze(data, AnalysisConfig{});

  SUBCASE("one group reproduces the ungrouped analysis") {
    AnalysisConfig cfg;
    ColumnGroup all{"all", {}};
    for (std::size_t j = 0; j < 12; ++j) all.columns.push_back(j);
    cfg.groups = std::vector<ColumnGroup>{all};
    const AnalysisReport g = analyze_grouped(data, cfg);
    check_same_records(full, g, 1e-8);
    REQUIRE(g.groups.size() == 1);
    CHECK(g.groups[0].n_effective == 150);
  }

  SUBCASE("split groups keep OLS estimates and UMAU intervals") {
    AnalysisConfig cfg;
    cfg.groups = std::vector<ColumnGroup>{{"a", {0, 1, 2}}, {"b", {3, 4, 5, 6, 7, 8, 9, 10, 11}}};
    const AnalysisReport g = analyze_grouped(data, cfg);
    REQUIRE(g.records.size() == 12);
    for (std::size_t j = 0; j < 12; ++j) {
      CHECK(g.records[j].column == j);
      CHECK(g.records[j].group == (j < 3 ? "a" : "b"));
      CHECK(std::fabs(g.records[j].beta_hat - full.records[j].beta_hat) < 1e-10);
      CHECK(std::fabs(g.records[j].umau.lower - full.records[j].umau.lower) < 1e-9);
      CHECK(std::fabs(g.records[j].umau.upper - full.records[j].umau.upper) < 1e-9);
    }
    REQUIRE(g.groups.size() == 2);
    CHECK(g.groups[0].size == 3);
    CHECK(g.groups[0].n_effective == 150 - 9);
    CHECK(g.groups[1].n_effective == 150 - 3);
    CHECK(g.groups[0].df == g.groups[1].df);
  }

  SUBCASE("groups must partition the columns") {
    AnalysisConfig cfg;
    cfg.groups = std::vector<ColumnGroup>{{"a", {0, 1}}, {"b", {1, 2}}};
    CHECK_THROWS_AS(analyze_grouped(data, cfg), InputError);
    cfg.groups = std::vector<ColumnGroup>{{"a", {0, 1}}};
    CHECK_THROWS_AS(analyze_grouped(data, cfg), InputError);
    CHECK_THROWS_AS(analyze_grouped(data, AnalysisConfig{}), InputError);
  }
}

TEST_CASE("config validation") {
  AnalysisConfig cfg;
  cfg.alpha = 0.6;
  CHECK_THROWS_AS(cfg.validate(), InputError);
  CHECK_THROWS_AS(analyze(small_effects(7, 20, 2, 1.0), cfg), InputError);
  cfg.alpha = 0.05;
  cfg.tol = 0.0;
  CHECK_THROWS_AS(cfg.validate(), InputError);
}

TEST_CASE("parallel_for runs every index and rethrows the lowest failure") {
  std::vector<int> seen(50, 0);
  parallel_for(50, 4, [&](std::size_t i) { seen[i] += 1; });
  CHECK(std::count(seen.begin(), seen.end(), 1) == 50);
  try {
    parallel_for(50, 4, [](std::size_t i) {
      if (i == 7 || i == 31) throw std::runtime_error(std::to_string(i));
    });
    FAIL("expected an exception");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()) == "7");
  }
}
