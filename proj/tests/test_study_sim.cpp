#include <doctest.h>

#include <cmath>
#include <map>

#include <boost/math/distributions/chi_squared.hpp>

#include "cde/gest.hpp"
#include "cde/study_sim.hpp"

using namespace cde;

namespace {

SimConfig small(std::uint64_t seed, std::size_t n = 100000) {
  SimConfig c;
  c.cohort_size = n;
  c.seed = seed;
  return c;
}

// Maps each simulated record back to its subject through the continuous m.
std::map<double, const Subject*> by_m(const Cohort& cohort) {
  std::map<double, const Subject*> out;
  for (const auto& s : cohort.subjects()) out[s.m] = &s;
  return out;
}

bool same(const Subject& a, const Subject& b) {
  return a.w == b.w && a.u == b.u && a.x == b.x && a.z == b.z && a.m == b.m && a.risk == b.risk && a.y == b.y;
}

}  // namespace

TEST_CASE("config parses, validates and round-trips") {
  SimConfig c;
  c.exposure = ExposureModel::genotype;
  c.n_pairs = 123;
  c.psi = -0.25;
  const auto back = parse_sim_config(serialize_sim_config(c));
  CHECK(serialize_sim_config(back) == serialize_sim_config(c));
  CHECK(back.exposure == ExposureModel::genotype);
  CHECK(back.psi == -0.25);
  CHECK(parse_sim_config("# defaults\n").cohort_size == SimConfig{}.cohort_size);
  CHECK_THROWS_WITH_AS(parse_sim_config("bogus=1\n"), doctest::Contains("unknown config key"), SimError);
  CHECK_THROWS_AS(parse_sim_config("prevalence=2\n"), SimError);
  CHECK_THROWS_AS(parse_sim_config("cohort_size=-5\n"), SimError);
  CHECK_THROWS_AS(parse_sim_config("exposure=ternary\n"), SimError);
}

TEST_CASE("cohort is deterministic given the seed") {
  const auto a = simulate_cohort(small(4, 20000));
  const auto b = simulate_cohort(small(4, 20000));
  const auto c = simulate_cohort(small(5, 20000));
  bool all_same = true, differs = false;
  for (std::size_t i = 0; i < a.subjects().size(); ++i) {
    all_same = all_same && same(a.subjects()[i], b.subjects()[i]);
    differs = differs || !same(a.subjects()[i], c.subjects()[i]);
  }
  CHECK(all_same);
  CHECK(differs);
}

TEST_CASE("empirical prevalence is within three binomial SDs of the target") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const auto c = simulate_cohort(small(seed));
    const double p = c.config().prevalence;
    const double sd = std::sqrt(p * (1 - p) / double(c.subjects().size()));
    CHECK(std::abs(c.prevalence() - p) < 3 * sd);
    CHECK(c.mean_risk() == doctest::Approx(p).epsilon(1e-9));
    CHECK(c.clipped() == 0);
  }
}

TEST_CASE("null model: exposure and outcome independent") {
  int small_p = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SimConfig c = small(seed, 200000);
    c.prevalence = 0.001;
    c.x_w = c.u_w = c.z_w = c.z_u = c.z_x = c.m_w = c.m_x = c.m_z = 0;
    c.psi = c.gamma = c.y_w = c.y_u = 0;
    const auto cohort = simulate_cohort(c);
    CHECK(cohort.baseline_risk() == doctest::Approx(0.001));
    double t[2][2] = {{0, 0}, {0, 0}};
    for (const auto& s : cohort.subjects()) t[int(s.x)][s.y] += 1;
    const double n = t[0][0] + t[0][1] + t[1][0] + t[1][1];
    double chi = 0;
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        const double e = (t[i][0] + t[i][1]) * (t[0][j] + t[1][j]) / n;
        chi += (t[i][j] - e) * (t[i][j] - e) / e;
      }
    }
    const double p = 1 - boost::math::cdf(boost::math::chi_squared(1), chi);
    small_p += p < 0.05;
  }
  // Binomial(20, 0.05): P(X > 4) is about 0.003.
  CHECK(small_p <= 4);
}

TEST_CASE("clipping beyond the limit is an error") {
  SimConfig c = small(1, 50000);
  c.prevalence = 0.05;
  c.y_u = 3.0;
  CHECK_THROWS_WITH_AS(simulate_cohort(c), doctest::Contains("prevalence too high for log link"), SimError);
}

TEST_CASE("interventional consistency") {
  const auto nat = simulate_cohort(small(8, 50000));
  for (double x : {0.0, 1.0}) {
    const auto iv = nat.intervene({x, std::nullopt});
    CHECK(iv.baseline_risk() == nat.baseline_risk());
    bool ok = true;
    for (std::size_t i = 0; i < nat.subjects().size(); ++i) {
      if (nat.subjects()[i].x == x) ok = ok && same(nat.subjects()[i], iv.subjects()[i]);
    }
    CHECK(ok);
  }
}

TEST_CASE("controlled direct effect: risk ratio of do(X=1, M=m0) to do(X=0, M=m0) is exp(psi)") {
  SimConfig c = small(9, 400000);
  const auto nat = simulate_cohort(c);
  const double m0 = c.m_intercept;
  const auto one = nat.intervene({1.0, m0});
  const auto zero = nat.intervene({0.0, m0});
  REQUIRE(one.clipped() + zero.clipped() == 0);
  CHECK(one.mean_risk() / zero.mean_risk() == doctest::Approx(std::exp(c.psi)).epsilon(1e-12));
  const double n1 = one.prevalence() * double(c.cohort_size);
  const double n0 = zero.prevalence() * double(c.cohort_size);
  const double se = std::sqrt(1 / n1 + 1 / n0);
  CHECK(std::abs(std::log(n1 / n0) - c.psi) < 3 * se);
}

TEST_CASE("matched sampling: W-homogeneous pairs, deterministic") {
  SimConfig c = small(10, 100000);
  c.n_strata = 2;
  const auto cohort = simulate_cohort(c);
  const auto s1 = sample_matched(cohort, c);
  const auto s2 = sample_matched(cohort, c);
  CHECK(write_matched_csv(s1.dataset) == write_matched_csv(s2.dataset));
  const auto lookup = by_m(cohort);
  std::size_t cases = 0;
  for (const auto& s : cohort.subjects()) cases += static_cast<std::size_t>(s.y);
  CHECK(s1.dataset.size() + s1.dropped_cases == cases);
  bool homogeneous = true, distinct = true;
  std::map<const Subject*, int> used;
  for (const auto& p : s1.dataset.pairs()) {
    const Subject* a = lookup.at(p.case_record.m);
    const Subject* b = lookup.at(p.control_record.m);
    homogeneous = homogeneous && a->w == b->w && a->y == 1 && b->y == 0;
    distinct = distinct && ++used[b] == 1;
  }
  CHECK(homogeneous);
  CHECK(distinct);

  c.n_pairs = 50;
  CHECK(sample_matched(cohort, c).dataset.size() == 50);
}

TEST_CASE("matched sampling: exhausted strata and too few pairs") {
  SimConfig c = small(11, 3000);
  c.n_strata = 1500;
  c.prevalence = 0.04;
  c.y_u = 0.0;
  c.gamma = 0.0;
  c.y_w = 0.0;
  c.min_pairs = 1;
  const auto cohort = simulate_cohort(c);
  const auto s = sample_matched(cohort, c);
  CHECK(s.dropped_cases > 0);
  CHECK(s.warnings.size() == 1);
  c.min_pairs = 30;
  c.n_strata = 4;
  CHECK_THROWS_WITH_AS(sample_matched(simulate_cohort(small(1, 2000)), c), doctest::Contains("matched pairs"),
                       SimError);
}

TEST_CASE("matched sampling preserves collapsibility") {
  // Selection of controls reads only W: within (W, Z) strata of the
  // unaffected, the X-sampled odds ratio is 1 up to Monte-Carlo error.
  SimConfig c = small(12, 400000);
  const auto cohort = simulate_cohort(c);
  const auto s = sample_matched(cohort, c);
  std::map<const Subject*, bool> sampled;
  const auto lookup = by_m(cohort);
  for (const auto& p : s.dataset.pairs()) sampled[lookup.at(p.control_record.m)] = true;
  std::map<std::pair<int, int>, std::array<double, 4>> strata;
  for (const auto& sub : cohort.subjects()) {
    if (sub.y == 1) continue;
    const int sel = sampled.count(&sub) ? 1 : 0;
    strata[{sub.w, int(sub.z)}][2 * int(sub.x) + sel] += 1;
  }
  // Mantel-Haenszel odds ratio with the Robins-Breslow-Greenland variance.
  double r = 0, sv = 0, pr = 0, ps = 0, qs = 0;
  for (const auto& [key, t] : strata) {
    const double a = t[3], b = t[2], cc = t[1], d = t[0], n = a + b + cc + d;
    const double ri = a * d / n, si = b * cc / n, p = (a + d) / n, q = (b + cc) / n;
    r += ri;
    sv += si;
    pr += p * ri;
    ps += p * si + q * ri;
    qs += q * si;
  }
  const double var = pr / (2 * r * r) + ps / (2 * r * sv) + qs / (2 * sv * sv);
  CHECK(std::abs(std::log(r / sv)) < 3 * std::sqrt(var));
}

TEST_CASE("score identity holds at the true parameters") {
  const auto c = small(13, 400000);
  const auto s = sample_matched(simulate_cohort(c), c);
  const auto d = pair_differences(s.dataset);
  double sum = 0, sq = 0;
  for (Eigen::Index i = 0; i < d.design.rows(); ++i) {
    const double t = d.design(i, 0) * std::exp(-c.psi * d.case_x(i) - c.gamma * d.case_m(i));
    sum += t;
    sq += t * t;
  }
  const double n = double(d.size());
  const double mean = sum / n;
  const double se = std::sqrt((sq / n - mean * mean) / (n - 1));
  CHECK(std::abs(mean) < 3 * se);
}

TEST_CASE("replicate study: single replicate, determinism across thread counts") {
  SimConfig c = small(14);
  const auto one = replicate_study(c, 1);
  CHECK(one.rows.size() == 1);
  CHECK(one.n_ok == 1);
  CHECK_FALSE(one.coverage);
  CHECK_FALSE(one.empirical_sd);
  CHECK(render_text(one).find("coverage") == std::string::npos);

  const auto a = replicate_study(c, 4, 1);
  const auto b = replicate_study(c, 4, 3);
  CHECK(calibration_csv(a) == calibration_csv(b));
  CHECK(render_kv(a) == render_kv(b));
  CHECK(a.coverage);
  CHECK(calibration_csv(a).find(std::string(kRngName)) == std::string::npos);
  CHECK(render_kv(a).find("rng=") != std::string::npos);
  CHECK_THROWS_AS(replicate_study(c, 0), SimError);
}

TEST_CASE("replicate study counts failures without aborting") {
  SimConfig c = small(15, 2000);
  const auto r = replicate_study(c, 3);
  CHECK(r.n_failed == 3);
  CHECK(r.n_ok == 0);
  CHECK(r.rows[0].error.find("matched pairs") != std::string::npos);
}

TEST_CASE("null scenario: 500 replicates cover at the nominal rate") {
  SimConfig c = null_scenario();
  c.seed = 2027;
  const auto r = replicate_study(c, 500);
  REQUIRE(r.coverage);
  CHECK(r.n_failed == 0);
  CHECK(*r.coverage >= 0.91);
  CHECK(*r.coverage <= 0.98);
  MESSAGE("null coverage " << *r.coverage << ", bias " << r.bias_psi);
}

TEST_CASE("genotype exposure runs end to end") {
  SimConfig c = small(16, 400000);
  c.exposure = ExposureModel::genotype;
  c.exposure_freq = 0.4;
  const auto cohort = simulate_cohort(c);
  const auto s = sample_matched(cohort, c);
  const auto g = genotype_summary(s.dataset);
  CHECK(g.controls[2] > 0);
  const auto est = estimate_direct_effect(s.dataset);
  CHECK(std::abs(est.psi_hat - c.psi) < 4 * est.se);
}
