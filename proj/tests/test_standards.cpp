#include <doctest.h>

#include <algorithm>
#include <stdexcept>

#include "vsc/rng.hpp"
#include "vsc/standards.hpp"

using namespace vsc;

TEST_CASE("mae and pearson basics") {
  std::vector<double> a{1, 2, 3, 4};
  CHECK(mae(a, a) == 0.0);
  CHECK(pearson(a, a) == doctest::Approx(1.0).epsilon(1e-12));

  std::vector<double> b{-1, -2, -3, -4};  // pred = -true, zero-mean pair
  CHECK(pearson(b, a) == doctest::Approx(-1.0).epsilon(1e-12));

  std::vector<double> c{2, 2, 2, 2};
  CHECK_THROWS_AS(pearson(c, a), std::invalid_argument);
  CHECK_THROWS_AS(mae({1.0}, {1.0, 2.0}), std::invalid_argument);
}

namespace {

AAMIResult from_triple(double sbp_me, double sbp_sd, double map_me, double map_sd, double dbp_me,
                       double dbp_sd, int subjects) {
  return aami_from_stats({sbp_me, sbp_sd, 0}, {map_me, map_sd, 0}, {dbp_me, dbp_sd, 0}, subjects);
}

}  // namespace

TEST_CASE("AAMI verdicts reproduce the published evaluation table") {
  // cohort A, PPG->ABP direction
  CHECK_FALSE(from_triple(-0.60, 13.76, -0.16, 9.00, 0.06, 7.92, 279).pass);
  CHECK_FALSE(from_triple(-14.29, 14.25, -13.64, 10.34, -13.32, 11.01, 279).pass);
  CHECK_FALSE(from_triple(1.26, 8.28, -1.99, 6.39, -1.12, 6.17, 279).pass);
  CHECK_FALSE(from_triple(0.60, 10.27, -0.05, 7.39, -0.09, 6.43, 279).pass);
  CHECK(from_triple(-0.89, 6.46, -0.83, 4.03, -1.04, 4.45, 279).pass);
  // cohort A, ECG->ABP
  CHECK_FALSE(from_triple(-1.83, 13.03, -0.54, 8.73, 0.11, 7.76, 279).pass);
  CHECK_FALSE(from_triple(1.00, 14.29, -7.22, 9.88, -11.33, 9.62, 279).pass);
  CHECK_FALSE(from_triple(1.74, 9.18, -1.12, 6.12, -1.55, 6.34, 279).pass);
  CHECK_FALSE(from_triple(-1.81, 10.81, -0.56, 7.93, -2.08, 6.79, 279).pass);
  CHECK(from_triple(-0.09, 7.09, -0.31, 4.66, -0.28, 4.38, 279).pass);
  // cohort B, PPG->ABP
  CHECK_FALSE(from_triple(-1.19, 13.01, -0.94, 7.35, -0.82, 6.47, 85).pass);
  CHECK_FALSE(from_triple(-3.43, 15.01, -1.41, 8.62, -0.40, 7.36, 85).pass);
  CHECK(from_triple(-1.49, 7.97, -0.84, 7.08, -0.51, 6.30, 85).pass);
  CHECK_FALSE(from_triple(-1.28, 9.87, -0.69, 5.49, -0.50, 5.15, 85).pass);
  CHECK(from_triple(1.15, 7.86, -0.65, 4.50, -0.47, 4.77, 85).pass);
  // cohort B, ECG->ABP
  CHECK_FALSE(from_triple(-0.40, 10.92, 0.30, 6.46, 0.65, 5.89, 85).pass);
  CHECK_FALSE(from_triple(-2.82, 15.09, -5.46, 8.95, -4.77, 8.02, 85).pass);
  CHECK_FALSE(from_triple(1.78, 8.17, -1.29, 7.42, -1.82, 6.37, 85).pass);
  CHECK_FALSE(from_triple(-1.35, 8.61, -1.50, 7.27, -1.58, 6.95, 85).pass);
  CHECK(from_triple(-1.47, 7.71, -0.92, 5.60, -0.64, 5.14, 85).pass);
}

TEST_CASE("AAMI boundary behavior") {
  // perfect predictions with exactly 85 subjects pass
  CHECK(from_triple(0, 0, 0, 0, 0, 0, 85).pass);
  CHECK_FALSE(from_triple(0, 0, 0, 0, 0, 0, 84).pass);
  // thresholds themselves pass (<= comparisons)
  CHECK(from_triple(5.0, 8.0, -5.0, 8.0, 5.0, 8.0, 85).pass);
  CHECK_FALSE(from_triple(5.01, 8.0, 0, 0, 0, 0, 85).pass);
  CHECK_FALSE(from_triple(0, 8.01, 0, 0, 0, 0, 85).pass);
}

TEST_CASE("AAMI from raw error samples is permutation invariant") {
  Rng rng(5);
  std::vector<ErrorSample> errors;
  for (int i = 0; i < 300; ++i) {
    errors.push_back({i % 90, Measure::SBP, rng.normal(0.5, 4.0)});
    errors.push_back({i % 90, Measure::MAP, rng.normal(-0.2, 3.0)});
    errors.push_back({i % 90, Measure::DBP, rng.normal(0.1, 3.5)});
  }
  AAMIResult r1 = aami(errors, 90);
  std::reverse(errors.begin(), errors.end());
  AAMIResult r2 = aami(errors, 90);
  CHECK(r1.sbp.me == doctest::Approx(r2.sbp.me).epsilon(1e-12));
  CHECK(r1.sbp.sd == doctest::Approx(r2.sbp.sd).epsilon(1e-12));
  CHECK(r1.pass == r2.pass);
  CHECK(r1.pass);

  CHECK_THROWS_AS(aami({}, 90), std::invalid_argument);
}

TEST_CASE("BHS grade thresholds are minimum-inclusive") {
  CHECK(bhs_grade(60.0, 85.0, 95.0) == 'A');
  CHECK(bhs_grade(61.0, 86.0, 96.0) == 'A');
  CHECK(bhs_grade(59.9, 86.0, 96.0) == 'B');
  CHECK(bhs_grade(50.0, 75.0, 90.0) == 'B');
  CHECK(bhs_grade(40.0, 65.0, 85.0) == 'C');
  CHECK(bhs_grade(39.9, 65.0, 85.0) == 'D');
  CHECK(bhs_grade(100.0, 60.0, 100.0) == 'D');  // all three must qualify
}

namespace {

// n errors of which `w5` are within 5 mmHg, then `w10` more within 10, `w15`
// more within 15, rest outside.
std::vector<double> make_errors(int w5, int w10, int w15, int beyond) {
  std::vector<double> e;
  for (int i = 0; i < w5; ++i) e.push_back(2.0);
  for (int i = 0; i < w10; ++i) e.push_back(8.0);
  for (int i = 0; i < w15; ++i) e.push_back(13.0);
  for (int i = 0; i < beyond; ++i) e.push_back(30.0);
  return e;
}

}  // namespace

TEST_CASE("BHS overall grade is the worst measure (published caption example)") {
  // SBP C, MAP B, DBP A -> overall C
  auto sbp = make_errors(40, 25, 20, 15);  // 40/65/85 -> C
  auto map = make_errors(50, 25, 15, 10);  // 50/75/90 -> B
  auto dbp = make_errors(60, 25, 10, 5);   // 60/85/95 -> A
  BHSResult r = bhs(sbp, map, dbp);
  CHECK(r.sbp.grade == 'C');
  CHECK(r.map.grade == 'B');
  CHECK(r.dbp.grade == 'A');
  CHECK(r.overall == 'C');
  CHECK(r.sbp.cum5 <= r.sbp.cum10);
  CHECK(r.sbp.cum10 <= r.sbp.cum15);
}

TEST_CASE("BHS monotonicity: adding a small error never lowers a grade") {
  Rng rng(6);
  for (int trial = 0; trial < 30; ++trial) {
    std::vector<double> e;
    const int n = 20 + static_cast<int>(rng.next_below(60));
    for (int i = 0; i < n; ++i) e.push_back(rng.uniform(0.0, 25.0));
    auto base = bhs(e, e, e);
    e.push_back(rng.uniform(0.0, 5.0));  // |err| <= 5 counts toward every bucket
    auto more = bhs(e, e, e);
    CHECK(more.overall <= base.overall);  // grades: 'A' < 'B' < 'C' < 'D'
  }
}

TEST_CASE("AAMI monotone under error shrinkage") {
  Rng rng(7);
  std::vector<ErrorSample> errors;
  for (int i = 0; i < 400; ++i) {
    errors.push_back({i % 100, Measure::SBP, rng.normal(1.0, 7.0)});
    errors.push_back({i % 100, Measure::MAP, rng.normal(1.0, 7.0)});
    errors.push_back({i % 100, Measure::DBP, rng.normal(1.0, 7.0)});
  }
  bool was_pass = aami(errors, 100).pass;
  for (double shrink : {0.8, 0.5, 0.2, 0.05}) {
    auto scaled = errors;
    for (auto& s : scaled) s.error_mmhg *= shrink;
    const bool now = aami(scaled, 100).pass;
    if (was_pass) CHECK(now);  // shrinking toward zero never flips pass->fail
    was_pass = now;
  }
}
