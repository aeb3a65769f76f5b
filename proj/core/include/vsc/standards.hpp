#pragma once

#include <string>
#include <vector>

namespace vsc {

// Similarity metrics and the AAMI / BHS clinical evaluators.

double mae(const std::vector<double>& pred, const std::vector<double>& truth);
// Pearson correlation in [-1,1]; throws on constant input.
double pearson(const std::vector<double>& pred, const std::vector<double>& truth);

enum class Measure { SBP, MAP, DBP };
const char* measure_name(Measure m);

struct ErrorSample {
  int patient_id = 0;
  Measure measure = Measure::SBP;
  double error_mmhg = 0.0;  // predicted - true
};

struct AAMIMeasure {
  double me = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
};

struct AAMIResult {
  AAMIMeasure sbp, map, dbp;
  int subjects = 0;
  bool pass = false;
};

// Pass iff |ME| <= 5 mmHg and SD <= 8 mmHg for all three measures and the
// subject count is >= 85.
AAMIResult aami(const std::vector<ErrorSample>& errors, int subjects);
AAMIResult aami_from_stats(const AAMIMeasure& sbp, const AAMIMeasure& map, const AAMIMeasure& dbp,
                           int subjects);

struct BHSMeasure {
  double cum5 = 0.0, cum10 = 0.0, cum15 = 0.0;  // percentages
  char grade = 'D';
};

struct BHSResult {
  BHSMeasure sbp, map, dbp;
  char overall = 'D';
};

// Grade thresholds are minimum-inclusive: A needs >= 60/85/95 %, B >= 50/75/90,
// C >= 40/65/85, else D. The overall grade is the worst per-measure grade.
char bhs_grade(double cum5, double cum10, double cum15);
BHSResult bhs(const std::vector<double>& abs_err_sbp, const std::vector<double>& abs_err_map,
              const std::vector<double>& abs_err_dbp);

}  // namespace vsc
