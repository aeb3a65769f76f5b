#include "vsc/standards.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vsc {

double mae(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("mae: inputs must be non-empty and equal length");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += std::fabs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

double pearson(const std::vector<double>& pred, const std::vector<double>& truth) {
  if (pred.size() != truth.size() || pred.size() < 2)
    throw std::invalid_argument("pearson: inputs must be equal length with at least 2 samples");
  const double n = static_cast<double>(pred.size());
  const double ma = std::accumulate(pred.begin(), pred.end(), 0.0) / n;
  const double mb = std::accumulate(truth.begin(), truth.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double a = pred[i] - ma, b = truth[i] - mb;
    sab += a * b;
    saa += a * a;
    sbb += b * b;
  }
  if (saa == 0.0 || sbb == 0.0)
    throw std::invalid_argument("pearson: constant input has no defined correlation");
  return sab / std::sqrt(saa * sbb);
}

const char* measure_name(Measure m) {
  switch (m) {
    case Measure::SBP: return "SBP";
    case Measure::MAP: return "MAP";
    default: return "DBP";
  }
}

namespace {

AAMIMeasure measure_stats(const std::vector<ErrorSample>& errors, Measure m) {
  std::vector<double> e;
  for (const auto& s : errors)
    if (s.measure == m) e.push_back(s.error_mmhg);
  if (e.empty()) throw std::invalid_argument("aami: no error samples for a measure");
  AAMIMeasure out;
  out.count = e.size();
  out.me = std::accumulate(e.begin(), e.end(), 0.0) / static_cast<double>(e.size());
  double v = 0.0;
  for (double x : e) v += (x - out.me) * (x - out.me);
  out.sd = std::sqrt(v / static_cast<double>(e.size()));
  return out;
}

bool measure_ok(const AAMIMeasure& m) { return std::fabs(m.me) <= 5.0 && m.sd <= 8.0; }

}  // namespace

AAMIResult aami(const std::vector<ErrorSample>& errors, int subjects) {
  if (errors.empty()) throw std::invalid_argument("aami: empty error list");
  return aami_from_stats(measure_stats(errors, Measure::SBP), measure_stats(errors, Measure::MAP),
                         measure_stats(errors, Measure::DBP), subjects);
}

AAMIResult aami_from_stats(const AAMIMeasure& sbp, const AAMIMeasure& map, const AAMIMeasure& dbp,
                           int subjects) {
  AAMIResult r;
  r.sbp = sbp;
  r.map = map;
  r.dbp = dbp;
  r.subjects = subjects;
  r.pass = measure_ok(sbp) && measure_ok(map) && measure_ok(dbp) && subjects >= 85;
  return r;
}

char bhs_grade(double cum5, double cum10, double cum15) {
  if (cum5 >= 60.0 && cum10 >= 85.0 && cum15 >= 95.0) return 'A';
  if (cum5 >= 50.0 && cum10 >= 75.0 && cum15 >= 90.0) return 'B';
  if (cum5 >= 40.0 && cum10 >= 65.0 && cum15 >= 85.0) return 'C';
  return 'D';
}

namespace {

BHSMeasure bhs_measure(const std::vector<double>& abs_err) {
  if (abs_err.empty()) throw std::invalid_argument("bhs: empty error list");
  const double n = static_cast<double>(abs_err.size());
  BHSMeasure m;
  for (double e : abs_err) {
    const double a = std::fabs(e);
    if (a <= 5.0) m.cum5 += 1.0;
    if (a <= 10.0) m.cum10 += 1.0;
    if (a <= 15.0) m.cum15 += 1.0;
  }
  m.cum5 = 100.0 * m.cum5 / n;
  m.cum10 = 100.0 * m.cum10 / n;
  m.cum15 = 100.0 * m.cum15 / n;
  m.grade = bhs_grade(m.cum5, m.cum10, m.cum15);
  return m;
}

}  // namespace

BHSResult bhs(const std::vector<double>& abs_err_sbp, const std::vector<double>& abs_err_map,
              const std::vector<double>& abs_err_dbp) {
  BHSResult r;
  r.sbp = bhs_measure(abs_err_sbp);
  r.map = bhs_measure(abs_err_map);
  r.dbp = bhs_measure(abs_err_dbp);
  r.overall = std::max({r.sbp.grade, r.map.grade, r.dbp.grade});  // 'D' > 'A' in ASCII
  return r;
}

}  // namespace vsc
