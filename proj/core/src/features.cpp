#include "vsc/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace vsc {

namespace {

double vec_mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double vec_std(const std::vector<double>& v, double mean) {
  double s = 0.0;
  for (double x : v) s += (x - mean) * (x - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

// Local maxima above an amplitude threshold, merged within a refractory
// window (the larger peak wins), then pruned against the median peak height.
std::vector<int> detect_pulses(const std::vector<double>& x, double fs, double k_sigma,
                               double refractory_s, double height_frac) {
  const int n = static_cast<int>(x.size());
  if (n < 3) return {};
  const double mean = vec_mean(x);
  const double sd = vec_std(x, mean);
  if (sd == 0.0) return {};
  const double thr = mean + k_sigma * sd;
  const int refractory = std::max(1, static_cast<int>(refractory_s * fs));

  std::vector<int> peaks;
  for (int i = 1; i + 1 < n; ++i) {
    if (x[static_cast<std::size_t>(i)] <= thr) continue;
    if (x[static_cast<std::size_t>(i)] < x[static_cast<std::size_t>(i - 1)] ||
        x[static_cast<std::size_t>(i)] <= x[static_cast<std::size_t>(i + 1)])
      continue;
    if (!peaks.empty() && i - peaks.back() < refractory) {
      if (x[static_cast<std::size_t>(i)] > x[static_cast<std::size_t>(peaks.back())])
        peaks.back() = i;
    } else {
      peaks.push_back(i);
    }
  }
  if (peaks.size() < 2) return peaks;

  // Secondary waves (T waves, diastolic waves) can clear the variance
  // threshold; prune against the tallest pulse instead.
  std::vector<double> heights;
  double tallest = 0.0;
  for (int p : peaks) {
    heights.push_back(x[static_cast<std::size_t>(p)] - mean);
    tallest = std::max(tallest, heights.back());
  }
  std::vector<int> kept;
  for (std::size_t i = 0; i < peaks.size(); ++i)
    if (heights[i] >= height_frac * tallest) kept.push_back(peaks[i]);
  return kept;
}

// Pulse foot: minimum in (lo, peak]. Returns -1 when the foot is not an
// interior local minimum (e.g. the pulse is clipped at the segment edge), in
// which case the beat has no measurable onset.
int onset_before_peak(const std::vector<double>& x, int peak, int lo) {
  int best = peak;
  for (int i = peak; i > lo; --i) {
    if (x[static_cast<std::size_t>(i)] <= x[static_cast<std::size_t>(best)]) best = i;
  }
  if (best <= lo + 1 || best >= peak || best <= 0) return -1;
  if (x[static_cast<std::size_t>(best - 1)] < x[static_cast<std::size_t>(best)]) return -1;
  return best;
}

}  // namespace

Subgroup classify_feature(double value, const FeatureRange& r) {
  return (value >= r.lo && value <= r.hi) ? Subgroup::Normal : Subgroup::Abnormal;
}

FeatureRange normal_range(const std::string& feature) {
  if (feature == "QTc") return {0.35, 0.45};
  if (feature == "RR") return {0.6, 1.0};
  if (feature == "AspDT") return {2.0, 3.5};
  if (feature == "IPR") return {60.0, 100.0};
  if (feature == "SBP") return {90.0, 130.0};
  if (feature == "DBP") return {60.0, 80.0};
  throw std::invalid_argument("normal_range: unknown feature " + feature);
}

std::vector<int> detect_r_peaks(const std::vector<double>& ecg, double fs) {
  return detect_pulses(ecg, fs, 1.5, 0.2, 0.5);
}

std::vector<double> rr_intervals(const std::vector<int>& peaks, double fs) {
  if (peaks.size() < 2) throw std::invalid_argument("rr_intervals: need at least two peaks");
  std::vector<double> rr;
  rr.reserve(peaks.size() - 1);
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i)
    rr.push_back((peaks[i + 1] - peaks[i]) / fs);
  return rr;
}

QtResult qtc_bazett(const std::vector<double>& ecg, const std::vector<int>& peaks, double fs) {
  QtResult res;
  if (peaks.size() < 2) return res;
  const int n = static_cast<int>(ecg.size());
  const auto rr = rr_intervals(peaks, fs);
  const double rr_mean = vec_mean(rr);

  // Baseline estimate: the median tracks the iso-electric level.
  std::vector<double> sorted = ecg;
  std::sort(sorted.begin(), sorted.end());
  const double baseline = sorted[sorted.size() / 2];

  auto deriv = [&](int i) {
    return 0.5 * (ecg[static_cast<std::size_t>(std::min(i + 1, n - 1))] -
                  ecg[static_cast<std::size_t>(std::max(i - 1, 0))]);
  };

  for (std::size_t b = 0; b < peaks.size(); ++b) {
    const int r = peaks[b];
    // QRS onset: steepest negative slope within 120 ms before R; fall back to
    // a fixed 45 ms offset when the window is degenerate.
    const int w0 = std::max(0, r - static_cast<int>(0.12 * fs));
    int onset = r - static_cast<int>(0.045 * fs);
    double dmin = 0.0;
    for (int i = w0; i < r; ++i) {
      const double d = deriv(i);
      if (d < dmin) {
        dmin = d;
        onset = i;
      }
    }
    if (onset < 0) continue;

    // T peak inside (R + 100 ms, R + 55% of the beat), then the steepest
    // downslope after it; the tangent there intersects the baseline at T end.
    const int t0 = r + static_cast<int>(0.10 * fs);
    const int t1 = std::min(n - 1, r + static_cast<int>(std::min(0.55 * rr_mean, 0.50) * fs));
    if (t1 <= t0) continue;
    int tpk = t0;
    for (int i = t0; i <= t1; ++i)
      if (ecg[static_cast<std::size_t>(i)] > ecg[static_cast<std::size_t>(tpk)]) tpk = i;
    const int d1 = std::min(n - 1, tpk + static_cast<int>(0.12 * fs));
    int tm = -1;
    double dm = 0.0;
    for (int i = tpk; i <= d1; ++i) {
      const double d = deriv(i);
      if (d < dm) {
        dm = d;
        tm = i;
      }
    }
    if (tm < 0 || dm >= 0.0) continue;  // T wave not found
    const double v = ecg[static_cast<std::size_t>(tm)] - baseline;
    const double t_end = tm + v / (-dm);  // samples
    const double qt = (t_end - onset) / fs;
    if (qt <= 0.0 || qt > 0.7) continue;
    res.per_beat_qt.push_back(qt);
  }
  if (res.per_beat_qt.empty()) return res;
  res.ok = true;
  res.qt_s = vec_mean(res.per_beat_qt);
  res.qtc_s = res.qt_s / std::sqrt(rr_mean);
  return res;
}

PpgFeatures ppg_features(const std::vector<double>& ppg, double fs) {
  PpgFeatures f;
  const auto raw_peaks = detect_pulses(ppg, fs, 0.3, 0.3, 0.6);
  if (raw_peaks.size() < 2) return f;
  std::vector<double> raw_ipi;
  for (std::size_t i = 0; i + 1 < raw_peaks.size(); ++i)
    raw_ipi.push_back((raw_peaks[i + 1] - raw_peaks[i]) / fs);
  const double ipi_est = vec_mean(raw_ipi);

  // Keep only pulses with a measurable foot; a clipped first beat would skew
  // both the onset delay and the inter-peak intervals.
  std::vector<double> asps, dts;
  for (std::size_t i = 0; i < raw_peaks.size(); ++i) {
    const int lo = i == 0 ? std::max(0, raw_peaks[0] - static_cast<int>(1.2 * ipi_est * fs))
                          : raw_peaks[i - 1];
    const int onset = onset_before_peak(ppg, raw_peaks[i], lo);
    if (onset < 0) continue;
    f.peaks.push_back(raw_peaks[i]);
    f.onsets.push_back(onset);
    asps.push_back(ppg[static_cast<std::size_t>(raw_peaks[i])] -
                   ppg[static_cast<std::size_t>(onset)]);
    dts.push_back((raw_peaks[i] - onset) / fs);
  }
  if (f.peaks.size() < 2) return f;
  std::vector<double> ipi;
  for (std::size_t i = 0; i + 1 < f.peaks.size(); ++i)
    ipi.push_back((f.peaks[i + 1] - f.peaks[i]) / fs);
  f.ok = true;
  f.asp = vec_mean(asps);
  f.dt_s = vec_mean(dts);
  f.asp_dt = f.asp / f.dt_s;
  f.ipr_bpm = 60.0 / vec_mean(ipi);
  return f;
}

AbpFeatures abp_features(const Waveform& abp) {
  if (abp.unit != Unit::MmHg)
    throw std::invalid_argument("abp_features: waveform must be in mmHg");
  AbpFeatures f;
  const auto peaks = detect_pulses(abp.samples, abp.fs, 0.3, 0.3, 0.6);
  if (peaks.size() < 2) return f;
  std::vector<double> ipi;
  for (std::size_t i = 0; i + 1 < peaks.size(); ++i)
    ipi.push_back((peaks[i + 1] - peaks[i]) / abp.fs);
  const double ipi_mean = vec_mean(ipi);

  for (std::size_t i = 0; i < peaks.size(); ++i) {
    const int lo = i == 0 ? std::max(0, peaks[0] - static_cast<int>(1.2 * ipi_mean * abp.fs))
                          : peaks[i - 1];
    const int onset = onset_before_peak(abp.samples, peaks[i], lo);
    if (onset < 0) continue;
    f.per_beat_sbp.push_back(abp.samples[static_cast<std::size_t>(peaks[i])]);
    f.per_beat_dbp.push_back(abp.samples[static_cast<std::size_t>(onset)]);
  }
  if (f.per_beat_sbp.empty()) return f;
  f.ok = true;
  f.sbp = vec_mean(f.per_beat_sbp);
  f.dbp = vec_mean(f.per_beat_dbp);
  f.map = mean_arterial_pressure(f.sbp, f.dbp);
  return f;
}

double relative_error(double pred_value, double true_value) {
  if (true_value == 0.0)
    throw std::invalid_argument("relative_error: reference value is zero");
  return std::fabs(pred_value - true_value) / std::fabs(true_value);
}

std::vector<FeatureMeasurement> extract_features(const std::vector<double>& samples, Kind kind,
                                                 double fs, Unit unit) {
  std::vector<FeatureMeasurement> out;
  auto push = [&](const std::string& name, const std::string& u, bool ok, double v,
                  std::vector<double> per_beat) {
    FeatureMeasurement m;
    m.name = name;
    m.unit = u;
    m.available = ok;
    m.range = normal_range(name);
    if (ok) {
      m.value = v;
      m.subgroup = classify_feature(v, m.range);
    }
    m.per_beat = std::move(per_beat);
    out.push_back(std::move(m));
  };

  if (kind == Kind::ECG) {
    const auto peaks = detect_r_peaks(samples, fs);
    if (peaks.size() >= 2) {
      const auto rr = rr_intervals(peaks, fs);
      push("RR", "s", true, vec_mean(rr), rr);
      const auto qt = qtc_bazett(samples, peaks, fs);
      push("QTc", "s", qt.ok, qt.qtc_s, qt.per_beat_qt);
    } else {
      push("RR", "s", false, 0.0, {});
      push("QTc", "s", false, 0.0, {});
    }
  } else if (kind == Kind::PPG) {
    const auto pf = ppg_features(samples, fs);
    push("AspDT", "au/s", pf.ok, pf.asp_dt, {});
    push("IPR", "BPM", pf.ok, pf.ipr_bpm, {});
  } else {
    Waveform w;
    w.kind = Kind::ABP;
    w.unit = unit;
    w.fs = fs;
    w.samples = samples;
    const auto af = abp_features(w);
    push("SBP", "mmHg", af.ok, af.sbp, af.per_beat_sbp);
    push("DBP", "mmHg", af.ok, af.dbp, af.per_beat_dbp);
  }
  return out;
}

}  // namespace vsc
