#pragma once

#include <string>
#include <vector>

#include "vsc/signal.hpp"

namespace vsc {

// Morphology-based feature extraction used by the fidelity evaluation. All
// extractors are deterministic, side-effect free, and validated against the
// generator's ground-truth annotations.

struct FeatureRange {
  double lo = 0.0, hi = 0.0;
};

enum class Subgroup { Normal, Abnormal };

// Closed-interval membership: boundary values are normal.
Subgroup classify_feature(double value, const FeatureRange& r);

// Normal physiological ranges per feature name (QTc, RR, AspDT, IPR, SBP, DBP).
FeatureRange normal_range(const std::string& feature);

struct FeatureMeasurement {
  std::string name;
  std::string unit;
  bool available = false;
  double value = 0.0;
  FeatureRange range;
  Subgroup subgroup = Subgroup::Normal;
  std::vector<double> per_beat;
};

// Amplitude-threshold R-peak detector with a refractory window. Returns
// ascending sample indices; fewer than two peaks means "unavailable".
std::vector<int> detect_r_peaks(const std::vector<double>& ecg, double fs);

// Beat-to-beat intervals in seconds; throws if fewer than two peaks.
std::vector<double> rr_intervals(const std::vector<int>& peaks, double fs);

struct QtResult {
  bool ok = false;
  double qt_s = 0.0;
  double qtc_s = 0.0;
  std::vector<double> per_beat_qt;
};

// QT from QRS onset (steepest negative slope in a 120 ms pre-R window) to the
// T-wave end (tangent method on the T downslope); QTc via Bazett.
QtResult qtc_bazett(const std::vector<double>& ecg, const std::vector<int>& peaks, double fs);

struct PpgFeatures {
  bool ok = false;
  double asp = 0.0;      // systolic amplitude above onset (normalized units)
  double dt_s = 0.0;     // onset-to-peak delay
  double asp_dt = 0.0;   // au/s
  double ipr_bpm = 0.0;  // instantaneous pulse rate
  std::vector<int> peaks, onsets;
};

PpgFeatures ppg_features(const std::vector<double>& ppg, double fs);

struct AbpFeatures {
  bool ok = false;
  double sbp = 0.0, dbp = 0.0, map = 0.0;  // mmHg
  std::vector<double> per_beat_sbp, per_beat_dbp;
};

// Per-beat max/min averaged over beats segmented at pulse onsets.
AbpFeatures abp_features(const Waveform& abp);

// |pred - true| / |true|; throws when the reference value is zero.
double relative_error(double pred_value, double true_value);

// The six fidelity features for a waveform of the given kind (two per kind).
std::vector<FeatureMeasurement> extract_features(const std::vector<double>& samples, Kind kind,
                                                 double fs, Unit unit);

}  // namespace vsc
