#pragma once

#include <string>
#include <vector>

namespace vsc {

enum class Kind { ECG, PPG, ABP };
enum class Unit { Raw, LocalNorm, GlobalNorm, MmHg };

const char* kind_name(Kind k);
Kind kind_from_name(const std::string& s);
int kind_index(Kind k);
Kind kind_from_index(int i);

struct Waveform {
  Kind kind = Kind::ECG;
  Unit unit = Unit::Raw;
  double fs = 125.0;
  std::vector<double> samples;

  std::size_t size() const { return samples.size(); }
};

// Fixed mmHg bounds (min DBP, max SBP of the training split) used for global
// normalization of ABP and BP values.
struct GlobalBounds {
  double min_mmhg = 0.0;
  double max_mmhg = 1.0;

  double to_norm(double mmhg) const { return (mmhg - min_mmhg) / (max_mmhg - min_mmhg); }
  double to_mmhg(double norm) const { return norm * (max_mmhg - min_mmhg) + min_mmhg; }
};

struct BPEstimate {
  double sbp_norm = 0.0;
  double dbp_norm = 0.0;
  double sbp_mmhg = 0.0;
  double dbp_mmhg = 0.0;
  double map_mmhg = 0.0;
};

double mean_arterial_pressure(double sbp, double dbp);
BPEstimate make_bp_estimate(double sbp_norm, double dbp_norm, const GlobalBounds& b);

// (w - min) / (max - min); a constant input maps to all zeros.
Waveform local_minmax(const Waveform& w);

struct ClampStats {
  int clamped = 0;
  double worst_violation_mmhg = 0.0;
};

// mmHg -> [0,1] using fixed bounds. Values outside the bounds by more than
// `slack_mmhg` are counted in `stats` (if given) and clamped to [0,1].
Waveform global_minmax(const Waveform& w, const GlobalBounds& b, double slack_mmhg = 1.0,
                       ClampStats* stats = nullptr);
Waveform to_mmhg(const Waveform& w, const GlobalBounds& b);

// Subtracts the temporal mean. Only valid on locally normalized ECG/PPG;
// rejects globally normalized or mmHg input.
Waveform zero_center(const Waveform& w);

// Symmetric zero padding to target_len; an odd deficit pads floor(left)/ceil(right).
Waveform zero_pad(const Waveform& w, int target_len);

// Maps a local-norm ABP approximation onto [DBP, SBP] on the global-norm
// scale, then converts to mmHg. Throws if the estimate has sbp <= dbp.
Waveform rescale_abp(const Waveform& y_apx, const BPEstimate& bp, const GlobalBounds& b);

}  // namespace vsc
