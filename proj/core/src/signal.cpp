#include "vsc/signal.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace vsc {

const char* kind_name(Kind k) {
  switch (k) {
    case Kind::ECG: return "ECG";
    case Kind::PPG: return "PPG";
    default: return "ABP";
  }
}

Kind kind_from_name(const std::string& s) {
  if (s == "ECG" || s == "ecg") return Kind::ECG;
  if (s == "PPG" || s == "ppg") return Kind::PPG;
  if (s == "ABP" || s == "abp") return Kind::ABP;
  throw std::invalid_argument("unknown waveform kind: " + s);
}

int kind_index(Kind k) { return static_cast<int>(k); }

Kind kind_from_index(int i) {
  if (i < 0 || i > 2) throw std::invalid_argument("kind index out of range");
  return static_cast<Kind>(i);
}

double mean_arterial_pressure(double sbp, double dbp) { return (sbp + 2.0 * dbp) / 3.0; }

BPEstimate make_bp_estimate(double sbp_norm, double dbp_norm, const GlobalBounds& b) {
  BPEstimate e;
  e.sbp_norm = sbp_norm;
  e.dbp_norm = dbp_norm;
  e.sbp_mmhg = b.to_mmhg(sbp_norm);
  e.dbp_mmhg = b.to_mmhg(dbp_norm);
  e.map_mmhg = mean_arterial_pressure(e.sbp_mmhg, e.dbp_mmhg);
  return e;
}

Waveform local_minmax(const Waveform& w) {
  if (w.samples.empty()) throw std::invalid_argument("local_minmax: empty waveform");
  auto [mn_it, mx_it] = std::minmax_element(w.samples.begin(), w.samples.end());
  const double mn = *mn_it, mx = *mx_it;
  Waveform out = w;
  out.unit = Unit::LocalNorm;
  if (mx - mn == 0.0) {
    std::fill(out.samples.begin(), out.samples.end(), 0.0);
    return out;
  }
  const double inv = 1.0 / (mx - mn);
  for (auto& v : out.samples) v = (v - mn) * inv;
  return out;
}

Waveform global_minmax(const Waveform& w, const GlobalBounds& b, double slack_mmhg,
                       ClampStats* stats) {
  if (w.unit != Unit::MmHg)
    throw std::invalid_argument("global_minmax: input must be in mmHg");
  if (b.min_mmhg >= b.max_mmhg) throw std::invalid_argument("global_minmax: invalid bounds");
  Waveform out = w;
  out.unit = Unit::GlobalNorm;
  for (auto& v : out.samples) {
    if (stats) {
      const double over = std::max(b.min_mmhg - v, v - b.max_mmhg);
      if (over > slack_mmhg) {
        ++stats->clamped;
        stats->worst_violation_mmhg = std::max(stats->worst_violation_mmhg, over);
      }
    }
    v = b.to_norm(v);
    v = std::clamp(v, 0.0, 1.0);
  }
  return out;
}

Waveform to_mmhg(const Waveform& w, const GlobalBounds& b) {
  if (w.unit != Unit::GlobalNorm)
    throw std::invalid_argument("to_mmhg: input must be globally normalized");
  Waveform out = w;
  out.unit = Unit::MmHg;
  for (auto& v : out.samples) v = b.to_mmhg(v);
  return out;
}

Waveform zero_center(const Waveform& w) {
  if (w.unit != Unit::LocalNorm)
    throw std::invalid_argument("zero_center: only applies to locally normalized waveforms");
  if (w.kind == Kind::ABP)
    throw std::invalid_argument("zero_center: not applicable to ABP");
  Waveform out = w;
  double mean = 0.0;
  for (double v : out.samples) mean += v;
  mean /= static_cast<double>(out.samples.size());
  for (auto& v : out.samples) v -= mean;
  return out;
}

Waveform zero_pad(const Waveform& w, int target_len) {
  const int L = static_cast<int>(w.samples.size());
  if (target_len < L)
    throw std::invalid_argument("zero_pad: target length shorter than waveform");
  const int deficit = target_len - L;
  const int left = deficit / 2;
  Waveform out = w;
  out.samples.assign(static_cast<std::size_t>(target_len), 0.0);
  std::copy(w.samples.begin(), w.samples.end(), out.samples.begin() + left);
  return out;
}

Waveform rescale_abp(const Waveform& y_apx, const BPEstimate& bp, const GlobalBounds& b) {
  if (y_apx.unit != Unit::LocalNorm)
    throw std::invalid_argument("rescale_abp: approximation must be locally normalized");
  if (bp.sbp_norm <= bp.dbp_norm)
    throw std::invalid_argument("rescale_abp: predicted SBP must exceed DBP");
  Waveform out = y_apx;
  out.kind = Kind::ABP;
  out.unit = Unit::MmHg;
  const double span = bp.sbp_norm - bp.dbp_norm;
  for (auto& v : out.samples) v = b.to_mmhg(v * span + bp.dbp_norm);
  return out;
}

}  // namespace vsc
