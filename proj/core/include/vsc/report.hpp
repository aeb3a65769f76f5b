#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsc/approx.hpp"
#include "vsc/refine.hpp"
#include "vsc/standards.hpp"
#include "vsc/synth.hpp"

namespace vsc {

// Per-direction evaluation on the calibration-free test split, plus feature
// fidelity and (for ABP targets) the AAMI / BHS clinical standards.

struct FeatureAgg {
  std::string name;
  double rel_normal = 0.0;    // mean relative error, normal subgroup
  double rel_abnormal = 0.0;  // mean relative error, abnormal subgroup
  int n_normal = 0;
  int n_abnormal = 0;
};

struct DirectionEval {
  Kind src = Kind::ECG, dst = Kind::PPG;
  int n_segments = 0;
  double mae_value = 0.0;  // normalized units for ECG/PPG targets, mmHg for ABP
  double pc_value = 0.0;
  std::vector<FeatureAgg> features;
  bool has_bp = false;  // ABP target: AAMI/BHS populated
  AAMIResult aami_result;
  BHSResult bhs_result;
  int invalid_bp = 0;  // segments whose predicted SBP <= DBP
};

struct EvalReport {
  std::uint64_t seed = 0;
  std::string dataset_dir, run_dir;
  std::vector<DirectionEval> directions;
};

struct EvalOptions {
  std::vector<std::pair<Kind, Kind>> directions;  // empty = all six
  bool use_pi = true;
  int batch = 16;
};

EvalReport evaluate_directions(const Dataset& ds, ApproxNet& apx, RefineNet* refine,
                               const EvalOptions& opts);

// Identity (source as prediction) and train-set mean-waveform baselines, in
// the same normalized units the model is scored in.
struct DirectionBaselines {
  double identity_mae = 0.0;
  double mean_wave_mae = 0.0;
};
DirectionBaselines compute_baselines(const Dataset& ds, Kind src, Kind dst);

void write_report(const std::string& dir, const EvalReport& report);
EvalReport load_report(const std::string& json_path);

// Mean +/- SD across per-seed reports, written as CSV + text.
void write_aggregate(const std::string& dir, const std::vector<EvalReport>& reports);

// Converted waveforms as CSV (one row per segment; refined to mmHg when a
// refinement model is supplied and the target is ABP).
void convert_to_csv(const Dataset& ds, ApproxNet& apx, RefineNet* refine, Kind src, Kind dst,
                    const std::string& out_file, bool use_pi, int limit);

}  // namespace vsc
