#pragma once

#include <string>

#include "vsc/train.hpp"

namespace vsc {

// Ablation studies at configurable scale. Both emit per-cell mean +/- SD
// tables over several seeds as CSV and text.

struct AblateConfig {
  RunConfig run;            // model + schedule used for every cell
  int seeds = 3;
  std::uint64_t seed0 = 1;  // seeds used: seed0, seed0+1, ...
};

// One multi-directional model vs six uni-directional models per seed, MAE on
// the calibration-free test split in normalized units (6 directions x
// {uni, multi}).
void ablate_multi_vs_uni(const Dataset& ds, const AblateConfig& cfg, const std::string& out_dir);

// {WCL on/off} x {PI on/off} refinement grid; end-to-end mmHg ABP MAE on the
// finetune-test segments for both ECG and PPG sources. PI rows are omitted
// when the dataset manifest has no demographics.
void ablate_wcl_pi(const Dataset& ds, const AblateConfig& cfg, const std::string& out_dir);

}  // namespace vsc
