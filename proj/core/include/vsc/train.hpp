#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsc/approx.hpp"
#include "vsc/config.hpp"
#include "vsc/refine.hpp"
#include "vsc/synth.hpp"

namespace vsc {

struct RunConfig {
  std::string stage = "apx";  // apx | ref-pretrain | ref-finetune
  std::uint64_t seed = 1;
  int batch_size = 128;
  double lr = 1e-3;
  int scheduler_patience = 3;
  int early_stop_patience = 5;
  int max_steps = 5000;
  int val_interval = 50;   // optimizer steps between validation points
  int val_max_samples = 192;
  double lr_factor = 0.5;
  double min_lr = 1e-6;
  double grad_clip = 1.0;
  bool use_wcl = true;  // include WCL terms in the finetune objective
  bool use_pi = true;   // use demographics when the dataset provides them
  bool require_pretrain = true;

  ApproxConfig apx;
  RefineConfig ref;

  static RunConfig full_scale();  // batch 2048, 30k steps
  static RunConfig desk();   // batch 32, small models

  static RunConfig from_config(const KvConfig& cfg);
  void write_config(const std::string& path) const;
};

struct EvalPoint {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainHistory {
  std::vector<EvalPoint> points;
  int best_step = -1;
  double best_val = 0.0;
  std::string stop_reason;

  void write_csv(const std::string& path) const;
};

// Validation-driven learning-rate plateau and early-stop logic, factored out
// so the counters can be unit tested without a training run.
class PlateauController {
 public:
  PlateauController(int scheduler_patience, int early_stop_patience, double factor, double min_lr,
                    double lr0)
      : sched_patience_(scheduler_patience),
        stop_patience_(early_stop_patience),
        factor_(factor),
        min_lr_(min_lr),
        lr_(lr0) {}

  struct Decision {
    bool improved = false;
    bool reduced_lr = false;
    bool stop = false;
  };

  Decision observe(double val_loss);
  double lr() const { return lr_; }
  double best() const { return best_; }

 private:
  int sched_patience_, stop_patience_;
  double factor_, min_lr_, lr_;
  double best_ = 1e300;
  int sched_stall_ = 0, stop_stall_ = 0;
};

struct TrainOutput {
  TrainHistory history;
  std::string checkpoint_path;  // best-validation parameters
};

// Multi-directional approximation training; `direction` restricts the sampler
// to one ordered pair (the uni-directional ablation path).
TrainOutput train_apx(const RunConfig& cfg, const Dataset& ds, const std::string& out_dir,
                      ApproxNet& net,
                      std::optional<std::pair<Kind, Kind>> direction = std::nullopt);

enum class RefStage { Pretrain, Finetune };

// Contrastive pretraining (WCL only, on the apx train/val splits) or
// calibration-based finetuning (full objective on the finetune splits,
// initialized from a pretraining checkpoint).
TrainOutput train_ref(const RunConfig& cfg, const Dataset& ds, const std::string& out_dir,
                      RefineNet& net, RefStage stage,
                      const std::string& init_checkpoint = "");

// The six ordered conversion directions.
std::vector<std::pair<Kind, Kind>> all_directions();

// Batch assembly shared by training and evaluation: locally normalized (and
// optionally zero-centered) source/target tensors plus the target selector.
struct ApxBatch {
  Tensor x, d, y;
};
ApxBatch make_apx_batch(const Dataset& ds, const std::vector<DirectedSample>& samples);

}  // namespace vsc
