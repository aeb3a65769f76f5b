#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsc/nn.hpp"
#include "vsc/signal.hpp"
#include "vsc/synth.hpp"

namespace vsc {

// Refinement model: a shared patch-mixer waveform encoder with per-source
// heads, a small trainable text encoder for linearized demographics, and a BP
// regressor predicting SBP/DBP on the globally normalized scale. Trained with
// an MAE term plus weighted contrastive learning over both embedding spaces.

// "Age/Gender/Height/Weight/BMI" with "/" as the delimiter; missing values
// render as empty fields.
std::string linearize_pi(const PatientProfile& p);

struct PiFields {
  std::optional<int> age;
  std::optional<char> sex;
  std::optional<double> height_cm;
  std::optional<double> weight_kg;
  std::optional<double> bmi;
};
PiFields parse_pi(const std::string& text);

std::vector<int> tokenize_pi(const std::string& text);

struct WCLConfig {
  double lambda_mae = 0.001;
  double lambda1 = 0.01;  // waveform-embedding WCL weight
  double lambda2 = 0.01;  // patient-embedding WCL weight
  double tau_bp = 4.0;
  double thr_bp = 0.0235;
  double tau_age = 4.0;
  double thr_age = 0.0235;
  double tau_gender = 1.0;
  double thr_gender = 1.0;
  double tau_w = 4.0;  // softmax temperature
};

enum class WclKind { BP, Age, Gender };

struct WclLabels {
  std::vector<double> sbp, dbp;  // mmHg
  std::vector<double> age;
  std::vector<char> gender;
};

// Pairwise label-similarity weights: symmetric, entries
// in [0,1], zero diagonal, entries below the retention threshold zeroed.
std::vector<double> wcl_weights(const WclLabels& labels, WclKind kind, const WCLConfig& cfg);

// Age * gender product used for the patient-information embedding term.
std::vector<double> wcl_pi_weights(const WclLabels& labels, const WCLConfig& cfg);

// Weighted InfoNCE over cosine similarities. `weights` is a BxB row-major
// matrix; rows are normalized internally, anchors with no positive contribute
// nothing. Returns a non-negative scalar (constant zero if no anchor has a
// positive).
Tensor wcl_loss(const Tensor& embeddings, const std::vector<double>& weights, double tau_w);

struct RefineConfig {
  int input_len = 512;
  int patch_len = 4;
  int hidden = 64;        // mixer width
  int layers = 15;        // mixer depth
  int expansion = 5;      // feature-mix MLP ratio
  int embed_dim = 512;    // e_W / e_PI dimension
  int pi_embed = 32;      // token embedding width
  int pi_hidden = 64;
  int reg_hidden = 128;
  double dropout = 0.1;
  WCLConfig wcl;

  static RefineConfig full_scale();
  static RefineConfig desk();
};

class RefineNet {
 public:
  RefineNet(const RefineConfig& cfg, Rng& rng);

  // x (N,1,L) locally normalized source waveform; kind must be ECG or PPG.
  Tensor encode_waveform(const Tensor& x, Kind kind, bool train, Rng& rng);
  Tensor encode_pi(const std::vector<std::string>& texts, bool train, Rng& rng);
  // Learned stand-in embedding when demographics are unavailable.
  Tensor null_pi(int batch);

  // (N,2): column 0 SBP, column 1 DBP, both on the global-norm scale.
  Tensor predict_bp(const Tensor& e_w, const Tensor& e_pi, Kind kind);

  ParamStore& params() { return params_; }
  const RefineConfig& config() const { return cfg_; }

 private:
  struct MixerLayer {
    LinearLayer token_mix;
    LinearLayer feat1, feat2;
  };
  struct Head {
    LinearLayer l1, l2;
  };

  Tensor head_forward(const Head& h, const Tensor& x, bool train, Rng& rng);

  RefineConfig cfg_;
  ParamStore params_;

  LinearLayer patch_embed_;
  std::vector<MixerLayer> mixer_;
  Head wave_head_ecg_, wave_head_ppg_;

  Tensor pi_table_;  // token embeddings
  Head pi_head_;
  Tensor pi_null_;

  LinearLayer reg_trunk_;
  Head reg_head_ecg_, reg_head_ppg_;
};

// One refinement training batch: synchronized ECG and PPG views of the same
// records with shared BP targets and contrastive labels.
struct RefBatchInputs {
  Tensor x_ecg, x_ppg;          // (N,1,L) prepared sources
  std::vector<std::string> pi;  // linearized demographics
  WclLabels labels;
  Tensor sbp_norm, dbp_norm;    // (N,1) targets on the global-norm scale
};

struct RefLossOptions {
  bool include_mae = true;  // false during contrastive pretraining
  bool use_wcl = true;
  bool with_pi = true;
  bool train = false;
};

// lambda_mae * (SBP/DBP MAE over both branches) + lambda1 * (waveform WCL per
// branch) + lambda2 * (patient-info WCL); terms drop out per options.
Tensor ref_loss(RefineNet& net, const RefBatchInputs& batch, const RefLossOptions& opts,
                Rng& rng);

}  // namespace vsc
