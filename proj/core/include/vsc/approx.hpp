#pragma once

#include <memory>
#include <vector>

#include "vsc/nn.hpp"
#include "vsc/signal.hpp"

namespace vsc {

// Multi-directional approximation model: a shallow 1-D U-Net whose bottleneck
// is a stack of windowed self-attention blocks. The target waveform type
// enters as a one-hot selector that is turned into per-site (gamma, beta)
// style vectors applied through adaptive instance normalization in the
// bottleneck and decoder. One parameter set serves all conversion directions.

struct ApproxConfig {
  int base_channels = 64;   // stem / first stage width
  int embed_channels = 256; // bottleneck token width
  int window = 4;           // attention window (tokens)
  int heads = 32;           // embed_channels / 8 keeps head width fixed
  int style_dim = 64;       // shared style embedding width
  int patch = 4;            // patch length for token embedding
  int attn_blocks = 2;      // windowed attention blocks (alternating shift)
  int mlp_ratio = 4;
  double dropout = 0.0;
  double eps = 1e-5;

  static ApproxConfig full_scale();  // published-scale defaults
  static ApproxConfig desk();        // small config used by the synthetic gates

  // Two pooled stages then patch tokens: L must be a multiple of this and the
  // token count a multiple of the window.
  int length_multiple() const { return 4 * patch * window; }
};

Tensor one_hot_targets(const std::vector<Kind>& targets);

class ApproxNet {
 public:
  ApproxNet(const ApproxConfig& cfg, Rng& rng);

  // x (N,1,L) locally normalized source; d (N,3) one-hot target selector.
  Tensor forward(const Tensor& x, const Tensor& d, bool train, Rng& rng);

  // (gamma, beta) produced by one AdaIN site for a selector batch; used by
  // tests and probes.
  std::pair<Tensor, Tensor> style_for_site(int site, const Tensor& d) const;
  int style_site_count() const { return static_cast<int>(style_heads_.size()); }

  ParamStore& params() { return params_; }
  const ApproxConfig& config() const { return cfg_; }

 private:
  struct ResBlock {
    Conv1dLayer c1, c2;
  };
  struct AttnBlock {
    LinearLayer style_attn, style_mlp;  // zero-init style heads
    Conv1dLayer qkv, proj, mlp1, mlp2;
    Tensor rel_bias;  // (heads, w, w)
    int shift = 0;
  };
  struct UpBlock {
    LinearLayer style1, style2;  // zero-init style heads
    Conv1dLayer c1, c2;          // AdaIN residual convs
    ConvT1dLayer up;
    Conv1dLayer fuse;            // 1x1 over [interp, convT, skip]
  };

  Tensor res_forward(const ResBlock& b, const Tensor& x) const;
  Tensor adain_res_forward(const UpBlock& b, const Tensor& x, const Tensor& s) const;
  Tensor attn_forward(const AttnBlock& b, const Tensor& z, const Tensor& s, bool train,
                      Rng& rng) const;
  std::pair<Tensor, Tensor> split_style(const LinearLayer& head, const Tensor& s,
                                        int channels) const;
  Tensor window_mask(int tokens, int shift) const;

  ApproxConfig cfg_;
  ParamStore params_;

  LinearLayer style_trunk_;  // one-hot -> shared style embedding
  Conv1dLayer stem_;
  ResBlock enc1_;
  Conv1dLayer down1_;
  ResBlock enc2_;
  Conv1dLayer down2_;
  ResBlock enc3_;
  Conv1dLayer patch_embed_;
  std::vector<AttnBlock> attn_;
  ConvT1dLayer patch_expand_;
  UpBlock up1_, up2_;
  Conv1dLayer head_;

  std::vector<const LinearLayer*> style_heads_;  // site index -> head
  std::vector<int> style_channels_;
};

// Mean squared error on the normalized scale (the training objective).
Tensor apx_loss(const Tensor& pred, const Tensor& target);

}  // namespace vsc
