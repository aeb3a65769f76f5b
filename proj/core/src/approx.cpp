#include "vsc/approx.hpp"

#include <cmath>
#include <stdexcept>

namespace vsc {

ApproxConfig ApproxConfig::full_scale() { return ApproxConfig{}; }

ApproxConfig ApproxConfig::desk() {
  ApproxConfig c;
  c.base_channels = 16;
  c.embed_channels = 64;
  c.heads = 8;  // embed / 8
  c.style_dim = 64;
  return c;
}

Tensor one_hot_targets(const std::vector<Kind>& targets) {
  const int n = static_cast<int>(targets.size());
  std::vector<double> v(static_cast<std::size_t>(n) * 3, 0.0);
  for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i) * 3 + kind_index(targets[i])] = 1.0;
  return Tensor::from({n, 3}, std::move(v));
}

namespace {

void check_one_hot(const Tensor& d) {
  if (d.ndim() != 2 || d.dim(1) != 3)
    throw std::invalid_argument("style selector must be (N,3)");
  const auto& v = d.data();
  for (int i = 0; i < d.dim(0); ++i) {
    int ones = 0;
    for (int j = 0; j < 3; ++j) {
      const double x = v[static_cast<std::size_t>(i) * 3 + j];
      if (x == 1.0)
        ++ones;
      else if (x != 0.0)
        throw std::invalid_argument("style selector must be one-hot");
    }
    if (ones != 1) throw std::invalid_argument("style selector must be one-hot");
  }
}

}  // namespace

ApproxNet::ApproxNet(const ApproxConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.embed_channels % cfg.heads != 0)
    throw std::invalid_argument("approx: embed channels must be divisible by heads");
  const int C = cfg.base_channels;
  const int E = cfg.embed_channels;
  auto& ps = params_;

  style_trunk_ = LinearLayer::make(ps, "apx.style.trunk", 3, cfg.style_dim, rng);

  stem_ = Conv1dLayer::make(ps, "apx.stem", 1, C, 3, 1, 1, rng);
  enc1_ = {Conv1dLayer::make(ps, "apx.enc1.c1", C, C, 3, 1, 1, rng),
           Conv1dLayer::make(ps, "apx.enc1.c2", C, C, 3, 1, 1, rng)};
  down1_ = Conv1dLayer::make(ps, "apx.down1", C, C, 2, 2, 0, rng);
  enc2_ = {Conv1dLayer::make(ps, "apx.enc2.c1", 2 * C, 2 * C, 3, 1, 1, rng),
           Conv1dLayer::make(ps, "apx.enc2.c2", 2 * C, 2 * C, 3, 1, 1, rng)};
  down2_ = Conv1dLayer::make(ps, "apx.down2", 2 * C, 2 * C, 2, 2, 0, rng);
  enc3_ = {Conv1dLayer::make(ps, "apx.enc3.c1", 4 * C, 4 * C, 3, 1, 1, rng),
           Conv1dLayer::make(ps, "apx.enc3.c2", 4 * C, 4 * C, 3, 1, 1, rng)};

  patch_embed_ = Conv1dLayer::make(ps, "apx.patch_embed", 4 * C, E, cfg.patch, cfg.patch, 0, rng);
  for (int i = 0; i < cfg.attn_blocks; ++i) {
    const std::string base = "apx.attn" + std::to_string(i);
    AttnBlock b;
    b.style_attn = LinearLayer::make(ps, base + ".style_attn", cfg.style_dim, 2 * E, rng, true);
    b.style_mlp = LinearLayer::make(ps, base + ".style_mlp", cfg.style_dim, 2 * E, rng, true);
    b.qkv = Conv1dLayer::make(ps, base + ".qkv", E, 3 * E, 1, 1, 0, rng);
    b.proj = Conv1dLayer::make(ps, base + ".proj", E, E, 1, 1, 0, rng);
    b.mlp1 = Conv1dLayer::make(ps, base + ".mlp1", E, cfg.mlp_ratio * E, 1, 1, 0, rng);
    b.mlp2 = Conv1dLayer::make(ps, base + ".mlp2", cfg.mlp_ratio * E, E, 1, 1, 0, rng);
    b.rel_bias = ps.create(base + ".rel_bias", {cfg.heads, cfg.window, cfg.window}, 0.0, rng);
    b.shift = (i % 2 == 1) ? cfg.window / 2 : 0;  // alternate plain / shifted windows
    attn_.push_back(b);
  }
  patch_expand_ = ConvT1dLayer::make(ps, "apx.patch_expand", E, 4 * C, cfg.patch, cfg.patch, 0, rng);

  auto make_up = [&](const std::string& base, int cin, int cout, int skip_ch) {
    UpBlock u;
    u.style1 = LinearLayer::make(ps, base + ".style1", cfg.style_dim, 2 * cin, rng, true);
    u.style2 = LinearLayer::make(ps, base + ".style2", cfg.style_dim, 2 * cin, rng, true);
    u.c1 = Conv1dLayer::make(ps, base + ".c1", cin, cin, 3, 1, 1, rng);
    u.c2 = Conv1dLayer::make(ps, base + ".c2", cin, cin, 3, 1, 1, rng);
    u.up = ConvT1dLayer::make(ps, base + ".up", cin, cin, 2, 2, 0, rng);
    u.fuse = Conv1dLayer::make(ps, base + ".fuse", 2 * cin + skip_ch, cout, 1, 1, 0, rng);
    return u;
  };
  up1_ = make_up("apx.up1", 4 * C, 2 * C, 2 * C);
  up2_ = make_up("apx.up2", 2 * C, C, C);
  head_ = Conv1dLayer::make(ps, "apx.head", C, 1, 1, 1, 0, rng);

  // Site registry mirrors forward order: attn blocks then decoder blocks.
  for (auto& b : attn_) {
    style_heads_.push_back(&b.style_attn);
    style_channels_.push_back(E);
    style_heads_.push_back(&b.style_mlp);
    style_channels_.push_back(E);
  }
  style_heads_.push_back(&up1_.style1);
  style_channels_.push_back(4 * C);
  style_heads_.push_back(&up1_.style2);
  style_channels_.push_back(4 * C);
  style_heads_.push_back(&up2_.style1);
  style_channels_.push_back(2 * C);
  style_heads_.push_back(&up2_.style2);
  style_channels_.push_back(2 * C);
}

std::pair<Tensor, Tensor> ApproxNet::split_style(const LinearLayer& head, const Tensor& s,
                                                 int channels) const {
  Tensor gb = head(s);  // (N, 2C)
  Tensor g = slice(gb, 1, 0, channels);
  Tensor b = slice(gb, 1, channels, channels);
  return {g, b};
}

std::pair<Tensor, Tensor> ApproxNet::style_for_site(int site, const Tensor& d) const {
  check_one_hot(d);
  if (site < 0 || site >= static_cast<int>(style_heads_.size()))
    throw std::invalid_argument("style_for_site: bad site index");
  Tensor s = style_trunk_(d);
  return split_style(*style_heads_[static_cast<std::size_t>(site)], s,
                     style_channels_[static_cast<std::size_t>(site)]);
}

Tensor ApproxNet::res_forward(const ResBlock& b, const Tensor& x) const {
  Tensor t = leaky_relu(instance_norm_lastdim(x, cfg_.eps));
  t = b.c1(t);
  t = leaky_relu(instance_norm_lastdim(t, cfg_.eps));
  t = b.c2(t);
  return add(x, t);
}

Tensor ApproxNet::adain_res_forward(const UpBlock& b, const Tensor& x, const Tensor& s) const {
  const int C = x.dim(1);
  auto [g1, b1] = split_style(b.style1, s, C);
  Tensor t = leaky_relu(adain(x, g1, b1, cfg_.eps));
  t = b.c1(t);
  auto [g2, b2] = split_style(b.style2, s, C);
  t = leaky_relu(adain(t, g2, b2, cfg_.eps));
  t = b.c2(t);
  return add(x, t);
}

Tensor ApproxNet::window_mask(int tokens, int shift) const {
  const int w = cfg_.window;
  const int n_windows = tokens / w;
  std::vector<double> m(static_cast<std::size_t>(n_windows) * w * w, 0.0);
  if (shift > 0) {
    // After rolling by -shift only the final window mixes the two wrapped
    // segments; attention across the seam is masked out.
    const int k = n_windows - 1;
    for (int i = 0; i < w; ++i)
      for (int j = 0; j < w; ++j) {
        const bool ia = i < w - shift, ja = j < w - shift;
        if (ia != ja) m[(static_cast<std::size_t>(k) * w + i) * w + j] = -1e9;
      }
  }
  return Tensor::from({n_windows, w, w}, std::move(m));
}

Tensor ApproxNet::attn_forward(const AttnBlock& b, const Tensor& z, const Tensor& s, bool train,
                               Rng& rng) const {
  const int N = z.dim(0), E = z.dim(1), T = z.dim(2);
  const int w = cfg_.window, H = cfg_.heads, hd = E / H;
  const int n_windows = T / w;

  auto [ga, ba] = split_style(b.style_attn, s, E);
  Tensor zn = adain(z, ga, ba, cfg_.eps);
  if (b.shift > 0) zn = roll_lastdim(zn, -b.shift);

  Tensor qkv = b.qkv(zn);  // (N,3E,T)
  Tensor q = heads_split_windows(slice(qkv, 1, 0, E), H, w);
  Tensor k = heads_split_windows(slice(qkv, 1, E, E), H, w);
  Tensor v = heads_split_windows(slice(qkv, 1, 2 * E, E), H, w);

  Tensor scores = mul_scalar(bmm(q, transpose12(k)), 1.0 / std::sqrt(static_cast<double>(hd)));
  scores = add_window_bias(scores, window_mask(T, b.shift), b.rel_bias, n_windows, H);
  Tensor attn = softmax_lastdim(scores);
  attn = dropout(attn, cfg_.dropout, train, rng);
  Tensor out = heads_merge_windows(bmm(attn, v), N, H, w);
  if (b.shift > 0) out = roll_lastdim(out, b.shift);
  out = b.proj(out);
  Tensor z1 = add(z, out);

  auto [gm, bm] = split_style(b.style_mlp, s, E);
  Tensor m = adain(z1, gm, bm, cfg_.eps);
  m = b.mlp2(gelu(b.mlp1(m)));
  m = dropout(m, cfg_.dropout, train, rng);
  return add(z1, m);
}

Tensor ApproxNet::forward(const Tensor& x, const Tensor& d, bool train, Rng& rng) {
  if (x.ndim() != 3 || x.dim(1) != 1)
    throw std::invalid_argument("approx: input must be (N,1,L)");
  const int L = x.dim(2);
  if (L % cfg_.length_multiple() != 0)
    throw std::invalid_argument("approx: input length must be a multiple of " +
                                std::to_string(cfg_.length_multiple()));
  check_one_hot(d);
  if (d.dim(0) != x.dim(0)) throw std::invalid_argument("approx: batch size mismatch x vs d");

  Tensor s = style_trunk_(d);  // (N, style_dim)

  // Encoder.
  Tensor h0 = leaky_relu(instance_norm_lastdim(stem_(x), cfg_.eps));
  h0 = res_forward(enc1_, h0);                                    // (N, C, L)
  Tensor d1 = concat({maxpool1d(h0, 2, 2), down1_(h0)}, 1);       // (N, 2C, L/2)
  Tensor h1 = res_forward(enc2_, d1);
  Tensor d2 = concat({maxpool1d(h1, 2, 2), down2_(h1)}, 1);       // (N, 4C, L/4)
  Tensor h2 = res_forward(enc3_, d2);

  // Bottleneck tokens with style injection.
  Tensor z = patch_embed_(h2);  // (N, E, T)
  for (const auto& blk : attn_) z = attn_forward(blk, z, s, train, rng);
  z = patch_expand_(z);  // (N, 4C, L/4)

  // Decoder: AdaIN residual block, then parallel interpolation + transposed
  // conv upsampling fused with the encoder skip.
  Tensor u = adain_res_forward(up1_, z, s);
  u = up1_.fuse(concat({upsample_linear2(u), up1_.up(u), h1}, 1));  // (N, 2C, L/2)
  u = adain_res_forward(up2_, u, s);
  u = up2_.fuse(concat({upsample_linear2(u), up2_.up(u), h0}, 1));  // (N, C, L)

  return head_(u);  // (N, 1, L)
}

Tensor apx_loss(const Tensor& pred, const Tensor& target) { return mse_loss(pred, target); }

}  // namespace vsc
