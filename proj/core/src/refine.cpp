#include "vsc/refine.hpp"

#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace vsc {

namespace {

// Compact numeric rendering: integers print bare, otherwise one decimal.
std::string fmt_num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  std::string s(buf);
  if (s.size() > 2 && s.compare(s.size() - 2, 2, ".0") == 0) s.erase(s.size() - 2);
  return s;
}

}  // namespace

std::string linearize_pi(const PatientProfile& p) {
  std::ostringstream os;
  if (p.age > 0) os << p.age;
  os << "/";
  os << p.sex;
  os << "/";
  if (p.height_cm) os << fmt_num(*p.height_cm);
  os << "/";
  if (p.weight_kg) os << fmt_num(*p.weight_kg);
  os << "/";
  if (p.bmi) os << fmt_num(*p.bmi);
  return os.str();
}

PiFields parse_pi(const std::string& text) {
  std::vector<std::string> fields;
  std::string cur;
  for (char c : text) {
    if (c == '/') {
      fields.push_back(cur);
      cur.clear();
    } else {
      cur.push_back(c);
    }
  }
  fields.push_back(cur);
  if (fields.size() != 5)
    throw std::invalid_argument("parse_pi: expected 4 delimiters in \"" + text + "\"");
  PiFields f;
  if (!fields[0].empty()) f.age = std::stoi(fields[0]);
  if (!fields[1].empty()) f.sex = fields[1][0];
  if (!fields[2].empty()) f.height_cm = std::stod(fields[2]);
  if (!fields[3].empty()) f.weight_kg = std::stod(fields[3]);
  if (!fields[4].empty()) f.bmi = std::stod(fields[4]);
  return f;
}

std::vector<int> tokenize_pi(const std::string& text) {
  // Vocabulary: 5 field markers, digits, '.', 'M', 'F', other.
  std::vector<int> toks;
  int field = 0;
  toks.push_back(field);
  for (char c : text) {
    if (c == '/') {
      ++field;
      if (field > 4) throw std::invalid_argument("tokenize_pi: too many delimiters");
      toks.push_back(field);
      continue;
    }
    int id;
    if (c >= '0' && c <= '9')
      id = 5 + (c - '0');
    else if (c == '.')
      id = 15;
    else if (c == 'M' || c == 'm')
      id = 16;
    else if (c == 'F' || c == 'f')
      id = 17;
    else
      id = 18;
    toks.push_back(id);
  }
  return toks;
}

std::vector<double> wcl_weights(const WclLabels& labels, WclKind kind, const WCLConfig& cfg) {
  std::size_t n = 0;
  switch (kind) {
    case WclKind::BP:
      if (labels.sbp.empty() || labels.sbp.size() != labels.dbp.size())
        throw std::invalid_argument("wcl_weights: missing SBP/DBP labels");
      n = labels.sbp.size();
      break;
    case WclKind::Age:
      if (labels.age.empty()) throw std::invalid_argument("wcl_weights: missing age labels");
      n = labels.age.size();
      break;
    case WclKind::Gender:
      if (labels.gender.empty()) throw std::invalid_argument("wcl_weights: missing gender labels");
      n = labels.gender.size();
      break;
  }
  std::vector<double> w(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;  // diagonal excluded
      double s, thr;
      switch (kind) {
        case WclKind::BP:
          s = 0.5 * (std::exp(-std::fabs(labels.sbp[i] - labels.sbp[j]) / cfg.tau_bp) +
                     std::exp(-std::fabs(labels.dbp[i] - labels.dbp[j]) / cfg.tau_bp));
          thr = cfg.thr_bp;
          break;
        case WclKind::Age:
          s = std::exp(-std::fabs(labels.age[i] - labels.age[j]) / cfg.tau_age);
          thr = cfg.thr_age;
          break;
        default:
          s = labels.gender[i] == labels.gender[j] ? 1.0 : 0.0;
          thr = cfg.thr_gender;
          break;
      }
      w[i * n + j] = s < thr ? 0.0 : s;
    }
  }
  return w;
}

std::vector<double> wcl_pi_weights(const WclLabels& labels, const WCLConfig& cfg) {
  auto wa = wcl_weights(labels, WclKind::Age, cfg);
  auto wg = wcl_weights(labels, WclKind::Gender, cfg);
  for (std::size_t i = 0; i < wa.size(); ++i) wa[i] *= wg[i];
  return wa;
}

Tensor wcl_loss(const Tensor& embeddings, const std::vector<double>& weights, double tau_w) {
  if (embeddings.ndim() != 2) throw std::invalid_argument("wcl_loss: embeddings must be (B,D)");
  const int B = embeddings.dim(0);
  if (B < 2) throw std::invalid_argument("wcl_loss: batch of at least 2 required");
  if (weights.size() != static_cast<std::size_t>(B) * B)
    throw std::invalid_argument("wcl_loss: weight matrix size mismatch");

  // Row-normalized weights; anchors without positives drop out.
  std::vector<double> wbar(weights.size(), 0.0);
  int anchors = 0;
  for (int i = 0; i < B; ++i) {
    double row = 0.0;
    for (int j = 0; j < B; ++j) row += weights[static_cast<std::size_t>(i) * B + j];
    if (row > 0.0) {
      ++anchors;
      for (int j = 0; j < B; ++j)
        wbar[static_cast<std::size_t>(i) * B + j] =
            weights[static_cast<std::size_t>(i) * B + j] / row;
    }
  }
  if (anchors == 0) return Tensor::scalar(0.0);

  Tensor norms = sqrt_t(add_scalar(sum_lastdim(square(embeddings)), 1e-24));  // (B,1)
  Tensor en = div(embeddings, norms);
  Tensor logits = mul_scalar(matmul_nt(en, en), 1.0 / tau_w);  // (B,B)

  std::vector<double> diag(static_cast<std::size_t>(B) * B, 0.0);
  for (int i = 0; i < B; ++i) diag[static_cast<std::size_t>(i) * B + i] = -1e9;
  Tensor masked = add(logits, Tensor::from({B, B}, std::move(diag)));
  Tensor lse = log_t(sum_lastdim(exp_t(masked)));  // (B,1)
  Tensor ll = sub(masked, lse);                    // log-softmax rows

  Tensor wt = Tensor::from({B, B}, std::move(wbar));
  return mul_scalar(sum_all(mul(ll, wt)), -1.0 / anchors);
}

RefineConfig RefineConfig::full_scale() { return RefineConfig{}; }

RefineConfig RefineConfig::desk() {
  RefineConfig c;
  c.hidden = 32;
  c.layers = 4;
  c.expansion = 2;
  return c;
}

RefineNet::RefineNet(const RefineConfig& cfg, Rng& rng) : cfg_(cfg) {
  if (cfg.input_len % cfg.patch_len != 0)
    throw std::invalid_argument("refine: input length must be a multiple of the patch length");
  const int P = cfg.input_len / cfg.patch_len;
  auto& ps = params_;

  patch_embed_ = LinearLayer::make(ps, "ref.wave.patch", cfg.patch_len, cfg.hidden, rng);
  for (int i = 0; i < cfg.layers; ++i) {
    const std::string base = "ref.wave.mix" + std::to_string(i);
    MixerLayer m;
    m.token_mix = LinearLayer::make(ps, base + ".token", P, P, rng);
    m.feat1 = LinearLayer::make(ps, base + ".f1", cfg.hidden, cfg.expansion * cfg.hidden, rng);
    m.feat2 = LinearLayer::make(ps, base + ".f2", cfg.expansion * cfg.hidden, cfg.hidden, rng);
    mixer_.push_back(m);
  }
  wave_head_ecg_ = {LinearLayer::make(ps, "ref.wave.head_ecg.l1", cfg.hidden, 2 * cfg.hidden, rng),
                    LinearLayer::make(ps, "ref.wave.head_ecg.l2", 2 * cfg.hidden, cfg.embed_dim, rng)};
  wave_head_ppg_ = {LinearLayer::make(ps, "ref.wave.head_ppg.l1", cfg.hidden, 2 * cfg.hidden, rng),
                    LinearLayer::make(ps, "ref.wave.head_ppg.l2", 2 * cfg.hidden, cfg.embed_dim, rng)};

  pi_table_ = ps.create("ref.pi.table", {19, cfg.pi_embed},
                        1.0 / std::sqrt(static_cast<double>(cfg.pi_embed)), rng);
  pi_head_ = {LinearLayer::make(ps, "ref.pi.l1", cfg.pi_embed, cfg.pi_hidden, rng),
              LinearLayer::make(ps, "ref.pi.l2", cfg.pi_hidden, cfg.embed_dim, rng)};
  pi_null_ = ps.create("ref.pi.null", {1, cfg.embed_dim},
                       1.0 / std::sqrt(static_cast<double>(cfg.embed_dim)), rng);

  reg_trunk_ = LinearLayer::make(ps, "ref.reg.trunk", 2 * cfg.embed_dim, cfg.reg_hidden, rng);
  reg_head_ecg_ = {LinearLayer::make(ps, "ref.reg.head_ecg.l1", cfg.reg_hidden, cfg.reg_hidden / 2, rng),
                   LinearLayer::make(ps, "ref.reg.head_ecg.l2", cfg.reg_hidden / 2, 2, rng)};
  reg_head_ppg_ = {LinearLayer::make(ps, "ref.reg.head_ppg.l1", cfg.reg_hidden, cfg.reg_hidden / 2, rng),
                   LinearLayer::make(ps, "ref.reg.head_ppg.l2", cfg.reg_hidden / 2, 2, rng)};
  // Start the regression outputs at a plausible normalized operating point
  // (SBP above DBP); training is free to move away from it.
  for (Head* h : {&reg_head_ecg_, &reg_head_ppg_}) {
    h->l2.b.data()[0] = 0.55;
    h->l2.b.data()[1] = 0.25;
  }
}

Tensor RefineNet::head_forward(const Head& h, const Tensor& x, bool train, Rng& rng) {
  Tensor t = gelu(h.l1(x));
  t = dropout(t, cfg_.dropout, train, rng);
  return h.l2(t);
}

Tensor RefineNet::encode_waveform(const Tensor& x, Kind kind, bool train, Rng& rng) {
  if (kind == Kind::ABP)
    throw std::invalid_argument("refine: ABP is not a refinement source (ECG/PPG only)");
  if (x.ndim() != 3 || x.dim(1) != 1 || x.dim(2) != cfg_.input_len)
    throw std::invalid_argument("refine: input must be (N,1," + std::to_string(cfg_.input_len) +
                                ")");
  const int N = x.dim(0);
  const int P = cfg_.input_len / cfg_.patch_len;

  Tensor t = reshape(x, {N, P, cfg_.patch_len});
  t = patch_embed_(t);  // (N,P,H)
  for (const auto& m : mixer_) {
    Tensor a = layer_norm_lastdim(t, 1e-5);
    a = transpose12(a);        // (N,H,P)
    a = m.token_mix(a);        // mix across patches
    a = transpose12(a);
    t = add(t, a);
    Tensor f = layer_norm_lastdim(t, 1e-5);
    f = m.feat2(gelu(m.feat1(f)));
    f = dropout(f, cfg_.dropout, train, rng);
    t = add(t, f);
  }
  Tensor pooled = reshape(mean_lastdim(transpose12(t)), {N, cfg_.hidden});
  return head_forward(kind == Kind::ECG ? wave_head_ecg_ : wave_head_ppg_, pooled, train, rng);
}

Tensor RefineNet::encode_pi(const std::vector<std::string>& texts, bool train, Rng& rng) {
  std::vector<std::vector<int>> toks;
  toks.reserve(texts.size());
  for (const auto& t : texts) toks.push_back(tokenize_pi(t));
  Tensor pooled = embedding_mean(pi_table_, toks);  // (N, pi_embed)
  return head_forward(pi_head_, pooled, train, rng);
}

Tensor RefineNet::null_pi(int batch) {
  return add(Tensor::zeros({batch, cfg_.embed_dim}), pi_null_);
}

Tensor RefineNet::predict_bp(const Tensor& e_w, const Tensor& e_pi, Kind kind) {
  if (kind == Kind::ABP) throw std::invalid_argument("refine: no regression head for ABP source");
  Tensor t = gelu(reg_trunk_(concat({e_w, e_pi}, 1)));
  const Head& h = kind == Kind::ECG ? reg_head_ecg_ : reg_head_ppg_;
  return h.l2(gelu(h.l1(t)));
}

Tensor ref_loss(RefineNet& net, const RefBatchInputs& batch, const RefLossOptions& opts,
                Rng& rng) {
  if (batch.x_ecg.dim(0) != batch.x_ppg.dim(0))
    throw std::invalid_argument("ref_loss: ECG and PPG branches must cover the same records");
  const int n = batch.x_ecg.dim(0);
  const WCLConfig& w = net.config().wcl;

  Tensor e_ecg = net.encode_waveform(batch.x_ecg, Kind::ECG, opts.train, rng);
  Tensor e_ppg = net.encode_waveform(batch.x_ppg, Kind::PPG, opts.train, rng);
  Tensor e_pi = opts.with_pi ? net.encode_pi(batch.pi, opts.train, rng) : net.null_pi(n);

  Tensor loss = Tensor::scalar(0.0);
  if (opts.use_wcl) {
    const auto w_bp = wcl_weights(batch.labels, WclKind::BP, w);
    Tensor l_wave = add(wcl_loss(e_ecg, w_bp, w.tau_w), wcl_loss(e_ppg, w_bp, w.tau_w));
    loss = add(loss, mul_scalar(l_wave, w.lambda1));
    if (opts.with_pi) {
      const auto w_pi = wcl_pi_weights(batch.labels, w);
      loss = add(loss, mul_scalar(wcl_loss(e_pi, w_pi, w.tau_w), w.lambda2));
    }
  }
  if (opts.include_mae) {
    Tensor mae_terms = Tensor::scalar(0.0);
    for (Kind k : {Kind::ECG, Kind::PPG}) {
      Tensor pred = net.predict_bp(k == Kind::ECG ? e_ecg : e_ppg, e_pi, k);  // (N,2)
      Tensor sbp = slice(pred, 1, 0, 1);
      Tensor dbp = slice(pred, 1, 1, 1);
      mae_terms =
          add(mae_terms, add(mae_loss(sbp, batch.sbp_norm), mae_loss(dbp, batch.dbp_norm)));
    }
    loss = add(loss, mul_scalar(mae_terms, w.lambda_mae));
  }
  return loss;
}

}  // namespace vsc
