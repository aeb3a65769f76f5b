#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "vsc/optim.hpp"
#include "vsc/refine.hpp"

using namespace vsc;

namespace {

RefineConfig tiny_config(int input_len = 64) {
  RefineConfig c = RefineConfig::desk();
  c.input_len = input_len;
  c.hidden = 8;
  c.layers = 2;
  c.expansion = 2;
  c.embed_dim = 32;
  c.pi_embed = 8;
  c.pi_hidden = 16;
  c.reg_hidden = 16;
  return c;
}

PatientProfile sample_profile() {
  PatientProfile p;
  p.age = 63;
  p.sex = 'M';
  p.height_cm = 172.0;
  p.weight_kg = 70.0;
  p.bmi = 23.7;
  return p;
}

Tensor random_wave(int n, int len, Rng& rng) {
  Tensor x = Tensor::zeros({n, 1, len});
  for (auto& v : x.data()) v = rng.uniform();
  return x;
}

}  // namespace

TEST_CASE("patient info linearization and parsing") {
  PatientProfile p = sample_profile();
  CHECK(linearize_pi(p) == "63/M/172/70/23.7");

  PatientProfile partial;
  partial.age = 63;
  partial.sex = 'M';
  CHECK(linearize_pi(partial) == "63/M///");

  const PiFields f = parse_pi(linearize_pi(p));
  CHECK(f.age == 63);
  CHECK(f.sex == 'M');
  CHECK(f.height_cm == doctest::Approx(172.0));
  CHECK(f.weight_kg == doctest::Approx(70.0));
  CHECK(f.bmi == doctest::Approx(23.7));

  const PiFields g = parse_pi("63/M///");
  CHECK(g.age == 63);
  CHECK_FALSE(g.height_cm.has_value());
  CHECK_FALSE(g.bmi.has_value());

  CHECK_THROWS_AS(parse_pi("63/M//"), std::invalid_argument);   // 3 delimiters
  CHECK_THROWS_AS(parse_pi("63/M////"), std::invalid_argument); // 5 delimiters
}

TEST_CASE("tokenizer is delimiter-aware") {
  const auto toks = tokenize_pi("63/M///");
  // field markers 0..4 all present exactly once
  for (int f = 0; f < 5; ++f) CHECK(std::count(toks.begin(), toks.end(), f) == 1);
  CHECK_THROWS_AS(tokenize_pi("1/2/3/4/5/6"), std::invalid_argument);
}

TEST_CASE("wcl weights reproduce the closed-form values") {
  WCLConfig cfg;
  WclLabels l;
  l.sbp = {120.0, 120.0, 150.0};
  l.dbp = {80.0, 80.0, 95.0};
  l.age = {40.0, 44.0, 80.0};
  l.gender = {'M', 'M', 'F'};

  const auto bp = wcl_weights(l, WclKind::BP, cfg);
  CHECK(std::fabs(bp[0 * 3 + 1] - 1.0) < 1e-12);  // identical SBP and DBP
  const double expected_02 =
      0.5 * (std::exp(-30.0 / 4.0) + std::exp(-15.0 / 4.0));
  // 0.5*(exp(-7.5)+exp(-3.75)) ~ 0.0120 < T_s=0.0235 -> zeroed
  CHECK(expected_02 < cfg.thr_bp);
  CHECK(bp[0 * 3 + 2] == 0.0);

  const auto age = wcl_weights(l, WclKind::Age, cfg);
  CHECK(std::fabs(age[0 * 3 + 1] - std::exp(-1.0)) < 1e-12);  // gap 4, tau 4
  CHECK(std::fabs(std::exp(-1.0) - 0.36788) < 1e-5);
  CHECK(age[0 * 3 + 2] == 0.0);  // gap 40 -> exp(-10) ~ 4.54e-5 < 0.0235

  const auto gender = wcl_weights(l, WclKind::Gender, cfg);
  CHECK(gender[0 * 3 + 1] == 1.0);
  CHECK(gender[0 * 3 + 2] == 0.0);  // mismatched gender

  // symmetry, zero diagonal, [0,1] range
  for (int i = 0; i < 3; ++i) {
    CHECK(bp[static_cast<std::size_t>(i) * 3 + i] == 0.0);
    for (int j = 0; j < 3; ++j) {
      CHECK(bp[static_cast<std::size_t>(i) * 3 + j] ==
            doctest::Approx(bp[static_cast<std::size_t>(j) * 3 + i]).epsilon(1e-15));
      CHECK(bp[static_cast<std::size_t>(i) * 3 + j] >= 0.0);
      CHECK(bp[static_cast<std::size_t>(i) * 3 + j] <= 1.0);
    }
  }

  // combined PI weights gate age similarity by gender equality
  const auto pi = wcl_pi_weights(l, cfg);
  CHECK(pi[0 * 3 + 1] == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
  CHECK(pi[0 * 3 + 2] == 0.0);

  WclLabels missing;
  CHECK_THROWS_AS(wcl_weights(missing, WclKind::Age, cfg), std::invalid_argument);
}

TEST_CASE("wcl loss closed forms") {
  const int B = 5;
  // all-identical embeddings, uniform weights -> log(B-1)
  Tensor e = Tensor::full({B, 8}, 0.37);
  std::vector<double> w(static_cast<std::size_t>(B) * B, 1.0);
  for (int i = 0; i < B; ++i) w[static_cast<std::size_t>(i) * B + i] = 0.0;
  CHECK(wcl_loss(e, w, 4.0).item() == doctest::Approx(std::log(B - 1.0)).epsilon(1e-9));

  // zero weight matrix -> loss 0
  std::vector<double> zeros(static_cast<std::size_t>(B) * B, 0.0);
  CHECK(wcl_loss(e, zeros, 4.0).item() == 0.0);

  // batch of 1 rejected
  CHECK_THROWS_AS(wcl_loss(Tensor::full({1, 8}, 1.0), {0.0}, 4.0), std::invalid_argument);
}

TEST_CASE("wcl loss decreases when a positive pair moves closer") {
  Rng rng(3);
  const int B = 4, D = 6;
  std::vector<double> base(static_cast<std::size_t>(B) * D);
  for (auto& v : base) v = rng.normal();
  std::vector<double> w(static_cast<std::size_t>(B) * B, 0.0);
  w[0 * B + 1] = 1.0;
  w[1 * B + 0] = 1.0;  // only (0,1) is a positive pair

  auto loss_for = [&](double blend) {
    std::vector<double> v = base;
    for (int d = 0; d < D; ++d) {
      // move row 1 toward row 0
      v[static_cast<std::size_t>(B - 3) * D + d] =
          (1.0 - blend) * base[1 * D + d] + blend * base[0 * D + d];
    }
    return wcl_loss(Tensor::from({B, D}, v), w, 4.0).item();
  };
  const double far = loss_for(0.0);
  const double mid = loss_for(0.5);
  const double near = loss_for(0.9);
  CHECK(mid < far);
  CHECK(near < mid);
}

TEST_CASE("waveform encoder contract") {
  Rng rng(4);
  RefineConfig cfg = tiny_config(512);
  cfg.embed_dim = 512;
  RefineNet net(cfg, rng);
  Rng data(5);
  Tensor x = random_wave(2, 512, data);
  Rng fwd(0);
  Tensor e = net.encode_waveform(x, Kind::PPG, false, fwd);
  CHECK(e.shape() == Shape{2, 512});

  // deterministic in eval mode
  Rng fwd2(99);
  Tensor e2 = net.encode_waveform(x, Kind::PPG, false, fwd2);
  CHECK(e.data() == e2.data());

  // ABP is not a refinement source
  CHECK_THROWS_AS(net.encode_waveform(x, Kind::ABP, false, fwd), std::invalid_argument);
  // wrong length rejected
  Tensor bad = random_wave(1, 256, data);
  CHECK_THROWS_AS(net.encode_waveform(bad, Kind::ECG, false, fwd), std::invalid_argument);

  // per-kind heads differ: same input, different source kind, different embedding
  Tensor ee = net.encode_waveform(x, Kind::ECG, false, fwd);
  double diff = 0.0;
  for (std::size_t i = 0; i < e.data().size(); ++i) diff += std::fabs(e.data()[i] - ee.data()[i]);
  CHECK(diff > 0.0);
}

TEST_CASE("pi encoder: determinism, null path, gradient reaches the token table") {
  Rng rng(6);
  RefineNet net(tiny_config(), rng);
  Rng fwd(0);
  Tensor a = net.encode_pi({"63/M/172/70/23.7"}, false, fwd);
  Tensor b = net.encode_pi({"63/M/172/70/23.7"}, false, fwd);
  CHECK(a.data() == b.data());
  CHECK(a.shape() == Shape{1, 32});

  Tensor c = net.encode_pi({"22/F///"}, false, fwd);
  double diff = 0.0;
  for (std::size_t i = 0; i < a.data().size(); ++i) diff += std::fabs(a.data()[i] - c.data()[i]);
  CHECK(diff > 0.0);

  // gradient flows into the token embedding table
  Tensor loss = mean_all(square(net.encode_pi({"63/M///", "22/F///"}, false, fwd)));
  backward(loss);
  Tensor* table = net.params().find("ref.pi.table");
  REQUIRE(table != nullptr);
  double gsum = 0.0;
  for (double g : table->grad()) gsum += std::fabs(g);
  CHECK(gsum > 0.0);

  // the learned null embedding is profile-independent by construction
  Tensor n1 = net.null_pi(2);
  CHECK(n1.shape() == Shape{2, 32});
  for (int d = 0; d < 32; ++d)
    CHECK(n1.data()[static_cast<std::size_t>(d)] ==
          n1.data()[static_cast<std::size_t>(32 + d)]);
}

TEST_CASE("predict_bp returns two scalars per record and rejects ABP sources") {
  Rng rng(7);
  RefineNet net(tiny_config(), rng);
  Rng data(8);
  Tensor x = random_wave(3, 64, data);
  Rng fwd(0);
  Tensor e_w = net.encode_waveform(x, Kind::ECG, false, fwd);
  Tensor e_pi = net.null_pi(3);
  Tensor bp = net.predict_bp(e_w, e_pi, Kind::ECG);
  CHECK(bp.shape() == Shape{3, 2});
  CHECK_THROWS_AS(net.predict_bp(e_w, e_pi, Kind::ABP), std::invalid_argument);
}

TEST_CASE("ref loss composition: WCL-only, MAE-only, and the full objective") {
  Rng rng(9);
  RefineConfig cfg = tiny_config();
  RefineNet net(cfg, rng);
  Rng data(10);
  const int B = 6;

  RefBatchInputs batch;
  batch.x_ecg = random_wave(B, 64, data);
  batch.x_ppg = random_wave(B, 64, data);
  std::vector<double> sbp, dbp;
  for (int i = 0; i < B; ++i) {
    const double s = 100.0 + 10.0 * i;
    sbp.push_back((s - 40.0) / 160.0);
    dbp.push_back((0.6 * s - 40.0) / 160.0);
    batch.labels.sbp.push_back(s);
    batch.labels.dbp.push_back(0.6 * s);
    batch.labels.age.push_back(30.0 + 5.0 * i);
    batch.labels.gender.push_back(i % 2 ? 'F' : 'M');
    batch.pi.push_back("40/M/170/70/24.2");
  }
  batch.sbp_norm = Tensor::from({B, 1}, sbp);
  batch.dbp_norm = Tensor::from({B, 1}, dbp);

  Rng fwd(0);
  RefLossOptions wcl_only{/*include_mae=*/false, /*use_wcl=*/true, /*with_pi=*/true,
                          /*train=*/false};
  const double l_wcl = ref_loss(net, batch, wcl_only, fwd).item();
  CHECK(l_wcl > 0.0);

  RefLossOptions mae_only{/*include_mae=*/true, /*use_wcl=*/false, /*with_pi=*/true,
                          /*train=*/false};
  const double l_mae = ref_loss(net, batch, mae_only, fwd).item();
  CHECK(l_mae > 0.0);

  RefLossOptions full{/*include_mae=*/true, /*use_wcl=*/true, /*with_pi=*/true, /*train=*/false};
  const double l_full = ref_loss(net, batch, full, fwd).item();
  CHECK(l_full == doctest::Approx(l_wcl + l_mae).epsilon(1e-9));
}

TEST_CASE("overfit probe: refinement loss decreases on a fixed small batch") {
  Rng rng(11);
  RefineConfig cfg = tiny_config();
  RefineNet net(cfg, rng);
  Rng data(12);
  const int B = 6;
  RefBatchInputs batch;
  batch.x_ecg = random_wave(B, 64, data);
  batch.x_ppg = random_wave(B, 64, data);
  std::vector<double> sbp, dbp;
  for (int i = 0; i < B; ++i) {
    const double s = 95.0 + 9.0 * i;
    sbp.push_back((s - 40.0) / 160.0);
    dbp.push_back((0.65 * s - 40.0) / 160.0);
    batch.labels.sbp.push_back(s);
    batch.labels.dbp.push_back(0.65 * s);
    batch.labels.age.push_back(28.0 + 6.0 * i);
    batch.labels.gender.push_back(i % 2 ? 'F' : 'M');
    batch.pi.push_back(std::to_string(28 + 6 * i) + "/M/170/70/24.2");
  }
  batch.sbp_norm = Tensor::from({B, 1}, sbp);
  batch.dbp_norm = Tensor::from({B, 1}, dbp);

  RefLossOptions opts{/*include_mae=*/true, /*use_wcl=*/true, /*with_pi=*/true, /*train=*/false};
  Rng fwd(0);
  Adam opt({3e-3});
  const double initial = ref_loss(net, batch, opts, fwd).item();
  double last = initial;
  for (int step = 0; step < 200; ++step) {
    Tensor loss = ref_loss(net, batch, opts, fwd);
    last = loss.item();
    backward(loss);
    opt.step(net.params());
  }
  CHECK(last < initial);
}
