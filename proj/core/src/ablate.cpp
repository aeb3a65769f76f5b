#include "vsc/ablate.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "vsc/report.hpp"
#include "vsc/standards.hpp"

namespace vsc {

namespace {

struct Stat {
  double mean = 0.0, sd = 0.0;
  int n = 0;
};

Stat summarize(const std::vector<double>& v) {
  Stat s;
  s.n = static_cast<int>(v.size());
  if (v.empty()) return s;
  for (double x : v) s.mean += x;
  s.mean /= v.size();
  for (double x : v) s.sd += (x - s.mean) * (x - s.mean);
  s.sd = std::sqrt(s.sd / v.size());
  return s;
}

// Normalized-scale MAE of one conversion direction on the test split.
double direction_mae(const Dataset& ds, ApproxNet& net, Kind src, Kind dst) {
  const auto idx = ds.record_indices_for_patients(ds.splits.apx_test);
  Rng eval_rng(0);
  double total = 0.0;
  const int batch = 16;
  for (std::size_t start = 0; start < idx.size(); start += batch) {
    std::vector<DirectedSample> chunk;
    for (std::size_t i = start; i < std::min(start + batch, idx.size()); ++i)
      chunk.push_back({idx[i], src, dst});
    ApxBatch b = make_apx_batch(ds, chunk);
    Tensor pred = net.forward(b.x, b.d, false, eval_rng);
    const int L = pred.dim(2);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      std::vector<double> p(pred.data().begin() + static_cast<std::ptrdiff_t>(i * L),
                            pred.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
      std::vector<double> t(b.y.data().begin() + static_cast<std::ptrdiff_t>(i * L),
                            b.y.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * L));
      total += mae(p, t);
    }
  }
  return total / static_cast<double>(idx.size());
}

// End-to-end mmHg ABP MAE from a single source modality on given records.
double abp_mmhg_mae(const Dataset& ds, ApproxNet& apx, RefineNet& refine, Kind src,
                    const std::vector<int>& rec_idx, bool use_pi) {
  Rng eval_rng(0);
  const bool with_pi = ds.config.with_pi && use_pi;
  double total = 0.0;
  int counted = 0;
  const int batch = 16;
  for (std::size_t start = 0; start < rec_idx.size(); start += batch) {
    std::vector<DirectedSample> chunk;
    for (std::size_t i = start; i < std::min(start + batch, rec_idx.size()); ++i)
      chunk.push_back({rec_idx[i], src, Kind::ABP});
    ApxBatch b = make_apx_batch(ds, chunk);
    Tensor pred = apx.forward(b.x, b.d, false, eval_rng);
    Tensor e_w = refine.encode_waveform(b.x, src, false, eval_rng);
    Tensor e_pi;
    if (with_pi) {
      std::vector<std::string> texts;
      for (const auto& s : chunk)
        texts.push_back(
            linearize_pi(*ds.patient(ds.records[static_cast<std::size_t>(s.record_index)].patient_id)));
      e_pi = refine.encode_pi(texts, false, eval_rng);
    } else {
      e_pi = refine.null_pi(static_cast<int>(chunk.size()));
    }
    Tensor bp = refine.predict_bp(e_w, e_pi, src);
    const int L = pred.dim(2);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const double sbp_n = bp.data()[i * 2], dbp_n = bp.data()[i * 2 + 1];
      if (sbp_n <= dbp_n) continue;
      const Record& rec = ds.records[static_cast<std::size_t>(chunk[i].record_index)];
      Waveform y_apx{Kind::ABP, Unit::LocalNorm, ds.config.fs,
                     std::vector<double>(
                         pred.data().begin() + static_cast<std::ptrdiff_t>(i * L),
                         pred.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * L))};
      for (auto& v : y_apx.samples) v = std::clamp(v, 0.0, 1.0);
      Waveform gen = rescale_abp(y_apx, make_bp_estimate(sbp_n, dbp_n, ds.bounds), ds.bounds);
      total += mae(gen.samples, rec.abp.samples);
      ++counted;
    }
  }
  return counted ? total / counted : 0.0;
}

const char* dir_name(Kind s, Kind d) {
  static thread_local std::string buf;
  buf = std::string(kind_name(s)) + "->" + kind_name(d);
  return buf.c_str();
}

}  // namespace

void ablate_multi_vs_uni(const Dataset& ds, const AblateConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto dirs = all_directions();
  std::map<std::string, std::vector<double>> uni_mae, multi_mae;

  for (int s = 0; s < cfg.seeds; ++s) {
    RunConfig run = cfg.run;
    run.seed = cfg.seed0 + static_cast<std::uint64_t>(s);

    Rng init(run.seed);
    ApproxNet multi(run.apx, init);
    train_apx(run, ds, "", multi);
    for (auto [src, dst] : dirs)
      multi_mae[dir_name(src, dst)].push_back(direction_mae(ds, multi, src, dst));

    for (auto [src, dst] : dirs) {
      Rng uinit(run.seed ^ (0xABCDULL + static_cast<std::uint64_t>(kind_index(src)) * 16 +
                            static_cast<std::uint64_t>(kind_index(dst))));
      ApproxNet uni(run.apx, uinit);
      train_apx(run, ds, "", uni, std::make_pair(src, dst));
      uni_mae[dir_name(src, dst)].push_back(direction_mae(ds, uni, src, dst));
    }
  }

  std::ofstream csv(out_dir + "/multi_vs_uni.csv", std::ios::trunc);
  csv << "direction,uni_mae_mean,uni_mae_sd,multi_mae_mean,multi_mae_sd,n_seeds\n";
  csv.precision(10);
  std::ofstream txt(out_dir + "/multi_vs_uni.txt", std::ios::trunc);
  txt << "Multi-directional vs uni-directional training, MAE on the test split\n";
  txt << "(normalized units; mean +/- SD over " << cfg.seeds << " seeds)\n\n";
  txt << "direction        uni              multi\n";
  txt.precision(4);
  txt << std::fixed;
  for (auto [src, dst] : dirs) {
    const std::string name = dir_name(src, dst);
    const Stat u = summarize(uni_mae[name]);
    const Stat m = summarize(multi_mae[name]);
    csv << name << "," << u.mean << "," << u.sd << "," << m.mean << "," << m.sd << "," << u.n
        << "\n";
    txt << name << (name.size() < 9 ? "\t\t" : "\t") << u.mean << " +/- " << u.sd << "  "
        << m.mean << " +/- " << m.sd << "\n";
  }
}

void ablate_wcl_pi(const Dataset& ds, const AblateConfig& cfg, const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  const bool has_pi = ds.config.with_pi;
  const auto ft_test = ds.record_indices_for_segments(ds.splits.ft_test);

  struct Cell {
    bool wcl, pi;
  };
  std::vector<Cell> cells{{false, false}, {true, false}};
  if (has_pi) {
    cells.push_back({false, true});
    cells.push_back({true, true});
  }

  std::map<std::string, std::vector<double>> ppg_mae, ecg_mae;
  for (int s = 0; s < cfg.seeds; ++s) {
    RunConfig run = cfg.run;
    run.seed = cfg.seed0 + static_cast<std::uint64_t>(s);

    // One shared approximation model per seed isolates the refinement cells.
    Rng apx_init(run.seed);
    ApproxNet apx(run.apx, apx_init);
    train_apx(run, ds, "", apx);

    for (const Cell& c : cells) {
      RunConfig rcfg = run;
      rcfg.use_wcl = c.wcl;
      rcfg.use_pi = c.pi;
      rcfg.require_pretrain = false;
      Rng rinit(run.seed ^ 0x9999ULL);
      RefineNet refine(rcfg.ref, rinit);
      std::string ckpt;
      if (c.wcl) {
        const std::string predir =
            out_dir + "/pretrain_seed" + std::to_string(s) + (c.pi ? "_pi" : "_nopi");
        TrainOutput pre = train_ref(rcfg, ds, predir, refine, RefStage::Pretrain);
        ckpt = pre.checkpoint_path;
      }
      Rng finit(run.seed ^ 0x7777ULL);
      RefineNet ft(rcfg.ref, finit);
      train_ref(rcfg, ds, "", ft, RefStage::Finetune, ckpt);

      const std::string key = std::string(c.wcl ? "Y" : "N") + "/" + (c.pi ? "Y" : "N");
      ppg_mae[key].push_back(abp_mmhg_mae(ds, apx, ft, Kind::PPG, ft_test, c.pi));
      ecg_mae[key].push_back(abp_mmhg_mae(ds, apx, ft, Kind::ECG, ft_test, c.pi));
    }
  }

  std::ofstream csv(out_dir + "/wcl_pi.csv", std::ios::trunc);
  csv << "wcl,pi,ppg_abp_mae_mean,ppg_abp_mae_sd,ecg_abp_mae_mean,ecg_abp_mae_sd,n_seeds\n";
  csv.precision(10);
  std::ofstream txt(out_dir + "/wcl_pi.txt", std::ios::trunc);
  txt << "Refinement ablation: WCL loss and patient information\n";
  txt << "(end-to-end ABP MAE in mmHg on the finetune-test segments; mean +/- SD over "
      << cfg.seeds << " seeds)\n";
  if (!has_pi) txt << "(dataset has no demographics; PI rows not applicable)\n";
  txt << "\nWCL  PI   PPG->ABP           ECG->ABP\n";
  txt.precision(3);
  txt << std::fixed;
  for (const Cell& c : cells) {
    const std::string key = std::string(c.wcl ? "Y" : "N") + "/" + (c.pi ? "Y" : "N");
    const Stat p = summarize(ppg_mae[key]);
    const Stat e = summarize(ecg_mae[key]);
    csv << (c.wcl ? "Y" : "N") << "," << (c.pi ? "Y" : "N") << "," << p.mean << "," << p.sd << ","
        << e.mean << "," << e.sd << "," << p.n << "\n";
    txt << (c.wcl ? "Y" : "N") << "    " << (c.pi ? "Y" : "N") << "    " << p.mean << " +/- "
        << p.sd << "    " << e.mean << " +/- " << e.sd << "\n";
  }
}

}  // namespace vsc
