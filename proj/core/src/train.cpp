#include "vsc/train.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "vsc/checkpoint.hpp"

namespace vsc {

RunConfig RunConfig::full_scale() {
  RunConfig c;
  c.batch_size = 2048;
  c.max_steps = 30000;
  c.apx = ApproxConfig::full_scale();
  c.ref = RefineConfig::full_scale();
  return c;
}

RunConfig RunConfig::desk() {
  RunConfig c;
  c.batch_size = 32;
  c.max_steps = 5000;
  c.apx = ApproxConfig::desk();
  c.ref = RefineConfig::desk();
  return c;
}

RunConfig RunConfig::from_config(const KvConfig& kv) {
  kv.require_known({
      {"run",
       {"stage", "seed", "batch_size", "lr", "scheduler_patience", "early_stop_patience",
        "max_steps", "val_interval", "val_max_samples", "lr_factor", "min_lr", "grad_clip",
        "use_wcl", "use_pi", "require_pretrain"}},
      {"apx",
       {"base_channels", "embed_channels", "window", "heads", "style_dim", "patch", "attn_blocks",
        "mlp_ratio", "dropout"}},
      {"refine",
       {"input_len", "patch_len", "hidden", "layers", "expansion", "embed_dim", "pi_embed",
        "pi_hidden", "reg_hidden", "dropout"}},
      {"wcl",
       {"lambda_mae", "lambda1", "lambda2", "tau_bp", "thr_bp", "tau_age", "thr_age", "tau_gender",
        "thr_gender", "tau_w"}},
  });
  RunConfig c = RunConfig::desk();
  c.stage = kv.get("run", "stage", c.stage);
  c.seed = static_cast<std::uint64_t>(kv.integer("run", "seed", 1));
  c.batch_size = static_cast<int>(kv.integer("run", "batch_size", c.batch_size));
  c.lr = kv.num("run", "lr", c.lr);
  c.scheduler_patience = static_cast<int>(kv.integer("run", "scheduler_patience", c.scheduler_patience));
  c.early_stop_patience = static_cast<int>(kv.integer("run", "early_stop_patience", c.early_stop_patience));
  c.max_steps = static_cast<int>(kv.integer("run", "max_steps", c.max_steps));
  c.val_interval = static_cast<int>(kv.integer("run", "val_interval", c.val_interval));
  c.val_max_samples = static_cast<int>(kv.integer("run", "val_max_samples", c.val_max_samples));
  c.lr_factor = kv.num("run", "lr_factor", c.lr_factor);
  c.min_lr = kv.num("run", "min_lr", c.min_lr);
  c.grad_clip = kv.num("run", "grad_clip", c.grad_clip);
  c.use_wcl = kv.flag("run", "use_wcl", c.use_wcl);
  c.use_pi = kv.flag("run", "use_pi", c.use_pi);
  c.require_pretrain = kv.flag("run", "require_pretrain", c.require_pretrain);

  c.apx.base_channels = static_cast<int>(kv.integer("apx", "base_channels", c.apx.base_channels));
  c.apx.embed_channels = static_cast<int>(kv.integer("apx", "embed_channels", c.apx.embed_channels));
  c.apx.window = static_cast<int>(kv.integer("apx", "window", c.apx.window));
  c.apx.heads = static_cast<int>(kv.integer("apx", "heads", c.apx.embed_channels / 8));
  c.apx.style_dim = static_cast<int>(kv.integer("apx", "style_dim", c.apx.style_dim));
  c.apx.patch = static_cast<int>(kv.integer("apx", "patch", c.apx.patch));
  c.apx.attn_blocks = static_cast<int>(kv.integer("apx", "attn_blocks", c.apx.attn_blocks));
  c.apx.mlp_ratio = static_cast<int>(kv.integer("apx", "mlp_ratio", c.apx.mlp_ratio));
  c.apx.dropout = kv.num("apx", "dropout", c.apx.dropout);

  c.ref.input_len = static_cast<int>(kv.integer("refine", "input_len", c.ref.input_len));
  c.ref.patch_len = static_cast<int>(kv.integer("refine", "patch_len", c.ref.patch_len));
  c.ref.hidden = static_cast<int>(kv.integer("refine", "hidden", c.ref.hidden));
  c.ref.layers = static_cast<int>(kv.integer("refine", "layers", c.ref.layers));
  c.ref.expansion = static_cast<int>(kv.integer("refine", "expansion", c.ref.expansion));
  c.ref.embed_dim = static_cast<int>(kv.integer("refine", "embed_dim", c.ref.embed_dim));
  c.ref.pi_embed = static_cast<int>(kv.integer("refine", "pi_embed", c.ref.pi_embed));
  c.ref.pi_hidden = static_cast<int>(kv.integer("refine", "pi_hidden", c.ref.pi_hidden));
  c.ref.reg_hidden = static_cast<int>(kv.integer("refine", "reg_hidden", c.ref.reg_hidden));
  c.ref.dropout = kv.num("refine", "dropout", c.ref.dropout);

  WCLConfig& w = c.ref.wcl;
  w.lambda_mae = kv.num("wcl", "lambda_mae", w.lambda_mae);
  w.lambda1 = kv.num("wcl", "lambda1", w.lambda1);
  w.lambda2 = kv.num("wcl", "lambda2", w.lambda2);
  w.tau_bp = kv.num("wcl", "tau_bp", w.tau_bp);
  w.thr_bp = kv.num("wcl", "thr_bp", w.thr_bp);
  w.tau_age = kv.num("wcl", "tau_age", w.tau_age);
  w.thr_age = kv.num("wcl", "thr_age", w.thr_age);
  w.tau_gender = kv.num("wcl", "tau_gender", w.tau_gender);
  w.thr_gender = kv.num("wcl", "thr_gender", w.thr_gender);
  w.tau_w = kv.num("wcl", "tau_w", w.tau_w);
  return c;
}

void RunConfig::write_config(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("config: cannot write " + path);
  os.precision(17);  // reloading the file must reproduce the run exactly
  os << "[run]\n";
  os << "stage = " << stage << "\n";
  os << "seed = " << seed << "\n";
  os << "batch_size = " << batch_size << "\n";
  os << "lr = " << lr << "\n";
  os << "scheduler_patience = " << scheduler_patience << "\n";
  os << "early_stop_patience = " << early_stop_patience << "\n";
  os << "max_steps = " << max_steps << "\n";
  os << "val_interval = " << val_interval << "\n";
  os << "val_max_samples = " << val_max_samples << "\n";
  os << "lr_factor = " << lr_factor << "\n";
  os << "min_lr = " << min_lr << "\n";
  os << "grad_clip = " << grad_clip << "\n";
  os << "use_wcl = " << (use_wcl ? "true" : "false") << "\n";
  os << "use_pi = " << (use_pi ? "true" : "false") << "\n";
  os << "require_pretrain = " << (require_pretrain ? "true" : "false") << "\n";
  os << "\n[apx]\n";
  os << "base_channels = " << apx.base_channels << "\n";
  os << "embed_channels = " << apx.embed_channels << "\n";
  os << "window = " << apx.window << "\n";
  os << "heads = " << apx.heads << "\n";
  os << "style_dim = " << apx.style_dim << "\n";
  os << "patch = " << apx.patch << "\n";
  os << "attn_blocks = " << apx.attn_blocks << "\n";
  os << "mlp_ratio = " << apx.mlp_ratio << "\n";
  os << "dropout = " << apx.dropout << "\n";
  os << "\n[refine]\n";
  os << "input_len = " << ref.input_len << "\n";
  os << "patch_len = " << ref.patch_len << "\n";
  os << "hidden = " << ref.hidden << "\n";
  os << "layers = " << ref.layers << "\n";
  os << "expansion = " << ref.expansion << "\n";
  os << "embed_dim = " << ref.embed_dim << "\n";
  os << "pi_embed = " << ref.pi_embed << "\n";
  os << "pi_hidden = " << ref.pi_hidden << "\n";
  os << "reg_hidden = " << ref.reg_hidden << "\n";
  os << "dropout = " << ref.dropout << "\n";
  os << "\n[wcl]\n";
  os << "lambda_mae = " << ref.wcl.lambda_mae << "\n";
  os << "lambda1 = " << ref.wcl.lambda1 << "\n";
  os << "lambda2 = " << ref.wcl.lambda2 << "\n";
  os << "tau_bp = " << ref.wcl.tau_bp << "\n";
  os << "thr_bp = " << ref.wcl.thr_bp << "\n";
  os << "tau_age = " << ref.wcl.tau_age << "\n";
  os << "thr_age = " << ref.wcl.thr_age << "\n";
  os << "tau_gender = " << ref.wcl.tau_gender << "\n";
  os << "thr_gender = " << ref.wcl.thr_gender << "\n";
  os << "tau_w = " << ref.wcl.tau_w << "\n";
}

void TrainHistory::write_csv(const std::string& path) const {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw std::runtime_error("history: cannot write " + path);
  os << "step,train_loss,val_loss,lr\n";
  os.precision(17);
  for (const auto& p : points)
    os << p.step << "," << p.train_loss << "," << p.val_loss << "," << p.lr << "\n";
  os << "# best_step=" << best_step << " best_val=" << best_val << " stop=" << stop_reason
     << "\n";
}

PlateauController::Decision PlateauController::observe(double val_loss) {
  Decision d;
  if (val_loss < best_ - 1e-12) {
    best_ = val_loss;
    sched_stall_ = 0;
    stop_stall_ = 0;
    d.improved = true;
    return d;
  }
  ++sched_stall_;
  ++stop_stall_;
  if (sched_stall_ >= sched_patience_) {
    const double next = std::max(lr_ * factor_, min_lr_);
    if (next < lr_) d.reduced_lr = true;
    lr_ = next;
    sched_stall_ = 0;
  }
  if (stop_stall_ >= stop_patience_) d.stop = true;
  return d;
}

std::vector<std::pair<Kind, Kind>> all_directions() {
  std::vector<std::pair<Kind, Kind>> out;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) out.emplace_back(kind_from_index(i), kind_from_index(j));
  return out;
}

ApxBatch make_apx_batch(const Dataset& ds, const std::vector<DirectedSample>& samples) {
  const int n = static_cast<int>(samples.size());
  const int L = static_cast<int>(ds.records[static_cast<std::size_t>(samples[0].record_index)]
                                     .ecg.samples.size());
  std::vector<double> xv, yv;
  xv.reserve(static_cast<std::size_t>(n) * L);
  yv.reserve(static_cast<std::size_t>(n) * L);
  std::vector<Kind> targets;
  targets.reserve(samples.size());
  for (const auto& s : samples) {
    const Record& rec = ds.records[static_cast<std::size_t>(s.record_index)];
    const auto xs = prepared_wave(ds, rec, s.src);
    const auto ys = prepared_wave(ds, rec, s.dst);
    xv.insert(xv.end(), xs.begin(), xs.end());
    yv.insert(yv.end(), ys.begin(), ys.end());
    targets.push_back(s.dst);
  }
  ApxBatch b;
  b.x = Tensor::from({n, 1, L}, std::move(xv));
  b.y = Tensor::from({n, 1, L}, std::move(yv));
  b.d = one_hot_targets(targets);
  return b;
}

namespace {

void ensure_dir(const std::string& dir) {
  if (!dir.empty()) std::filesystem::create_directories(dir);
}

// Deterministic fixed validation pair list: records round-robin over the six
// directions, capped at max_samples.
std::vector<DirectedSample> validation_samples(const std::vector<int>& record_indices,
                                               int max_samples,
                                               std::optional<std::pair<Kind, Kind>> direction) {
  const auto dirs = all_directions();
  std::vector<DirectedSample> out;
  int d = 0;
  for (int idx : record_indices) {
    DirectedSample s;
    s.record_index = idx;
    if (direction) {
      s.src = direction->first;
      s.dst = direction->second;
    } else {
      s.src = dirs[static_cast<std::size_t>(d % 6)].first;
      s.dst = dirs[static_cast<std::size_t>(d % 6)].second;
      ++d;
    }
    out.push_back(s);
    if (static_cast<int>(out.size()) >= max_samples) break;
  }
  return out;
}

}  // namespace

TrainOutput train_apx(const RunConfig& cfg, const Dataset& ds, const std::string& out_dir,
                      ApproxNet& net, std::optional<std::pair<Kind, Kind>> direction) {
  if (direction && direction->first == direction->second)
    throw std::invalid_argument("train: conversion direction must have distinct source and target");
  const auto train_idx = ds.record_indices_for_patients(ds.splits.apx_train);
  const auto val_idx = ds.record_indices_for_patients(ds.splits.apx_val);
  if (train_idx.empty() || val_idx.empty())
    throw std::runtime_error("train: dataset has empty approximation splits");

  Rng master(cfg.seed);
  Rng data_rng = master.fork(2);
  Rng model_rng = master.fork(3);

  Adam opt({cfg.lr});
  PlateauController ctl(cfg.scheduler_patience, cfg.early_stop_patience, cfg.lr_factor,
                        cfg.min_lr, cfg.lr);
  TrainHistory hist;
  hist.best_val = 1e300;
  std::unordered_map<std::string, std::vector<double>> best_params = net.params().snapshot();

  const auto val_samples = validation_samples(val_idx, cfg.val_max_samples, direction);
  Rng eval_rng(0);  // eval mode never draws, but forward() takes an rng

  auto eval_val = [&]() {
    double total = 0.0;
    std::size_t count = 0;
    const int vb = 32;
    for (std::size_t i = 0; i < val_samples.size(); i += vb) {
      std::vector<DirectedSample> chunk(
          val_samples.begin() + static_cast<std::ptrdiff_t>(i),
          val_samples.begin() + static_cast<std::ptrdiff_t>(std::min(i + vb, val_samples.size())));
      ApxBatch b = make_apx_batch(ds, chunk);
      Tensor pred = net.forward(b.x, b.d, /*train=*/false, eval_rng);
      total += apx_loss(pred, b.y).item() * static_cast<double>(chunk.size());
      count += chunk.size();
    }
    return total / static_cast<double>(count);
  };

  double running = 0.0;
  int running_n = 0;
  std::string stop_reason = "max_steps";
  for (int step = 1; step <= cfg.max_steps; ++step) {
    auto samples = sample_direction_batch(ds, train_idx, cfg.batch_size, data_rng);
    if (direction) {
      for (auto& s : samples) {
        s.src = direction->first;
        s.dst = direction->second;
      }
    }
    ApxBatch b = make_apx_batch(ds, samples);
    Tensor pred = net.forward(b.x, b.d, /*train=*/true, model_rng);
    Tensor loss = apx_loss(pred, b.y);
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw std::runtime_error("train: loss diverged (non-finite) at step " +
                               std::to_string(step));
    backward(loss);
    clip_grad_norm(net.params(), cfg.grad_clip);
    opt.set_lr(ctl.lr());
    opt.step(net.params());
    running += lv;
    ++running_n;

    if (step % cfg.val_interval == 0 || step == cfg.max_steps) {
      const double val = eval_val();
      EvalPoint p{step, running / running_n, val, ctl.lr()};
      hist.points.push_back(p);
      running = 0.0;
      running_n = 0;
      auto dec = ctl.observe(val);
      if (dec.improved) {
        hist.best_step = step;
        hist.best_val = val;
        best_params = net.params().snapshot();
      }
      if (dec.stop) {
        stop_reason = "early_stop";
        break;
      }
    }
  }
  hist.stop_reason = stop_reason;
  net.params().load_values(best_params);

  TrainOutput out;
  out.history = hist;
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    out.checkpoint_path = out_dir + "/checkpoint.bin";
    save_checkpoint(out.checkpoint_path, net.params());
    hist.write_csv(out_dir + "/history.csv");
    cfg.write_config(out_dir + "/config.txt");
  }
  return out;
}

namespace {

RefBatchInputs make_ref_batch(const Dataset& ds, const std::vector<int>& rec_idx) {
  const int n = static_cast<int>(rec_idx.size());
  const int L = static_cast<int>(ds.records[static_cast<std::size_t>(rec_idx[0])].ecg.samples.size());
  RefBatchInputs b;
  std::vector<double> xe, xp, sbp, dbp;
  for (int idx : rec_idx) {
    const Record& rec = ds.records[static_cast<std::size_t>(idx)];
    const auto es = prepared_wave(ds, rec, Kind::ECG);
    const auto ps = prepared_wave(ds, rec, Kind::PPG);
    xe.insert(xe.end(), es.begin(), es.end());
    xp.insert(xp.end(), ps.begin(), ps.end());
    sbp.push_back(ds.bounds.to_norm(rec.sbp_mmhg));
    dbp.push_back(ds.bounds.to_norm(rec.dbp_mmhg));
    b.labels.sbp.push_back(rec.sbp_mmhg);
    b.labels.dbp.push_back(rec.dbp_mmhg);
    const PatientProfile* prof = ds.patient(rec.patient_id);
    if (!prof) throw std::runtime_error("train: record references unknown patient");
    b.labels.age.push_back(static_cast<double>(prof->age));
    b.labels.gender.push_back(prof->sex);
    b.pi.push_back(linearize_pi(*prof));
  }
  b.x_ecg = Tensor::from({n, 1, L}, std::move(xe));
  b.x_ppg = Tensor::from({n, 1, L}, std::move(xp));
  b.sbp_norm = Tensor::from({n, 1}, std::move(sbp));
  b.dbp_norm = Tensor::from({n, 1}, std::move(dbp));
  return b;
}

}  // namespace

TrainOutput train_ref(const RunConfig& cfg, const Dataset& ds, const std::string& out_dir,
                      RefineNet& net, RefStage stage, const std::string& init_checkpoint) {
  if (stage == RefStage::Finetune && init_checkpoint.empty() && cfg.require_pretrain)
    throw std::invalid_argument(
        "train-ref: finetune requires a pretraining checkpoint (set require_pretrain=false to "
        "start from scratch)");
  if (!init_checkpoint.empty()) load_checkpoint(init_checkpoint, net.params());

  std::vector<int> train_idx, val_idx;
  if (stage == RefStage::Pretrain) {
    train_idx = ds.record_indices_for_patients(ds.splits.apx_train);
    val_idx = ds.record_indices_for_patients(ds.splits.apx_val);
  } else {
    train_idx = ds.record_indices_for_segments(ds.splits.ft_train);
    val_idx = ds.record_indices_for_segments(ds.splits.ft_val);
  }
  if (train_idx.empty() || val_idx.empty())
    throw std::runtime_error("train-ref: dataset has empty refinement splits");

  const bool with_pi = ds.config.with_pi && cfg.use_pi;

  Rng master(cfg.seed);
  Rng data_rng = master.fork(12);
  Rng model_rng = master.fork(13);
  Rng eval_rng(0);

  RefLossOptions opts;
  opts.include_mae = stage == RefStage::Finetune;
  opts.use_wcl = cfg.use_wcl || stage == RefStage::Pretrain;
  opts.with_pi = with_pi;

  auto batch_loss = [&](const std::vector<int>& idx, bool train, Rng& rng) -> Tensor {
    RefBatchInputs b = make_ref_batch(ds, idx);
    RefLossOptions o = opts;
    o.train = train;
    return ref_loss(net, b, o, rng);
  };

  Adam opt({cfg.lr});
  PlateauController ctl(cfg.scheduler_patience, cfg.early_stop_patience, cfg.lr_factor,
                        cfg.min_lr, cfg.lr);
  TrainHistory hist;
  hist.best_val = 1e300;
  auto best_params = net.params().snapshot();

  std::vector<int> val_fixed(val_idx.begin(),
                             val_idx.begin() + std::min<std::size_t>(val_idx.size(),
                                                                     static_cast<std::size_t>(
                                                                         cfg.val_max_samples)));

  auto eval_val = [&]() {
    const int vb = 32;
    double total = 0.0;
    int count = 0;
    for (std::size_t i = 0; i < val_fixed.size(); i += vb) {
      std::vector<int> chunk(val_fixed.begin() + static_cast<std::ptrdiff_t>(i),
                             val_fixed.begin() +
                                 static_cast<std::ptrdiff_t>(std::min(i + vb, val_fixed.size())));
      if (chunk.size() < 2) break;  // WCL needs pairs
      total += batch_loss(chunk, false, eval_rng).item() * static_cast<double>(chunk.size());
      count += static_cast<int>(chunk.size());
    }
    return count ? total / count : 0.0;
  };

  double running = 0.0;
  int running_n = 0;
  std::string stop_reason = "max_steps";
  for (int step = 1; step <= cfg.max_steps; ++step) {
    std::vector<int> idx;
    idx.reserve(static_cast<std::size_t>(cfg.batch_size));
    for (int i = 0; i < cfg.batch_size; ++i)
      idx.push_back(train_idx[static_cast<std::size_t>(data_rng.next_below(train_idx.size()))]);
    Tensor loss = batch_loss(idx, true, model_rng);
    const double lv = loss.item();
    if (!std::isfinite(lv))
      throw std::runtime_error("train-ref: loss diverged (non-finite) at step " +
                               std::to_string(step));
    running += lv;
    ++running_n;
    if (loss.requires_grad()) {
      backward(loss);
      clip_grad_norm(net.params(), cfg.grad_clip);
      opt.set_lr(ctl.lr());
      opt.step(net.params());
    }

    if (step % cfg.val_interval == 0 || step == cfg.max_steps) {
      const double val = eval_val();
      hist.points.push_back({step, running / running_n, val, ctl.lr()});
      running = 0.0;
      running_n = 0;
      auto dec = ctl.observe(val);
      if (dec.improved) {
        hist.best_step = step;
        hist.best_val = val;
        best_params = net.params().snapshot();
      }
      if (dec.stop) {
        stop_reason = "early_stop";
        break;
      }
    }
  }
  hist.stop_reason = stop_reason;
  net.params().load_values(best_params);

  TrainOutput out;
  out.history = hist;
  if (!out_dir.empty()) {
    ensure_dir(out_dir);
    out.checkpoint_path = out_dir + "/checkpoint.bin";
    save_checkpoint(out.checkpoint_path, net.params());
    hist.write_csv(out_dir + "/history.csv");
    cfg.write_config(out_dir + "/config.txt");
  }
  return out;
}

}  // namespace vsc
