// Command-line front end for the waveform conversion pipeline: synthetic
// dataset generation, two-stage training, conversion, evaluation against the
// clinical standards, and the ablation reports.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>

#include "vsc/ablate.hpp"
#include "vsc/checkpoint.hpp"
#include "vsc/report.hpp"
#include "vsc/train.hpp"

namespace fs = std::filesystem;
using namespace vsc;

namespace {

std::string default_data_dir() {
  const char* env = std::getenv("VSC_DATA_DIR");
  return env ? env : "";
}

RunConfig load_run_config(const std::string& config_path) {
  if (config_path.empty()) return RunConfig::desk();
  return RunConfig::from_config(KvConfig::parse_file(config_path));
}

RunConfig config_from_run_dir(const std::string& run_dir) {
  const std::string path = run_dir + "/config.txt";
  if (!fs::exists(path))
    throw std::runtime_error("run directory has no config.txt: " + run_dir);
  return RunConfig::from_config(KvConfig::parse_file(path));
}

void require_checkpoint(const std::string& run_dir) {
  if (!fs::exists(run_dir + "/checkpoint.bin"))
    throw std::runtime_error("checkpoint missing in run directory: " + run_dir +
                             " (train before evaluating)");
}

std::pair<Kind, Kind> parse_direction(const std::string& s) {
  const auto colon = s.find(':');
  if (colon == std::string::npos)
    throw std::runtime_error("direction must look like SRC:DST, e.g. ECG:ABP");
  const Kind src = kind_from_name(s.substr(0, colon));
  const Kind dst = kind_from_name(s.substr(colon + 1));
  if (src == dst) throw std::runtime_error("direction must have distinct source and target");
  return {src, dst};
}

std::vector<std::pair<Kind, Kind>> parse_directions(const std::string& spec) {
  if (spec.empty() || spec == "all") return all_directions();
  std::vector<std::pair<Kind, Kind>> out;
  std::string cur;
  std::stringstream ss(spec);
  while (std::getline(ss, cur, ',')) out.push_back(parse_direction(cur));
  return out;
}

ApproxNet load_apx(const std::string& run_dir, RunConfig* cfg_out = nullptr) {
  require_checkpoint(run_dir);
  RunConfig cfg = config_from_run_dir(run_dir);
  if (cfg_out) *cfg_out = cfg;
  Rng init(cfg.seed);
  ApproxNet net(cfg.apx, init);
  load_checkpoint(run_dir + "/checkpoint.bin", net.params());
  return net;
}

RefineNet load_refine(const std::string& run_dir, RunConfig* cfg_out = nullptr) {
  require_checkpoint(run_dir);
  RunConfig cfg = config_from_run_dir(run_dir);
  if (cfg_out) *cfg_out = cfg;
  Rng init(cfg.seed);
  RefineNet net(cfg.ref, init);
  load_checkpoint(run_dir + "/checkpoint.bin", net.params());
  return net;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"vital-sign waveform conversion toolkit"};
  app.require_subcommand(1);

  // ---- synth --------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset (or ingest CSV data)");
  int patients = 256, segments = 8;
  std::string synth_out, from_csv;
  std::uint64_t synth_seed = 1;
  double noise = 0.0, fs_hz = 125.0, segment_s = 4.096, test_frac = 0.2;
  bool no_pi = false;
  synth->add_option("--patients", patients, "number of synthetic patients");
  synth->add_option("--segments-per-patient", segments, "segments per patient");
  synth->add_option("--out", synth_out, "output dataset directory")->required();
  synth->add_option("--seed", synth_seed, "master seed");
  synth->add_option("--noise", noise, "additive noise sigma (0 = clean)");
  synth->add_option("--fs", fs_hz, "sampling rate in Hz");
  synth->add_option("--segment-s", segment_s, "segment length in seconds");
  synth->add_option("--test-frac", test_frac, "calibration-free test patient fraction");
  synth->add_flag("--no-pi", no_pi, "blank demographics (datasets without a patient table)");
  synth->add_option("--from-csv", from_csv,
                    "ingest waveforms.csv/patients.csv from this directory instead of synthesizing");
  synth->callback([&] {
    SynthConfig cfg;
    cfg.patients = patients;
    cfg.segments_per_patient = segments;
    cfg.fs = fs_hz;
    cfg.segment_s = segment_s;
    cfg.noise = noise;
    cfg.with_pi = !no_pi;
    cfg.test_frac = test_frac;
    Dataset ds = from_csv.empty() ? generate_dataset(cfg, synth_seed)
                                  : ingest_csv_dataset(from_csv, cfg, synth_seed);
    write_dataset(synth_out, ds);
    std::cout << "dataset written to " << synth_out << " (" << ds.patients.size()
              << " patients, " << ds.records.size() << " records, bounds ["
              << ds.bounds.min_mmhg << ", " << ds.bounds.max_mmhg << "] mmHg)\n";
  });

  // ---- train-apx ------------------------------------------------------------
  auto* tapx = app.add_subcommand("train-apx", "train the multi-directional approximation model");
  std::string data_dir = default_data_dir(), config_path, run_out;
  std::optional<std::uint64_t> seed_override;
  std::optional<int> steps_override, batch_override;
  tapx->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  tapx->add_option("--config", config_path, "run configuration file");
  tapx->add_option("--out", run_out, "run output directory")->required();
  tapx->add_option("--seed", seed_override, "override [run] seed");
  tapx->add_option("--steps", steps_override, "override [run] max_steps");
  tapx->add_option("--batch", batch_override, "override [run] batch_size");
  tapx->callback([&] {
    RunConfig cfg = load_run_config(config_path);
    cfg.stage = "apx";
    if (seed_override) cfg.seed = *seed_override;
    if (steps_override) cfg.max_steps = *steps_override;
    if (batch_override) cfg.batch_size = *batch_override;
    Dataset ds = read_dataset(data_dir);
    Rng init(cfg.seed);
    ApproxNet net(cfg.apx, init);
    TrainOutput out = train_apx(cfg, ds, run_out, net);
    std::cout << "train-apx done: best val " << out.history.best_val << " at step "
              << out.history.best_step << " (" << out.history.stop_reason << "), checkpoint "
              << out.checkpoint_path << "\n";
  });

  // ---- train-ref -------------------------------------------------------------
  auto* tref = app.add_subcommand("train-ref", "train the refinement model (pretrain/finetune)");
  std::string ref_stage = "finetune", init_from;
  tref->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  tref->add_option("--config", config_path, "run configuration file");
  tref->add_option("--stage", ref_stage, "pretrain | finetune")->check(CLI::IsMember({"pretrain", "finetune"}));
  tref->add_option("--out", run_out, "run output directory")->required();
  tref->add_option("--init", init_from,
                   "pretraining run directory or checkpoint file (finetune initialization)");
  tref->add_option("--seed", seed_override, "override [run] seed");
  tref->add_option("--steps", steps_override, "override [run] max_steps");
  tref->add_option("--batch", batch_override, "override [run] batch_size");
  tref->callback([&] {
    RunConfig cfg = load_run_config(config_path);
    cfg.stage = ref_stage == "pretrain" ? "ref-pretrain" : "ref-finetune";
    if (seed_override) cfg.seed = *seed_override;
    if (steps_override) cfg.max_steps = *steps_override;
    if (batch_override) cfg.batch_size = *batch_override;
    Dataset ds = read_dataset(data_dir);
    Rng init(cfg.seed);
    RefineNet net(cfg.ref, init);
    std::string ckpt = init_from;
    if (!ckpt.empty() && fs::is_directory(ckpt)) ckpt += "/checkpoint.bin";
    TrainOutput out = train_ref(cfg, ds, run_out, net,
                                ref_stage == "pretrain" ? RefStage::Pretrain : RefStage::Finetune,
                                ckpt);
    std::cout << "train-ref (" << ref_stage << ") done: best val " << out.history.best_val
              << " at step " << out.history.best_step << ", checkpoint " << out.checkpoint_path
              << "\n";
  });

  // ---- train-uni --------------------------------------------------------------
  auto* tuni = app.add_subcommand("train-uni", "train a single-direction model (ablation)");
  std::string direction = "ECG:ABP";
  tuni->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  tuni->add_option("--config", config_path, "run configuration file");
  tuni->add_option("--direction", direction, "source:target, e.g. ECG:ABP")->required();
  tuni->add_option("--out", run_out, "run output directory")->required();
  tuni->add_option("--seed", seed_override, "override [run] seed");
  tuni->add_option("--steps", steps_override, "override [run] max_steps");
  tuni->callback([&] {
    RunConfig cfg = load_run_config(config_path);
    cfg.stage = "apx";
    if (seed_override) cfg.seed = *seed_override;
    if (steps_override) cfg.max_steps = *steps_override;
    Dataset ds = read_dataset(data_dir);
    const auto dir = parse_direction(direction);
    Rng init(cfg.seed);
    ApproxNet net(cfg.apx, init);
    TrainOutput out = train_apx(cfg, ds, run_out, net, dir);
    std::cout << "train-uni " << direction << " done: best val " << out.history.best_val
              << ", checkpoint " << out.checkpoint_path << "\n";
  });

  // ---- convert -------------------------------------------------------------------
  auto* conv = app.add_subcommand("convert", "convert test-split waveforms and write CSV");
  std::string ckpt_dir, refine_dir, conv_out, source = "PPG", target = "ABP";
  int limit = 0;
  bool no_pi_flag = false;
  conv->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  conv->add_option("--checkpoint", ckpt_dir, "approximation run directory")->required();
  conv->add_option("--source", source, "source waveform kind")->required();
  conv->add_option("--target", target, "target waveform kind")->required();
  conv->add_option("--refine", refine_dir, "refinement run directory (mmHg output for ABP)");
  conv->add_option("--out", conv_out, "output CSV file")->required();
  conv->add_option("--limit", limit, "max segments to convert (0 = all)");
  conv->add_flag("--no-pi", no_pi_flag, "ignore demographics during refinement");
  conv->callback([&] {
    Dataset ds = read_dataset(data_dir);
    ApproxNet apx = load_apx(ckpt_dir);
    std::optional<RefineNet> refine;
    if (!refine_dir.empty()) refine.emplace(load_refine(refine_dir));
    convert_to_csv(ds, apx, refine ? &*refine : nullptr, kind_from_name(source),
                   kind_from_name(target), conv_out, !no_pi_flag, limit);
    std::cout << "converted waveforms written to " << conv_out << "\n";
  });

  // ---- evaluate --------------------------------------------------------------------
  auto* eval = app.add_subcommand("evaluate", "evaluate conversion quality and clinical standards");
  std::vector<std::string> run_dirs;
  std::string eval_refine, eval_out, directions_spec = "all";
  bool eval_no_pi = false;
  eval->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  eval->add_option("--run", run_dirs, "approximation run directory (repeat for multi-seed)")
      ->required();
  eval->add_option("--refine", eval_refine, "refinement run directory (needed for ABP targets)");
  eval->add_option("--directions", directions_spec, "all or comma list like ECG:ABP,PPG:ECG");
  eval->add_option("--out", eval_out, "report output directory")->required();
  eval->add_flag("--no-pi", eval_no_pi, "ignore demographics during refinement");
  eval->callback([&] {
    Dataset ds = read_dataset(data_dir);
    EvalOptions opts;
    opts.directions = parse_directions(directions_spec);
    opts.use_pi = !eval_no_pi;

    std::vector<EvalReport> reports;
    for (const auto& rd : run_dirs) {
      RunConfig rcfg;
      ApproxNet apx = load_apx(rd, &rcfg);
      std::optional<RefineNet> refine;
      if (!eval_refine.empty()) refine.emplace(load_refine(eval_refine));
      EvalReport rep = evaluate_directions(ds, apx, refine ? &*refine : nullptr, opts);
      rep.seed = rcfg.seed;
      rep.dataset_dir = data_dir;
      rep.run_dir = rd;
      const std::string dir =
          run_dirs.size() == 1 ? eval_out : eval_out + "/seed_" + std::to_string(rcfg.seed);
      write_report(dir, rep);
      reports.push_back(std::move(rep));
    }
    if (reports.size() > 1) write_aggregate(eval_out, reports);
    std::cout << "evaluation report written to " << eval_out << "\n";
  });

  // ---- ablate ----------------------------------------------------------------------
  auto* abl = app.add_subcommand("ablate", "run an ablation study and emit comparison tables");
  std::string mode = "multi-vs-uni", abl_out;
  int abl_seeds = 3;
  std::uint64_t abl_seed0 = 1;
  abl->add_option("--mode", mode, "multi-vs-uni | wcl-pi")
      ->check(CLI::IsMember({"multi-vs-uni", "wcl-pi"}));
  abl->add_option("--data", data_dir, "dataset directory")->required(default_data_dir().empty());
  abl->add_option("--config", config_path, "run configuration file for every cell");
  abl->add_option("--out", abl_out, "report output directory")->required();
  abl->add_option("--seeds", abl_seeds, "number of seeds (>= 3 for the published table shape)");
  abl->add_option("--seed0", abl_seed0, "first seed");
  abl->callback([&] {
    Dataset ds = read_dataset(data_dir);
    AblateConfig acfg;
    acfg.run = load_run_config(config_path);
    acfg.seeds = abl_seeds;
    acfg.seed0 = abl_seed0;
    if (mode == "multi-vs-uni")
      ablate_multi_vs_uni(ds, acfg, abl_out);
    else
      ablate_wcl_pi(ds, acfg, abl_out);
    std::cout << "ablation tables written to " << abl_out << "\n";
  });

  // ---- report -----------------------------------------------------------------------
  auto* rep = app.add_subcommand("report", "aggregate evaluation reports across seeds");
  std::vector<std::string> report_inputs;
  std::string report_out;
  rep->add_option("--runs", report_inputs, "report directories or report.json files")->required();
  rep->add_option("--out", report_out, "aggregate output directory")->required();
  rep->callback([&] {
    std::vector<EvalReport> reports;
    for (auto path : report_inputs) {
      if (fs::is_directory(path)) path += "/report.json";
      reports.push_back(load_report(path));
    }
    write_aggregate(report_out, reports);
    std::cout << "aggregate written to " << report_out << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
