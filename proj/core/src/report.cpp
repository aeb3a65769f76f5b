#include "vsc/report.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "vsc/features.hpp"
#include "vsc/train.hpp"

namespace vsc {

namespace {

using json = nlohmann::json;

std::string dir_label(Kind s, Kind d) {
  return std::string(kind_name(s)) + "->" + kind_name(d);
}

struct FeatureAccum {
  double sum_normal = 0.0, sum_abnormal = 0.0;
  int n_normal = 0, n_abnormal = 0;
};

}  // namespace

EvalReport evaluate_directions(const Dataset& ds, ApproxNet& apx, RefineNet* refine,
                               const EvalOptions& opts) {
  EvalReport rep;
  rep.seed = ds.seed;
  auto dirs = opts.directions.empty() ? all_directions() : opts.directions;
  const auto test_idx = ds.record_indices_for_patients(ds.splits.apx_test);
  if (test_idx.empty()) throw std::runtime_error("evaluate: empty test split");
  Rng eval_rng(0);
  const bool with_pi = ds.config.with_pi && opts.use_pi;

  for (auto [src, dst] : dirs) {
    DirectionEval de;
    de.src = src;
    de.dst = dst;
    if (dst == Kind::ABP && refine == nullptr)
      throw std::runtime_error("evaluate: ABP target requires a refinement checkpoint (--refine)");

    double mae_sum = 0.0, pc_sum = 0.0;
    int pc_n = 0;
    std::map<std::string, FeatureAccum> feats;
    std::vector<ErrorSample> bp_errors;
    std::vector<double> abs_sbp, abs_map, abs_dbp;
    std::set<int> bp_patients;

    for (std::size_t start = 0; start < test_idx.size();
         start += static_cast<std::size_t>(opts.batch)) {
      std::vector<DirectedSample> chunk;
      for (std::size_t i = start;
           i < std::min(start + static_cast<std::size_t>(opts.batch), test_idx.size()); ++i)
        chunk.push_back({test_idx[i], src, dst});
      ApxBatch b = make_apx_batch(ds, chunk);
      Tensor pred = apx.forward(b.x, b.d, /*train=*/false, eval_rng);
      const int L = pred.dim(2);

      Tensor bp;  // (N,2) when refining
      std::vector<std::string> pi_texts;
      if (dst == Kind::ABP) {
        Tensor e_w = refine->encode_waveform(b.x, src, /*train=*/false, eval_rng);
        Tensor e_pi;
        if (with_pi) {
          for (const auto& s : chunk) {
            const PatientProfile* p = ds.patient(
                ds.records[static_cast<std::size_t>(s.record_index)].patient_id);
            pi_texts.push_back(linearize_pi(*p));
          }
          e_pi = refine->encode_pi(pi_texts, /*train=*/false, eval_rng);
        } else {
          e_pi = refine->null_pi(static_cast<int>(chunk.size()));
        }
        bp = refine->predict_bp(e_w, e_pi, src);
      }

      for (std::size_t i = 0; i < chunk.size(); ++i) {
        const Record& rec = ds.records[static_cast<std::size_t>(chunk[i].record_index)];
        std::vector<double> phat(
            pred.data().begin() + static_cast<std::ptrdiff_t>(i * static_cast<std::size_t>(L)),
            pred.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * static_cast<std::size_t>(L)));

        std::vector<double> pred_eval, true_eval;
        Unit feat_unit = Unit::LocalNorm;
        if (dst != Kind::ABP) {
          pred_eval = phat;
          true_eval = prepared_wave(ds, rec, dst);
        } else {
          const double sbp_n = bp.data()[i * 2];
          const double dbp_n = bp.data()[i * 2 + 1];
          if (sbp_n <= dbp_n) {
            ++de.invalid_bp;
            continue;
          }
          Waveform y_apx;
          y_apx.kind = Kind::ABP;
          y_apx.unit = Unit::LocalNorm;
          y_apx.fs = ds.config.fs;
          y_apx.samples = phat;
          for (auto& v : y_apx.samples) v = std::clamp(v, 0.0, 1.0);
          const BPEstimate est = make_bp_estimate(sbp_n, dbp_n, ds.bounds);
          Waveform gen = rescale_abp(y_apx, est, ds.bounds);
          pred_eval = gen.samples;
          true_eval = rec.abp.samples;
          feat_unit = Unit::MmHg;

          AbpFeatures gf = abp_features(gen);
          if (gf.ok) {
            bp_errors.push_back({rec.patient_id, Measure::SBP, gf.sbp - rec.sbp_mmhg});
            bp_errors.push_back({rec.patient_id, Measure::MAP, gf.map - rec.map_mmhg});
            bp_errors.push_back({rec.patient_id, Measure::DBP, gf.dbp - rec.dbp_mmhg});
            abs_sbp.push_back(std::fabs(gf.sbp - rec.sbp_mmhg));
            abs_map.push_back(std::fabs(gf.map - rec.map_mmhg));
            abs_dbp.push_back(std::fabs(gf.dbp - rec.dbp_mmhg));
            bp_patients.insert(rec.patient_id);
          }
        }

        mae_sum += mae(pred_eval, true_eval);
        try {
          pc_sum += pearson(pred_eval, true_eval);
          ++pc_n;
        } catch (const std::invalid_argument&) {
          // constant prediction or target: PC undefined for this segment
        }
        ++de.n_segments;

        const auto pf = extract_features(pred_eval, dst, ds.config.fs, feat_unit);
        const auto tf = extract_features(true_eval, dst, ds.config.fs, feat_unit);
        for (std::size_t fi = 0; fi < pf.size() && fi < tf.size(); ++fi) {
          if (!pf[fi].available || !tf[fi].available || tf[fi].value == 0.0) continue;
          const double rel = relative_error(pf[fi].value, tf[fi].value);
          auto& acc = feats[tf[fi].name];
          if (tf[fi].subgroup == Subgroup::Normal) {
            acc.sum_normal += rel;
            ++acc.n_normal;
          } else {
            acc.sum_abnormal += rel;
            ++acc.n_abnormal;
          }
        }
      }
    }

    if (de.n_segments > 0) de.mae_value = mae_sum / de.n_segments;
    if (pc_n > 0) de.pc_value = pc_sum / pc_n;
    for (const auto& [name, acc] : feats) {
      FeatureAgg fa;
      fa.name = name;
      fa.n_normal = acc.n_normal;
      fa.n_abnormal = acc.n_abnormal;
      if (acc.n_normal) fa.rel_normal = acc.sum_normal / acc.n_normal;
      if (acc.n_abnormal) fa.rel_abnormal = acc.sum_abnormal / acc.n_abnormal;
      de.features.push_back(fa);
    }
    if (dst == Kind::ABP && !bp_errors.empty()) {
      de.has_bp = true;
      de.aami_result = aami(bp_errors, static_cast<int>(bp_patients.size()));
      de.bhs_result = bhs(abs_sbp, abs_map, abs_dbp);
    }
    rep.directions.push_back(std::move(de));
  }
  return rep;
}

DirectionBaselines compute_baselines(const Dataset& ds, Kind src, Kind dst) {
  const auto test_idx = ds.record_indices_for_patients(ds.splits.apx_test);
  const auto train_idx = ds.record_indices_for_patients(ds.splits.apx_train);
  if (test_idx.empty() || train_idx.empty())
    throw std::runtime_error("baselines: dataset has empty splits");

  std::vector<double> mean_wave;
  for (int idx : train_idx) {
    const auto y = prepared_wave(ds, ds.records[static_cast<std::size_t>(idx)], dst);
    if (mean_wave.empty()) mean_wave.assign(y.size(), 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) mean_wave[i] += y[i];
  }
  for (auto& v : mean_wave) v /= static_cast<double>(train_idx.size());

  DirectionBaselines b;
  for (int idx : test_idx) {
    const Record& rec = ds.records[static_cast<std::size_t>(idx)];
    const auto x = prepared_wave(ds, rec, src);
    const auto y = prepared_wave(ds, rec, dst);
    b.identity_mae += mae(x, y);
    b.mean_wave_mae += mae(mean_wave, y);
  }
  b.identity_mae /= static_cast<double>(test_idx.size());
  b.mean_wave_mae /= static_cast<double>(test_idx.size());
  return b;
}

// ---- serialization -----------------------------------------------------------

namespace {

json direction_to_json(const DirectionEval& d) {
  json j;
  j["src"] = kind_name(d.src);
  j["dst"] = kind_name(d.dst);
  j["n_segments"] = d.n_segments;
  j["mae"] = d.mae_value;
  j["pc"] = d.pc_value;
  j["invalid_bp"] = d.invalid_bp;
  json feats = json::array();
  for (const auto& f : d.features) {
    feats.push_back({{"name", f.name},
                     {"rel_normal", f.rel_normal},
                     {"rel_abnormal", f.rel_abnormal},
                     {"n_normal", f.n_normal},
                     {"n_abnormal", f.n_abnormal}});
  }
  j["features"] = feats;
  j["has_bp"] = d.has_bp;
  if (d.has_bp) {
    j["aami"] = {{"pass", d.aami_result.pass},
                 {"subjects", d.aami_result.subjects},
                 {"sbp_me", d.aami_result.sbp.me},
                 {"sbp_sd", d.aami_result.sbp.sd},
                 {"map_me", d.aami_result.map.me},
                 {"map_sd", d.aami_result.map.sd},
                 {"dbp_me", d.aami_result.dbp.me},
                 {"dbp_sd", d.aami_result.dbp.sd}};
    j["bhs"] = {{"overall", std::string(1, d.bhs_result.overall)},
                {"sbp", {d.bhs_result.sbp.cum5, d.bhs_result.sbp.cum10, d.bhs_result.sbp.cum15,
                         std::string(1, d.bhs_result.sbp.grade)}},
                {"map", {d.bhs_result.map.cum5, d.bhs_result.map.cum10, d.bhs_result.map.cum15,
                         std::string(1, d.bhs_result.map.grade)}},
                {"dbp", {d.bhs_result.dbp.cum5, d.bhs_result.dbp.cum10, d.bhs_result.dbp.cum15,
                         std::string(1, d.bhs_result.dbp.grade)}}};
  }
  return j;
}

DirectionEval direction_from_json(const json& j) {
  DirectionEval d;
  d.src = kind_from_name(j.at("src").get<std::string>());
  d.dst = kind_from_name(j.at("dst").get<std::string>());
  d.n_segments = j.at("n_segments").get<int>();
  d.mae_value = j.at("mae").get<double>();
  d.pc_value = j.at("pc").get<double>();
  d.invalid_bp = j.value("invalid_bp", 0);
  for (const auto& fj : j.at("features")) {
    FeatureAgg f;
    f.name = fj.at("name").get<std::string>();
    f.rel_normal = fj.at("rel_normal").get<double>();
    f.rel_abnormal = fj.at("rel_abnormal").get<double>();
    f.n_normal = fj.at("n_normal").get<int>();
    f.n_abnormal = fj.at("n_abnormal").get<int>();
    d.features.push_back(f);
  }
  d.has_bp = j.at("has_bp").get<bool>();
  if (d.has_bp) {
    const auto& a = j.at("aami");
    d.aami_result.pass = a.at("pass").get<bool>();
    d.aami_result.subjects = a.at("subjects").get<int>();
    d.aami_result.sbp = {a.at("sbp_me").get<double>(), a.at("sbp_sd").get<double>(), 0};
    d.aami_result.map = {a.at("map_me").get<double>(), a.at("map_sd").get<double>(), 0};
    d.aami_result.dbp = {a.at("dbp_me").get<double>(), a.at("dbp_sd").get<double>(), 0};
    const auto& bh = j.at("bhs");
    auto get_m = [&](const char* key) {
      const auto& v = bh.at(key);
      BHSMeasure m;
      m.cum5 = v.at(0).get<double>();
      m.cum10 = v.at(1).get<double>();
      m.cum15 = v.at(2).get<double>();
      m.grade = v.at(3).get<std::string>().at(0);
      return m;
    };
    d.bhs_result.sbp = get_m("sbp");
    d.bhs_result.map = get_m("map");
    d.bhs_result.dbp = get_m("dbp");
    d.bhs_result.overall = bh.at("overall").get<std::string>().at(0);
  }
  return d;
}

// Minimal grouped bar chart. Categories along x, one colored bar per series.
void svg_bar_chart(const std::string& path, const std::string& title,
                   const std::vector<std::string>& categories,
                   const std::vector<std::pair<std::string, std::vector<double>>>& series,
                   const std::string& y_label) {
  const int W = 760, H = 360, ml = 70, mr = 20, mt = 44, mb = 70;
  const int pw = W - ml - mr, ph = H - mt - mb;
  double vmax = 1e-12;
  for (const auto& s : series)
    for (double v : s.second) vmax = std::max(vmax, v);
  vmax *= 1.12;

  const char* palette[] = {"#a63d40", "#e9b872", "#6494aa", "#90a959", "#7d6b91", "#aa6f73"};
  std::ofstream os(path, std::ios::trunc);
  os << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  os << "<rect width='100%' height='100%' fill='white'/>\n";
  os << "<text x='" << W / 2 << "' y='22' font-size='15' text-anchor='middle' font-family='sans-serif'>"
     << title << "</text>\n";
  os << "<text x='16' y='" << mt + ph / 2
     << "' font-size='12' text-anchor='middle' font-family='sans-serif' transform='rotate(-90 16 "
     << mt + ph / 2 << ")'>" << y_label << "</text>\n";
  // y axis + gridlines
  for (int g = 0; g <= 4; ++g) {
    const double v = vmax * g / 4.0;
    const int y = mt + ph - static_cast<int>(ph * g / 4.0);
    os << "<line x1='" << ml << "' y1='" << y << "' x2='" << ml + pw << "' y2='" << y
       << "' stroke='#dddddd'/>\n";
    std::ostringstream lab;
    lab.precision(3);
    lab << v;
    os << "<text x='" << ml - 6 << "' y='" << y + 4
       << "' font-size='10' text-anchor='end' font-family='sans-serif'>" << lab.str()
       << "</text>\n";
  }
  const int nc = static_cast<int>(categories.size());
  const int ns = static_cast<int>(series.size());
  const double group_w = static_cast<double>(pw) / std::max(1, nc);
  const double bar_w = group_w * 0.8 / std::max(1, ns);
  for (int c = 0; c < nc; ++c) {
    for (int s = 0; s < ns; ++s) {
      const double v = series[static_cast<std::size_t>(s)].second[static_cast<std::size_t>(c)];
      const int bh = static_cast<int>(ph * std::max(0.0, v) / vmax);
      const double x = ml + c * group_w + group_w * 0.1 + s * bar_w;
      os << "<rect x='" << x << "' y='" << mt + ph - bh << "' width='" << bar_w * 0.92
         << "' height='" << bh << "' fill='" << palette[s % 6] << "'/>\n";
    }
    os << "<text x='" << ml + c * group_w + group_w / 2 << "' y='" << mt + ph + 16
       << "' font-size='10' text-anchor='middle' font-family='sans-serif'>"
       << categories[static_cast<std::size_t>(c)] << "</text>\n";
  }
  // legend
  for (int s = 0; s < ns; ++s) {
    const int lx = ml + 10 + s * 150, ly = H - 24;
    os << "<rect x='" << lx << "' y='" << ly - 10 << "' width='12' height='12' fill='"
       << palette[s % 6] << "'/>\n";
    os << "<text x='" << lx + 18 << "' y='" << ly
       << "' font-size='11' font-family='sans-serif'>" << series[static_cast<std::size_t>(s)].first
       << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace

void write_report(const std::string& dir, const EvalReport& rep) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json j;
  j["format"] = "vsc-eval-report";
  j["version"] = 1;
  j["seed"] = rep.seed;
  j["dataset"] = rep.dataset_dir;
  j["run"] = rep.run_dir;
  json dirs = json::array();
  for (const auto& d : rep.directions) dirs.push_back(direction_to_json(d));
  j["directions"] = dirs;
  std::ofstream jf(dir + "/report.json", std::ios::trunc);
  jf << j.dump(1) << "\n";

  std::ofstream mc(dir + "/metrics.csv", std::ios::trunc);
  mc << "direction,n_segments,mae,pc,aami,bhs\n";
  mc.precision(10);
  for (const auto& d : rep.directions) {
    mc << dir_label(d.src, d.dst) << "," << d.n_segments << "," << d.mae_value << ","
       << d.pc_value << ",";
    if (d.has_bp)
      mc << (d.aami_result.pass ? "Pass" : "Fail") << "," << d.bhs_result.overall;
    else
      mc << ",";
    mc << "\n";
  }

  std::ofstream fc(dir + "/features.csv", std::ios::trunc);
  fc << "direction,feature,subgroup,mean_relative_error,n\n";
  fc.precision(10);
  for (const auto& d : rep.directions) {
    for (const auto& f : d.features) {
      fc << dir_label(d.src, d.dst) << "," << f.name << ",normal," << f.rel_normal << ","
         << f.n_normal << "\n";
      fc << dir_label(d.src, d.dst) << "," << f.name << ",abnormal," << f.rel_abnormal << ","
         << f.n_abnormal << "\n";
    }
  }

  std::ofstream tf(dir + "/report.txt", std::ios::trunc);
  tf << "Waveform conversion evaluation (seed " << rep.seed << ")\n";
  tf << "dataset: " << rep.dataset_dir << "\nrun:     " << rep.run_dir << "\n\n";
  for (const auto& d : rep.directions) {
    tf << dir_label(d.src, d.dst) << ": MAE=" << d.mae_value
       << (d.dst == Kind::ABP ? " mmHg" : " (norm)") << "  PC=" << d.pc_value
       << "  n=" << d.n_segments << "\n";
    for (const auto& f : d.features) {
      tf << "    " << f.name << " rel.err normal=" << f.rel_normal << " (n=" << f.n_normal
         << ") abnormal=" << f.rel_abnormal << " (n=" << f.n_abnormal << ")\n";
    }
    if (d.has_bp) {
      const auto& a = d.aami_result;
      tf << "    AAMI: " << (a.pass ? "Pass" : "Fail") << "  SBP ME=" << a.sbp.me
         << " SD=" << a.sbp.sd << "; MAP ME=" << a.map.me << " SD=" << a.map.sd
         << "; DBP ME=" << a.dbp.me << " SD=" << a.dbp.sd << "; subjects=" << a.subjects << "\n";
      const auto& bg = d.bhs_result;
      tf << "    BHS:  overall " << bg.overall << "  SBP " << bg.sbp.cum5 << "/" << bg.sbp.cum10
         << "/" << bg.sbp.cum15 << "% (" << bg.sbp.grade << ")  MAP " << bg.map.cum5 << "/"
         << bg.map.cum10 << "/" << bg.map.cum15 << "% (" << bg.map.grade << ")  DBP "
         << bg.dbp.cum5 << "/" << bg.dbp.cum10 << "/" << bg.dbp.cum15 << "% (" << bg.dbp.grade
         << ")\n";
    }
    if (d.invalid_bp) tf << "    segments skipped (SBP<=DBP prediction): " << d.invalid_bp << "\n";
  }

  // Charts: MAE and PC per direction; BHS cumulative bars for ABP targets.
  std::vector<std::string> cats;
  std::vector<double> maes, pcs;
  for (const auto& d : rep.directions) {
    cats.push_back(dir_label(d.src, d.dst));
    maes.push_back(d.mae_value);
    pcs.push_back(d.pc_value);
  }
  svg_bar_chart(dir + "/mae.svg", "Mean absolute error per conversion direction", cats,
                {{"MAE", maes}}, "MAE");
  svg_bar_chart(dir + "/pc.svg", "Pearson correlation per conversion direction", cats,
                {{"PC", pcs}}, "PC");

  std::vector<std::string> bhs_cats;
  std::vector<double> c5, c10, c15;
  for (const auto& d : rep.directions) {
    if (!d.has_bp) continue;
    for (const auto& [label, m] :
         std::initializer_list<std::pair<std::string, const BHSMeasure*>>{
             {"SBP", &d.bhs_result.sbp}, {"MAP", &d.bhs_result.map}, {"DBP", &d.bhs_result.dbp}}) {
      bhs_cats.push_back(dir_label(d.src, d.dst) + " " + label);
      c5.push_back(m->cum5);
      c10.push_back(m->cum10);
      c15.push_back(m->cum15);
    }
  }
  if (!bhs_cats.empty()) {
    svg_bar_chart(dir + "/bhs.svg", "BHS cumulative error percentages", bhs_cats,
                  {{"<=5 mmHg", c5}, {"<=10 mmHg", c10}, {"<=15 mmHg", c15}}, "% of segments");
  }
}

EvalReport load_report(const std::string& json_path) {
  std::ifstream is(json_path);
  if (!is) throw std::runtime_error("report: cannot open " + json_path);
  json j = json::parse(is);
  if (j.value("format", "") != "vsc-eval-report")
    throw std::runtime_error("report: not an evaluation report: " + json_path);
  EvalReport rep;
  rep.seed = j.at("seed").get<std::uint64_t>();
  rep.dataset_dir = j.value("dataset", "");
  rep.run_dir = j.value("run", "");
  for (const auto& dj : j.at("directions")) rep.directions.push_back(direction_from_json(dj));
  return rep;
}

void write_aggregate(const std::string& dir, const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate: no reports given");
  namespace fs = std::filesystem;
  fs::create_directories(dir);
  std::ofstream os(dir + "/aggregate.csv", std::ios::trunc);
  os << "direction,metric,mean,sd,n_runs\n";
  os.precision(10);
  std::ofstream ts(dir + "/aggregate.txt", std::ios::trunc);
  ts << "Aggregate over " << reports.size() << " runs (mean +/- SD)\n\n";

  for (auto [src, dst] : all_directions()) {
    std::vector<double> maes, pcs;
    for (const auto& r : reports) {
      for (const auto& d : r.directions) {
        if (d.src == src && d.dst == dst) {
          maes.push_back(d.mae_value);
          pcs.push_back(d.pc_value);
        }
      }
    }
    if (maes.empty()) continue;
    auto stat = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
      double s = 0.0;
      for (double x : v) s += (x - m) * (x - m);
      return std::make_pair(m, std::sqrt(s / static_cast<double>(v.size())));
    };
    const auto [mm, ms] = stat(maes);
    const auto [pm, ps] = stat(pcs);
    os << dir_label(src, dst) << ",mae," << mm << "," << ms << "," << maes.size() << "\n";
    os << dir_label(src, dst) << ",pc," << pm << "," << ps << "," << pcs.size() << "\n";
    ts << dir_label(src, dst) << ": MAE " << mm << " +/- " << ms << ", PC " << pm << " +/- " << ps
       << " (n=" << maes.size() << ")\n";
  }
}

void convert_to_csv(const Dataset& ds, ApproxNet& apx, RefineNet* refine, Kind src, Kind dst,
                    const std::string& out_file, bool use_pi, int limit) {
  const auto test_idx = ds.record_indices_for_patients(ds.splits.apx_test);
  if (test_idx.empty()) throw std::runtime_error("convert: empty test split");
  Rng eval_rng(0);
  const bool with_pi = ds.config.with_pi && use_pi;

  std::ofstream os(out_file, std::ios::trunc);
  if (!os) throw std::runtime_error("convert: cannot write " + out_file);
  os << "patient_id,segment_id,unit,samples...\n";
  os.precision(10);

  int done = 0;
  for (int idx : test_idx) {
    if (limit > 0 && done >= limit) break;
    const Record& rec = ds.records[static_cast<std::size_t>(idx)];
    std::vector<DirectedSample> one{{idx, src, dst}};
    ApxBatch b = make_apx_batch(ds, one);
    Tensor pred = apx.forward(b.x, b.d, /*train=*/false, eval_rng);
    std::vector<double> out_samples = pred.data();
    std::string unit = "norm";
    if (dst == Kind::ABP && refine) {
      Tensor e_w = refine->encode_waveform(b.x, src, false, eval_rng);
      Tensor e_pi;
      if (with_pi) {
        const PatientProfile* p = ds.patient(rec.patient_id);
        e_pi = refine->encode_pi({linearize_pi(*p)}, false, eval_rng);
      } else {
        e_pi = refine->null_pi(1);
      }
      Tensor bp = refine->predict_bp(e_w, e_pi, src);
      const double sbp_n = bp.data()[0], dbp_n = bp.data()[1];
      if (sbp_n > dbp_n) {
        Waveform y_apx{Kind::ABP, Unit::LocalNorm, ds.config.fs, out_samples};
        for (auto& v : y_apx.samples) v = std::clamp(v, 0.0, 1.0);
        out_samples = rescale_abp(y_apx, make_bp_estimate(sbp_n, dbp_n, ds.bounds), ds.bounds)
                          .samples;
        unit = "mmHg";
      } else {
        unit = "norm(invalid-bp)";
      }
    }
    os << rec.patient_id << "," << rec.segment_id << "," << unit;
    for (double v : out_samples) os << "," << v;
    os << "\n";
    ++done;
  }
}

}  // namespace vsc
