#include "vsc/synth.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace vsc {

namespace {

using json = nlohmann::json;

double gauss(double t, double amp, double center, double sigma) {
  const double z = (t - center) / sigma;
  return amp * std::exp(-0.5 * z * z);
}

double ecg_template_value(const EcgTemplate& e, double t) {
  return gauss(t, e.p_amp, e.p_center, e.p_sigma) + gauss(t, e.q_amp, e.q_center, e.q_sigma) +
         gauss(t, e.r_amp, 0.0, e.r_sigma) + gauss(t, e.s_amp, e.s_center, e.s_sigma) +
         gauss(t, e.t_amp, e.t_center, e.t_sigma);
}

// QT of the analytic single-beat template, measured with the same geometric
// definitions the feature extractor uses (max-negative-slope onset, tangent
// T-end) on an 8x oversampled grid. This is the generator-side truth the
// extractor is validated against.
double template_qt_seconds(const EcgTemplate& e, double fs) {
  const double dt = 1.0 / (8.0 * fs);
  auto deriv = [&](double t) {
    return (ecg_template_value(e, t + dt) - ecg_template_value(e, t - dt)) / (2.0 * dt);
  };
  // QRS onset: steepest negative slope in the 120 ms window before R.
  double t_on = -0.12, best = deriv(-0.12);
  for (double t = -0.12; t <= 0.0; t += dt) {
    const double d = deriv(t);
    if (d < best) {
      best = d;
      t_on = t;
    }
  }
  // T end: tangent through the steepest T downslope, intersected with baseline 0.
  const double t0 = e.t_center, t1 = e.t_center + 3.0 * e.t_sigma;
  double t_m = t0, dm = deriv(t0);
  for (double t = t0; t <= t1; t += dt) {
    const double d = deriv(t);
    if (d < dm) {
      dm = d;
      t_m = t;
    }
  }
  if (dm >= 0.0) return 0.0;
  const double v = ecg_template_value(e, t_m);
  const double t_end = t_m - v / dm;
  return t_end - t_on;
}

}  // namespace

PatientProfile generate_patient(int patient_id, Rng& rng) {
  PatientProfile p;
  p.patient_id = patient_id;
  p.age = rng.randint(20, 90);
  p.sex = rng.bernoulli(0.5) ? 'F' : 'M';
  p.heart_rate_bpm = std::clamp(rng.normal(76.0, 14.0), 45.0, 140.0);
  // Population couplings: HR, SBP and PTT are correlated so that normalized
  // source waveforms carry recoverable blood-pressure information.
  p.sbp_mmhg = std::clamp(112.0 + 0.45 * (p.heart_rate_bpm - 75.0) + rng.normal(0.0, 15.0),
                          80.0, 185.0);
  p.dbp_mmhg = std::clamp(0.53 * p.sbp_mmhg + 8.0 + rng.normal(0.0, 5.0), 45.0, 110.0);
  if (p.sbp_mmhg - p.dbp_mmhg < 15.0) p.dbp_mmhg = p.sbp_mmhg - 15.0;
  p.ptt_ms = std::clamp(300.0 - 1.1 * (p.sbp_mmhg - 110.0) + rng.normal(0.0, 10.0), 160.0, 420.0);

  if (rng.uniform() < 0.85) p.height_cm = std::clamp(rng.normal(169.0, 9.0), 145.0, 198.0);
  if (rng.uniform() < 0.85) p.weight_kg = std::clamp(rng.normal(72.0, 14.0), 40.0, 140.0);
  if (p.height_cm && p.weight_kg) {
    const double h_m = *p.height_cm / 100.0;
    p.bmi = *p.weight_kg / (h_m * h_m);
  }

  EcgTemplate& e = p.ecg;
  e.p_amp = 0.08 * rng.uniform(0.8, 1.2);
  e.p_center = -0.16 * rng.uniform(0.95, 1.05);
  e.p_sigma = 0.024;
  e.q_amp = -0.09 * rng.uniform(0.8, 1.2);
  e.q_center = -0.035;
  e.q_sigma = 0.010;
  e.r_amp = 1.0;
  e.r_sigma = 0.012;
  e.s_amp = -0.14 * rng.uniform(0.8, 1.2);
  e.s_center = 0.035;
  e.s_sigma = 0.011;
  e.t_amp = 0.26 * rng.uniform(0.8, 1.2);
  e.t_sigma = rng.uniform(0.032, 0.044);
  // Steer the template so QTc spans the normal range and both abnormal sides.
  const double rr_mean = 60.0 / p.heart_rate_bpm;
  const double qtc_base = rng.uniform(0.33, 0.50);
  const double qt_target =
      std::clamp(qtc_base * std::sqrt(rr_mean), 0.22, std::min(0.47, 0.62 * rr_mean));
  e.t_center = std::max(0.09, qt_target - 0.045 - 2.0 * e.t_sigma);

  p.abp_rise_frac = rng.uniform(0.11, 0.16);
  p.abp_decay_frac = rng.uniform(0.13, 0.17);
  p.abp_notch_amp = rng.uniform(0.08, 0.16);
  p.abp_notch_delay_frac = rng.uniform(0.18, 0.25);
  p.ppg_rise_s = std::min(rng.uniform(0.26, 0.50), 0.52 * rr_mean);
  p.ppg_decay_frac = rng.uniform(0.18, 0.24);
  p.ppg_wave_amp = rng.uniform(0.12, 0.26);
  return p;
}

namespace {

// Foot-to-peak pulse rendered on the integer sample grid: the onset sample is
// the exact per-beat minimum and the peak sample the exact maximum, so stored
// annotations agree with the rendered array to the sample.
struct PulseParams {
  int rise_samples;
  double decay_samples;
  double bump_amp;      // dicrotic notch / diastolic wave
  double bump_center;   // samples after onset
  double bump_sigma;    // samples
};

double pulse_value(const PulseParams& pp, int tau, double foot) {
  double v;
  if (tau <= pp.rise_samples) {
    const double s = std::sin(0.5 * M_PI * static_cast<double>(tau) / pp.rise_samples);
    v = foot + (1.0 - foot) * s * s;
  } else {
    v = std::exp(-(tau - pp.rise_samples) / pp.decay_samples);
  }
  if (pp.bump_amp != 0.0 && tau > pp.rise_samples) {
    const double z = (tau - pp.bump_center) / pp.bump_sigma;
    v += pp.bump_amp * std::exp(-0.5 * z * z);
  }
  return v;
}

}  // namespace

Record synthesize_record(const PatientProfile& p, int segment_id, double segment_s, double fs,
                         double noise, Rng& rng) {
  const int L = static_cast<int>(fs * segment_s + 0.5);
  Record rec;
  rec.patient_id = p.patient_id;
  rec.segment_id = segment_id;
  rec.sbp_mmhg = std::clamp(p.sbp_mmhg + rng.normal(0.0, 2.0), 60.0, 200.0);
  rec.dbp_mmhg = std::clamp(p.dbp_mmhg + rng.normal(0.0, 2.0), 35.0, rec.sbp_mmhg - 12.0);
  rec.map_mmhg = mean_arterial_pressure(rec.sbp_mmhg, rec.dbp_mmhg);

  const double hr = std::clamp(p.heart_rate_bpm + rng.normal(0.0, 2.0), 40.0, 150.0);
  const double rr_mean = 60.0 / hr;

  // Beat times cover the segment with margin on both sides.
  std::vector<double> beat_t;
  double t = -2.5 * rr_mean + rng.uniform(0.0, rr_mean);
  while (t < segment_s + 2.5 * rr_mean) {
    beat_t.push_back(t);
    t += rr_mean * (1.0 + rng.uniform(-0.05, 0.05));
  }

  // ---- ECG: sum of Gaussian bumps around each R time -------------------
  rec.ecg.kind = Kind::ECG;
  rec.ecg.unit = Unit::Raw;
  rec.ecg.fs = fs;
  rec.ecg.samples.assign(static_cast<std::size_t>(L), 0.0);
  const double win = 0.6;
  for (double tb : beat_t) {
    const int i0 = std::max(0, static_cast<int>((tb - win) * fs));
    const int i1 = std::min(L - 1, static_cast<int>((tb + win) * fs));
    for (int i = i0; i <= i1; ++i) {
      rec.ecg.samples[static_cast<std::size_t>(i)] +=
          ecg_template_value(p.ecg, i / fs - tb);
    }
  }

  // R-peak and RR ground truth (pre-noise).
  std::vector<int> r_nominal;
  for (std::size_t k = 0; k < beat_t.size(); ++k) {
    const int idx = static_cast<int>(std::lround(beat_t[k] * fs));
    if (idx < 0 || idx >= L) continue;
    int best = std::max(0, idx - 3);
    for (int i = best; i <= std::min(L - 1, idx + 3); ++i) {
      if (rec.ecg.samples[static_cast<std::size_t>(i)] >
          rec.ecg.samples[static_cast<std::size_t>(best)])
        best = i;
    }
    rec.r_peaks.push_back(best);
    r_nominal.push_back(idx);
  }
  for (std::size_t k = 0; k + 1 < beat_t.size(); ++k) {
    const int a = static_cast<int>(std::lround(beat_t[k] * fs));
    const int b = static_cast<int>(std::lround(beat_t[k + 1] * fs));
    if (a >= 0 && b < L) rec.rr_s.push_back(beat_t[k + 1] - beat_t[k]);
  }
  rec.qt_s = template_qt_seconds(p.ecg, fs);
  const double rr_for_qtc =
      rec.rr_s.empty() ? rr_mean
                       : std::accumulate(rec.rr_s.begin(), rec.rr_s.end(), 0.0) /
                             static_cast<double>(rec.rr_s.size());
  rec.qtc_s = rec.qt_s / std::sqrt(rr_for_qtc);

  // ---- ABP: foot-to-peak pulses, rescaled exactly to [DBP, SBP] ---------
  rec.abp.kind = Kind::ABP;
  rec.abp.unit = Unit::MmHg;
  rec.abp.fs = fs;
  rec.abp.samples.assign(static_cast<std::size_t>(L), 0.0);
  const int abp_delay = static_cast<int>(std::lround(0.10 * fs));
  std::vector<int> abp_onsets;
  for (double tb : beat_t) abp_onsets.push_back(static_cast<int>(std::lround(tb * fs)) + abp_delay);

  auto render_pulses = [&](std::vector<double>& out, const std::vector<int>& onsets,
                           auto make_params) {
    double foot = 0.0;
    bool have_foot = false;
    for (std::size_t k = 0; k + 1 < onsets.size(); ++k) {
      const int o = onsets[k], o_next = onsets[k + 1];
      const int beat_len = o_next - o;
      if (beat_len <= 2) continue;
      PulseParams pp = make_params(beat_len);
      if (!have_foot) {
        foot = pulse_value(pp, beat_len, 0.0);
        have_foot = true;
      }
      const double this_foot = foot;
      for (int tau = 0; tau < beat_len; ++tau) {
        const int i = o + tau;
        if (i < 0 || i >= L) continue;
        out[static_cast<std::size_t>(i)] = pulse_value(pp, tau, this_foot);
      }
      foot = pulse_value(pp, beat_len, this_foot);
    }
  };

  render_pulses(rec.abp.samples, abp_onsets, [&](int beat_len) {
    PulseParams pp;
    pp.rise_samples = std::max(2, static_cast<int>(std::lround(p.abp_rise_frac * beat_len)));
    pp.decay_samples = p.abp_decay_frac * beat_len;
    pp.bump_amp = p.abp_notch_amp;
    pp.bump_center = pp.rise_samples + p.abp_notch_delay_frac * beat_len;
    pp.bump_sigma = 0.025 * beat_len;
    return pp;
  });
  {
    auto [mn_it, mx_it] = std::minmax_element(rec.abp.samples.begin(), rec.abp.samples.end());
    const double mn = *mn_it, mx = *mx_it;
    const double scale = (rec.sbp_mmhg - rec.dbp_mmhg) / (mx - mn);
    for (auto& v : rec.abp.samples) v = rec.dbp_mmhg + (v - mn) * scale;
  }

  // ---- PPG: delayed pulse train; peak lags the R peak by PTT exactly ----
  rec.ppg.kind = Kind::PPG;
  rec.ppg.unit = Unit::Raw;
  rec.ppg.fs = fs;
  rec.ppg.samples.assign(static_cast<std::size_t>(L), 0.0);
  const int ptt_samples = static_cast<int>(std::lround(p.ptt_ms / 1000.0 * fs));
  const int ppg_rise = std::max(2, static_cast<int>(std::lround(p.ppg_rise_s * fs)));
  std::vector<int> ppg_onsets_all;
  for (std::size_t k = 0; k < beat_t.size(); ++k) {
    const int r_idx = static_cast<int>(std::lround(beat_t[k] * fs));
    ppg_onsets_all.push_back(r_idx + ptt_samples - ppg_rise);
  }
  render_pulses(rec.ppg.samples, ppg_onsets_all, [&](int beat_len) {
    PulseParams pp;
    pp.rise_samples = std::min(ppg_rise, beat_len - 2);
    pp.decay_samples = p.ppg_decay_frac * beat_len;
    pp.bump_amp = p.ppg_wave_amp;
    pp.bump_center = pp.rise_samples + 0.30 * beat_len;
    pp.bump_sigma = 0.09 * beat_len;
    return pp;
  });

  // PPG peak/onset truth for fully rendered beats.
  std::vector<double> asp_vals, dt_vals;
  for (std::size_t k = 0; k + 1 < ppg_onsets_all.size(); ++k) {
    const int onset = ppg_onsets_all[k];
    const int beat_len = ppg_onsets_all[k + 1] - ppg_onsets_all[k];
    const int peak = onset + std::min(ppg_rise, beat_len - 2);
    if (onset < 0 || peak >= L) continue;
    rec.ppg_onsets.push_back(onset);
    rec.ppg_peaks.push_back(peak);
    asp_vals.push_back(rec.ppg.samples[static_cast<std::size_t>(peak)] -
                       rec.ppg.samples[static_cast<std::size_t>(onset)]);
    dt_vals.push_back((peak - onset) / fs);
  }
  if (!dt_vals.empty()) {
    rec.ppg_dt_s = std::accumulate(dt_vals.begin(), dt_vals.end(), 0.0) /
                   static_cast<double>(dt_vals.size());
    // Normalize Asp the way the extractor sees it (after local min-max).
    auto [mn_it, mx_it] = std::minmax_element(rec.ppg.samples.begin(), rec.ppg.samples.end());
    const double span = *mx_it - *mn_it;
    rec.ppg_asp = span > 0.0
                      ? std::accumulate(asp_vals.begin(), asp_vals.end(), 0.0) /
                            static_cast<double>(asp_vals.size()) / span
                      : 0.0;
  }

  if (noise > 0.0) {
    for (auto& v : rec.ecg.samples) v += noise * rng.normal();
    for (auto& v : rec.ppg.samples) v += noise * rng.normal();
    const double abp_noise = noise * (rec.sbp_mmhg - rec.dbp_mmhg);
    for (auto& v : rec.abp.samples) v += abp_noise * rng.normal();
  }
  return rec;
}

SplitManifest make_splits(const std::vector<PatientProfile>& patients,
                          const std::vector<Record>& records, double test_frac,
                          std::uint64_t seed) {
  if (patients.size() < 5)
    throw std::invalid_argument("make_splits: too few patients for meaningful splits");
  SplitManifest m;
  m.seed = seed;
  m.test_frac = test_frac;
  Rng rng(seed ^ 0x5eedf00dULL);

  std::vector<int> ids;
  ids.reserve(patients.size());
  for (const auto& p : patients) ids.push_back(p.patient_id);
  for (std::size_t i = ids.size(); i > 1; --i)
    std::swap(ids[i - 1], ids[rng.next_below(i)]);

  const int n = static_cast<int>(ids.size());
  const int n_test = std::max(1, static_cast<int>(std::lround(test_frac * n)));
  const int n_rest = n - n_test;
  const int n_val = std::max(1, static_cast<int>(std::lround(n_rest / 5.0)));  // 4:1
  m.apx_test.assign(ids.begin(), ids.begin() + n_test);
  m.apx_val.assign(ids.begin() + n_test, ids.begin() + n_test + n_val);
  m.apx_train.assign(ids.begin() + n_test + n_val, ids.end());
  std::sort(m.apx_test.begin(), m.apx_test.end());
  std::sort(m.apx_val.begin(), m.apx_val.end());
  std::sort(m.apx_train.begin(), m.apx_train.end());

  // Calibration-based finetune protocol over the apx-test segments: 81/9/10.
  std::vector<std::pair<int, int>> segs;
  for (const auto& r : records) {
    if (std::binary_search(m.apx_test.begin(), m.apx_test.end(), r.patient_id))
      segs.emplace_back(r.patient_id, r.segment_id);
  }
  for (std::size_t i = segs.size(); i > 1; --i)
    std::swap(segs[i - 1], segs[rng.next_below(i)]);
  const int ns = static_cast<int>(segs.size());
  const int n_tr = static_cast<int>(std::lround(0.81 * ns));
  const int n_va = static_cast<int>(std::lround(0.09 * ns));
  m.ft_train.assign(segs.begin(), segs.begin() + n_tr);
  m.ft_val.assign(segs.begin() + n_tr, segs.begin() + n_tr + n_va);
  m.ft_test.assign(segs.begin() + n_tr + n_va, segs.end());
  return m;
}

Dataset generate_dataset(const SynthConfig& cfg, std::uint64_t seed) {
  Dataset ds;
  ds.config = cfg;
  ds.seed = seed;
  Rng master(seed);
  for (int i = 0; i < cfg.patients; ++i) {
    Rng prng = master.fork(static_cast<std::uint64_t>(i));
    PatientProfile p = generate_patient(i, prng);
    if (!cfg.with_pi) {
      p.height_cm.reset();
      p.weight_kg.reset();
      p.bmi.reset();
    }
    ds.patients.push_back(p);
    for (int s = 0; s < cfg.segments_per_patient; ++s) {
      Rng rrng = master.fork(0x100000ULL + static_cast<std::uint64_t>(i) * 4096ULL +
                             static_cast<std::uint64_t>(s));
      ds.records.push_back(
          synthesize_record(ds.patients.back(), s, cfg.segment_s, cfg.fs, cfg.noise, rrng));
    }
  }
  ds.splits = make_splits(ds.patients, ds.records, cfg.test_frac, seed);

  double min_dbp = 1e9, max_sbp = -1e9;
  for (const auto& r : ds.records) {
    if (std::binary_search(ds.splits.apx_train.begin(), ds.splits.apx_train.end(), r.patient_id)) {
      min_dbp = std::min(min_dbp, r.dbp_mmhg);
      max_sbp = std::max(max_sbp, r.sbp_mmhg);
    }
  }
  ds.bounds = GlobalBounds{min_dbp, max_sbp};
  return ds;
}

const PatientProfile* Dataset::patient(int id) const {
  for (const auto& p : patients)
    if (p.patient_id == id) return &p;
  return nullptr;
}

const Record* Dataset::record(int patient_id, int segment_id) const {
  for (const auto& r : records)
    if (r.patient_id == patient_id && r.segment_id == segment_id) return &r;
  return nullptr;
}

std::vector<int> Dataset::record_indices_for_patients(const std::vector<int>& patient_ids) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (std::find(patient_ids.begin(), patient_ids.end(), records[i].patient_id) !=
        patient_ids.end())
      out.push_back(static_cast<int>(i));
  }
  return out;
}

std::vector<int> Dataset::record_indices_for_segments(
    const std::vector<std::pair<int, int>>& segs) const {
  std::map<std::pair<int, int>, int> lookup;
  for (std::size_t i = 0; i < records.size(); ++i)
    lookup[{records[i].patient_id, records[i].segment_id}] = static_cast<int>(i);
  std::vector<int> out;
  out.reserve(segs.size());
  for (const auto& s : segs) {
    auto it = lookup.find(s);
    if (it == lookup.end())
      throw std::runtime_error("dataset: manifest references unknown segment");
    out.push_back(it->second);
  }
  return out;
}

// ---- persistence -----------------------------------------------------------

namespace {

constexpr char kShardMagic[8] = {'V', 'S', 'D', 'A', 'T', 'A', '0', '1'};

template <typename T>
void put_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw std::runtime_error("dataset shard: truncated file");
  return v;
}

void put_dvec(std::ostream& os, const std::vector<double>& v) {
  put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()),
           static_cast<std::streamsize>(v.size() * sizeof(double)));
}

std::vector<double> get_dvec(std::istream& is) {
  const auto n = get_pod<std::uint32_t>(is);
  std::vector<double> v(n);
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw std::runtime_error("dataset shard: truncated file");
  return v;
}

void put_ivec(std::ostream& os, const std::vector<int>& v) {
  put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(v.size()));
  for (int x : v) put_pod<std::int32_t>(os, x);
}

std::vector<int> get_ivec(std::istream& is) {
  const auto n = get_pod<std::uint32_t>(is);
  std::vector<int> v(n);
  for (auto& x : v) x = get_pod<std::int32_t>(is);
  return v;
}

void write_shard(const std::string& path, const Dataset& ds, const std::vector<int>& indices) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("dataset: cannot write shard " + path);
  os.write(kShardMagic, 8);
  put_pod<std::uint32_t>(os, static_cast<std::uint32_t>(indices.size()));
  for (int idx : indices) {
    const Record& r = ds.records[static_cast<std::size_t>(idx)];
    put_pod<std::int32_t>(os, r.patient_id);
    put_pod<std::int32_t>(os, r.segment_id);
    put_pod<double>(os, r.sbp_mmhg);
    put_pod<double>(os, r.dbp_mmhg);
    put_pod<double>(os, r.map_mmhg);
    put_pod<double>(os, r.ecg.fs);
    put_dvec(os, r.ecg.samples);
    put_dvec(os, r.ppg.samples);
    put_dvec(os, r.abp.samples);
    put_ivec(os, r.r_peaks);
    put_dvec(os, r.rr_s);
    put_pod<double>(os, r.qt_s);
    put_pod<double>(os, r.qtc_s);
    put_ivec(os, r.ppg_peaks);
    put_ivec(os, r.ppg_onsets);
    put_pod<double>(os, r.ppg_dt_s);
    put_pod<double>(os, r.ppg_asp);
  }
  if (!os) throw std::runtime_error("dataset: shard write failed " + path);
}

void read_shard(const std::string& path, Dataset& ds) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("dataset: cannot open shard " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kShardMagic, 8) != 0)
    throw std::runtime_error("dataset: bad magic in shard " + path);
  const auto count = get_pod<std::uint32_t>(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    Record r;
    r.patient_id = get_pod<std::int32_t>(is);
    r.segment_id = get_pod<std::int32_t>(is);
    r.sbp_mmhg = get_pod<double>(is);
    r.dbp_mmhg = get_pod<double>(is);
    r.map_mmhg = get_pod<double>(is);
    const double fs = get_pod<double>(is);
    r.ecg = Waveform{Kind::ECG, Unit::Raw, fs, get_dvec(is)};
    r.ppg = Waveform{Kind::PPG, Unit::Raw, fs, get_dvec(is)};
    r.abp = Waveform{Kind::ABP, Unit::MmHg, fs, get_dvec(is)};
    r.r_peaks = get_ivec(is);
    r.rr_s = get_dvec(is);
    r.qt_s = get_pod<double>(is);
    r.qtc_s = get_pod<double>(is);
    r.ppg_peaks = get_ivec(is);
    r.ppg_onsets = get_ivec(is);
    r.ppg_dt_s = get_pod<double>(is);
    r.ppg_asp = get_pod<double>(is);
    ds.records.push_back(std::move(r));
  }
}

json patient_to_json(const PatientProfile& p) {
  json j;
  j["id"] = p.patient_id;
  j["age"] = p.age;
  j["sex"] = std::string(1, p.sex);
  if (p.height_cm) j["height_cm"] = *p.height_cm;
  if (p.weight_kg) j["weight_kg"] = *p.weight_kg;
  if (p.bmi) j["bmi"] = *p.bmi;
  j["sbp"] = p.sbp_mmhg;
  j["dbp"] = p.dbp_mmhg;
  j["hr"] = p.heart_rate_bpm;
  j["ptt_ms"] = p.ptt_ms;
  j["morph"] = {p.ecg.p_amp,  p.ecg.p_center, p.ecg.p_sigma, p.ecg.q_amp,   p.ecg.q_center,
                p.ecg.q_sigma, p.ecg.r_amp,   p.ecg.r_sigma, p.ecg.s_amp,   p.ecg.s_center,
                p.ecg.s_sigma, p.ecg.t_amp,   p.ecg.t_center, p.ecg.t_sigma, p.abp_rise_frac,
                p.abp_decay_frac, p.abp_notch_amp, p.abp_notch_delay_frac, p.ppg_rise_s,
                p.ppg_decay_frac, p.ppg_wave_amp};
  return j;
}

PatientProfile patient_from_json(const json& j) {
  PatientProfile p;
  p.patient_id = j.at("id").get<int>();
  p.age = j.at("age").get<int>();
  p.sex = j.at("sex").get<std::string>().at(0);
  if (j.contains("height_cm")) p.height_cm = j["height_cm"].get<double>();
  if (j.contains("weight_kg")) p.weight_kg = j["weight_kg"].get<double>();
  if (j.contains("bmi")) p.bmi = j["bmi"].get<double>();
  p.sbp_mmhg = j.at("sbp").get<double>();
  p.dbp_mmhg = j.at("dbp").get<double>();
  p.heart_rate_bpm = j.at("hr").get<double>();
  p.ptt_ms = j.at("ptt_ms").get<double>();
  const auto m = j.at("morph").get<std::vector<double>>();
  if (m.size() != 21) throw std::runtime_error("dataset: bad morphology block");
  p.ecg = EcgTemplate{m[0], m[1], m[2],  m[3],  m[4],  m[5],  m[6],
                      m[7], m[8], m[9],  m[10], m[11], m[12], m[13]};
  p.abp_rise_frac = m[14];
  p.abp_decay_frac = m[15];
  p.abp_notch_amp = m[16];
  p.abp_notch_delay_frac = m[17];
  p.ppg_rise_s = m[18];
  p.ppg_decay_frac = m[19];
  p.ppg_wave_amp = m[20];
  return p;
}

json segpairs_to_json(const std::vector<std::pair<int, int>>& v) {
  json j = json::array();
  for (const auto& [a, b] : v) j.push_back({a, b});
  return j;
}

std::vector<std::pair<int, int>> segpairs_from_json(const json& j) {
  std::vector<std::pair<int, int>> v;
  for (const auto& e : j) v.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
  return v;
}

}  // namespace

void write_dataset(const std::string& dir, const Dataset& ds) {
  namespace fs = std::filesystem;
  fs::create_directories(dir);

  json m;
  m["format"] = "vsc-dataset";
  m["version"] = 1;
  m["seed"] = ds.seed;
  m["fs"] = ds.config.fs;
  m["segment_s"] = ds.config.segment_s;
  m["noise"] = ds.config.noise;
  m["with_pi"] = ds.config.with_pi;
  m["zero_center_ecg"] = ds.config.zero_center_ecg;
  m["zero_center_ppg"] = ds.config.zero_center_ppg;
  m["test_frac"] = ds.config.test_frac;
  m["patients_n"] = ds.config.patients;
  m["segments_per_patient"] = ds.config.segments_per_patient;
  m["bounds"] = {{"min_mmhg", ds.bounds.min_mmhg}, {"max_mmhg", ds.bounds.max_mmhg}};
  m["splits"] = {{"seed", ds.splits.seed},
                 {"test_frac", ds.splits.test_frac},
                 {"apx_train", ds.splits.apx_train},
                 {"apx_val", ds.splits.apx_val},
                 {"apx_test", ds.splits.apx_test},
                 {"ft_train", segpairs_to_json(ds.splits.ft_train)},
                 {"ft_val", segpairs_to_json(ds.splits.ft_val)},
                 {"ft_test", segpairs_to_json(ds.splits.ft_test)}};
  json pats = json::array();
  for (const auto& p : ds.patients) pats.push_back(patient_to_json(p));
  m["patients"] = pats;

  std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
  if (!mf) throw std::runtime_error("dataset: cannot write manifest in " + dir);
  mf << m.dump(1) << "\n";

  write_shard(dir + "/apx_train.bin", ds, ds.record_indices_for_patients(ds.splits.apx_train));
  write_shard(dir + "/apx_val.bin", ds, ds.record_indices_for_patients(ds.splits.apx_val));
  write_shard(dir + "/apx_test.bin", ds, ds.record_indices_for_patients(ds.splits.apx_test));
}

Dataset read_dataset(const std::string& dir) {
  std::ifstream mf(dir + "/manifest.json");
  if (!mf) throw std::runtime_error("dataset: manifest.json not found in " + dir);
  json m = json::parse(mf);
  if (m.value("format", "") != "vsc-dataset")
    throw std::runtime_error("dataset: not a vsc dataset manifest: " + dir);
  if (m.at("version").get<int>() != 1)
    throw std::runtime_error("dataset: unsupported manifest version in " + dir);

  Dataset ds;
  ds.seed = m.at("seed").get<std::uint64_t>();
  ds.config.fs = m.at("fs").get<double>();
  ds.config.segment_s = m.at("segment_s").get<double>();
  ds.config.noise = m.at("noise").get<double>();
  ds.config.with_pi = m.at("with_pi").get<bool>();
  ds.config.zero_center_ecg = m.at("zero_center_ecg").get<bool>();
  ds.config.zero_center_ppg = m.at("zero_center_ppg").get<bool>();
  ds.config.test_frac = m.at("test_frac").get<double>();
  ds.config.patients = m.at("patients_n").get<int>();
  ds.config.segments_per_patient = m.at("segments_per_patient").get<int>();
  ds.bounds.min_mmhg = m.at("bounds").at("min_mmhg").get<double>();
  ds.bounds.max_mmhg = m.at("bounds").at("max_mmhg").get<double>();
  const json& sj = m.at("splits");
  ds.splits.seed = sj.at("seed").get<std::uint64_t>();
  ds.splits.test_frac = sj.at("test_frac").get<double>();
  ds.splits.apx_train = sj.at("apx_train").get<std::vector<int>>();
  ds.splits.apx_val = sj.at("apx_val").get<std::vector<int>>();
  ds.splits.apx_test = sj.at("apx_test").get<std::vector<int>>();
  ds.splits.ft_train = segpairs_from_json(sj.at("ft_train"));
  ds.splits.ft_val = segpairs_from_json(sj.at("ft_val"));
  ds.splits.ft_test = segpairs_from_json(sj.at("ft_test"));
  for (const auto& pj : m.at("patients")) ds.patients.push_back(patient_from_json(pj));

  read_shard(dir + "/apx_train.bin", ds);
  read_shard(dir + "/apx_val.bin", ds);
  read_shard(dir + "/apx_test.bin", ds);
  return ds;
}

Dataset ingest_csv_dataset(const std::string& dir, const SynthConfig& cfg, std::uint64_t seed) {
  std::ifstream pf(dir + "/patients.csv");
  if (!pf) throw std::runtime_error("ingest: patients.csv not found in " + dir);
  std::ifstream wf(dir + "/waveforms.csv");
  if (!wf) throw std::runtime_error("ingest: waveforms.csv not found in " + dir);

  Dataset ds;
  ds.config = cfg;
  ds.seed = seed;

  // Split that keeps trailing empty fields (",165,," has three cells).
  auto split_csv = [](const std::string& l) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : l) {
      if (c == ',') {
        cells.push_back(cur);
        cur.clear();
      } else if (c != '\r') {
        cur.push_back(c);
      }
    }
    cells.push_back(cur);
    return cells;
  };

  std::string line;
  std::getline(pf, line);  // header
  while (std::getline(pf, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() < 6) throw std::runtime_error("ingest: patients.csv needs 6 columns");
    PatientProfile p;
    p.patient_id = std::stoi(cells[0]);
    p.age = cells[1].empty() ? 0 : std::stoi(cells[1]);
    p.sex = cells[2].empty() ? 'M' : cells[2][0];
    if (!cells[3].empty()) p.height_cm = std::stod(cells[3]);
    if (!cells[4].empty()) p.weight_kg = std::stod(cells[4]);
    if (!cells[5].empty()) p.bmi = std::stod(cells[5]);
    ds.patients.push_back(p);
  }

  std::map<std::pair<int, int>, Record> recs;
  std::getline(wf, line);  // header
  while (std::getline(wf, line)) {
    if (line.empty()) continue;
    const std::vector<std::string> cells = split_csv(line);
    if (cells.size() < 5) throw std::runtime_error("ingest: waveforms.csv needs 5 columns");
    const int pid = std::stoi(cells[0]);
    const int sid = std::stoi(cells[1]);
    Record& r = recs[{pid, sid}];
    r.patient_id = pid;
    r.segment_id = sid;
    r.ecg.samples.push_back(std::stod(cells[2]));
    r.ppg.samples.push_back(std::stod(cells[3]));
    r.abp.samples.push_back(std::stod(cells[4]));
  }
  for (auto& [key, r] : recs) {
    r.ecg.kind = Kind::ECG;
    r.ecg.unit = Unit::Raw;
    r.ecg.fs = cfg.fs;
    r.ppg.kind = Kind::PPG;
    r.ppg.unit = Unit::Raw;
    r.ppg.fs = cfg.fs;
    r.abp.kind = Kind::ABP;
    r.abp.unit = Unit::MmHg;
    r.abp.fs = cfg.fs;
    auto [mn, mx] = std::minmax_element(r.abp.samples.begin(), r.abp.samples.end());
    r.dbp_mmhg = *mn;
    r.sbp_mmhg = *mx;
    r.map_mmhg = mean_arterial_pressure(r.sbp_mmhg, r.dbp_mmhg);
    ds.records.push_back(std::move(r));
  }

  ds.splits = make_splits(ds.patients, ds.records, cfg.test_frac, seed);
  double min_dbp = 1e9, max_sbp = -1e9;
  for (const auto& r : ds.records) {
    if (std::binary_search(ds.splits.apx_train.begin(), ds.splits.apx_train.end(),
                           r.patient_id)) {
      min_dbp = std::min(min_dbp, r.dbp_mmhg);
      max_sbp = std::max(max_sbp, r.sbp_mmhg);
    }
  }
  ds.bounds = GlobalBounds{min_dbp, max_sbp};
  return ds;
}

std::vector<DirectedSample> sample_direction_batch(const Dataset& ds,
                                                   const std::vector<int>& record_indices,
                                                   int batch_size, Rng& rng) {
  (void)ds;
  if (batch_size < 6)
    throw std::invalid_argument(
        "sample_direction_batch: batch size must be at least 6 so every direction can occur");
  if (record_indices.empty())
    throw std::invalid_argument("sample_direction_batch: empty record set");
  std::vector<DirectedSample> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  for (int i = 0; i < batch_size; ++i) {
    DirectedSample s;
    s.record_index =
        record_indices[static_cast<std::size_t>(rng.next_below(record_indices.size()))];
    const int src = rng.randint(0, 3);
    const int pick = rng.randint(0, 2);
    int dst = -1, seen = 0;
    for (int k = 0; k < 3; ++k) {
      if (k == src) continue;
      if (seen++ == pick) dst = k;
    }
    s.src = kind_from_index(src);
    s.dst = kind_from_index(dst);
    out.push_back(s);
  }
  return out;
}

std::vector<double> prepared_wave(const Dataset& ds, const Record& rec, Kind kind) {
  const Waveform& w = kind == Kind::ECG ? rec.ecg : (kind == Kind::PPG ? rec.ppg : rec.abp);
  Waveform n = local_minmax(w);
  if ((kind == Kind::ECG && ds.config.zero_center_ecg) ||
      (kind == Kind::PPG && ds.config.zero_center_ppg)) {
    n = zero_center(n);
  }
  return n.samples;
}

}  // namespace vsc
