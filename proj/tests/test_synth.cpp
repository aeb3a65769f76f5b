#include <doctest.h>

#include <fstream>
#include <stdexcept>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <set>

#include "vsc/synth.hpp"

using namespace vsc;

TEST_CASE("patient generation is deterministic per seed") {
  Rng a(7), b(7);
  PatientProfile p1 = generate_patient(0, a);
  PatientProfile p2 = generate_patient(0, b);
  CHECK(p1.age == p2.age);
  CHECK(p1.sbp_mmhg == p2.sbp_mmhg);
  CHECK(p1.ptt_ms == p2.ptt_ms);
  CHECK(p1.ecg.t_center == p2.ecg.t_center);
}

TEST_CASE("population spans normal and abnormal ranges with balanced sex") {
  Rng rng(123);
  int abnormal_sbp = 0, female = 0, low = 0, high = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    Rng prng = rng.fork(static_cast<std::uint64_t>(i));
    PatientProfile p = generate_patient(i, prng);
    if (p.sbp_mmhg < 90.0 || p.sbp_mmhg > 130.0) ++abnormal_sbp;
    if (p.sbp_mmhg < 90.0) ++low;
    if (p.sbp_mmhg > 130.0) ++high;
    if (p.sex == 'F') ++female;
    CHECK(p.sbp_mmhg > p.dbp_mmhg);
    CHECK(p.heart_rate_bpm >= 30.0);
    CHECK(p.heart_rate_bpm <= 200.0);
  }
  CHECK(abnormal_sbp >= n / 10);  // >= 10% abnormal
  CHECK(low > 0);
  CHECK(high > 0);
  CHECK(female >= 450);
  CHECK(female <= 550);
}

TEST_CASE("synthesized record: peak counts, ABP extremes, PPG transit lag") {
  Rng master(99);
  Rng prng = master.fork(1);
  PatientProfile p = generate_patient(1, prng);
  p.heart_rate_bpm = 75.0;

  Rng rrng = master.fork(2);
  Record rec = synthesize_record(p, 0, 10.0, 125.0, 0.0, rrng);
  CHECK(rec.ecg.samples.size() == 1250);

  // HR=75 over 10 s: 11..14 R peaks depending on phase and jitter
  CHECK(rec.r_peaks.size() >= 11);
  CHECK(rec.r_peaks.size() <= 14);

  // ABP extremes equal the stored SBP/DBP by construction (noise off)
  const auto [mn, mx] = std::minmax_element(rec.abp.samples.begin(), rec.abp.samples.end());
  CHECK(std::fabs(*mx - rec.sbp_mmhg) < 1e-6);
  CHECK(std::fabs(*mn - rec.dbp_mmhg) < 1e-6);
  CHECK(rec.map_mmhg ==
        doctest::Approx((rec.sbp_mmhg + 2.0 * rec.dbp_mmhg) / 3.0).epsilon(1e-12));

  // R-peak annotations point at local maxima
  for (int idx : rec.r_peaks) {
    if (idx > 0)
      CHECK(rec.ecg.samples[static_cast<std::size_t>(idx)] >=
            rec.ecg.samples[static_cast<std::size_t>(idx - 1)]);
    if (idx + 1 < static_cast<int>(rec.ecg.samples.size()))
      CHECK(rec.ecg.samples[static_cast<std::size_t>(idx)] >=
            rec.ecg.samples[static_cast<std::size_t>(idx + 1)]);
  }

  // PPG systolic peak lags the R peak by PTT within one sample
  const int ptt_samples = static_cast<int>(std::lround(p.ptt_ms / 1000.0 * 125.0));
  int matched = 0;
  for (int rp : rec.r_peaks) {
    for (int pp : rec.ppg_peaks) {
      if (std::abs(pp - rp - ptt_samples) <= 1) {
        ++matched;
        break;
      }
    }
  }
  CHECK(matched >= static_cast<int>(rec.r_peaks.size()) - 2);
}

TEST_CASE("RR annotations are consistent with heart rate") {
  Rng master(5);
  Rng prng = master.fork(3);
  PatientProfile p = generate_patient(3, prng);
  p.heart_rate_bpm = 75.0;
  Rng rrng = master.fork(4);
  Record rec = synthesize_record(p, 0, 8.192, 125.0, 0.0, rrng);
  REQUIRE(rec.rr_s.size() >= 2);
  // Profile HR 75 with per-record jitter (sd 2 BPM) and +/-5% beat jitter.
  for (double rr : rec.rr_s) {
    CHECK(rr > 0.70);
    CHECK(rr < 0.92);
  }
  double mean_rr = 0.0;
  for (double rr : rec.rr_s) mean_rr += rr;
  mean_rr /= static_cast<double>(rec.rr_s.size());
  CHECK(mean_rr == doctest::Approx(0.8).epsilon(0.08));
}

TEST_CASE("splits: calibration-free patient disjointness and 81/9/10 finetune") {
  SynthConfig cfg;
  cfg.patients = 100;
  cfg.segments_per_patient = 4;
  Dataset ds = generate_dataset(cfg, 2024);

  std::set<int> train(ds.splits.apx_train.begin(), ds.splits.apx_train.end());
  std::set<int> val(ds.splits.apx_val.begin(), ds.splits.apx_val.end());
  std::set<int> test(ds.splits.apx_test.begin(), ds.splits.apx_test.end());
  CHECK(train.size() + val.size() + test.size() == 100);
  for (int id : test) {
    CHECK(train.count(id) == 0);
    CHECK(val.count(id) == 0);
  }
  // train:val is 4:1 within the non-test side
  CHECK(val.size() == doctest::Approx((train.size() + val.size()) / 5.0).epsilon(0.15));

  const int n_ft = static_cast<int>(ds.splits.ft_train.size() + ds.splits.ft_val.size() +
                                    ds.splits.ft_test.size());
  CHECK(n_ft == static_cast<int>(test.size()) * 4);
  CHECK(std::abs(static_cast<int>(ds.splits.ft_train.size()) -
                 static_cast<int>(std::lround(0.81 * n_ft))) <= 1);
  CHECK(std::abs(static_cast<int>(ds.splits.ft_val.size()) -
                 static_cast<int>(std::lround(0.09 * n_ft))) <= 1);
  CHECK(std::abs(static_cast<int>(ds.splits.ft_test.size()) -
                 static_cast<int>(std::lround(0.10 * n_ft))) <= 1);

  // finetune segments come only from apx-test patients
  for (const auto& [pid, seg] : ds.splits.ft_train) CHECK(test.count(pid) == 1);

  // identical seed reproduces the manifest
  Dataset ds2 = generate_dataset(cfg, 2024);
  CHECK(ds2.splits.apx_train == ds.splits.apx_train);
  CHECK(ds2.splits.ft_test == ds.splits.ft_test);
  CHECK(ds2.bounds.min_mmhg == ds.bounds.min_mmhg);

  CHECK_THROWS_AS(make_splits(std::vector<PatientProfile>(3), {}, 0.2, 1),
                  std::invalid_argument);
}

TEST_CASE("global bounds come from the training split") {
  SynthConfig cfg;
  cfg.patients = 40;
  cfg.segments_per_patient = 2;
  Dataset ds = generate_dataset(cfg, 77);
  double min_dbp = 1e9, max_sbp = -1e9;
  for (const auto& r : ds.records) {
    if (std::binary_search(ds.splits.apx_train.begin(), ds.splits.apx_train.end(),
                           r.patient_id)) {
      min_dbp = std::min(min_dbp, r.dbp_mmhg);
      max_sbp = std::max(max_sbp, r.sbp_mmhg);
    }
  }
  CHECK(ds.bounds.min_mmhg == min_dbp);
  CHECK(ds.bounds.max_mmhg == max_sbp);
}

TEST_CASE("dataset round-trips bit-exactly through the directory format") {
  namespace fs = std::filesystem;
  SynthConfig cfg;
  cfg.patients = 12;
  cfg.segments_per_patient = 2;
  cfg.segment_s = 2.048;
  Dataset ds = generate_dataset(cfg, 31337);
  const std::string dir = std::string(VSC_TEST_TMP) + "/ds_roundtrip";
  fs::remove_all(dir);
  write_dataset(dir, ds);
  Dataset rd = read_dataset(dir);

  REQUIRE(rd.records.size() == ds.records.size());
  REQUIRE(rd.patients.size() == ds.patients.size());
  CHECK(rd.bounds.min_mmhg == ds.bounds.min_mmhg);
  CHECK(rd.bounds.max_mmhg == ds.bounds.max_mmhg);
  CHECK(rd.splits.apx_train == ds.splits.apx_train);
  CHECK(rd.splits.ft_val == ds.splits.ft_val);

  // records may be reordered by shard, so compare by (patient, segment)
  for (const auto& r : ds.records) {
    const Record* o = rd.record(r.patient_id, r.segment_id);
    REQUIRE(o != nullptr);
    CHECK(o->ecg.samples == r.ecg.samples);
    CHECK(o->ppg.samples == r.ppg.samples);
    CHECK(o->abp.samples == r.abp.samples);
    CHECK(o->sbp_mmhg == r.sbp_mmhg);
    CHECK(o->r_peaks == r.r_peaks);
    CHECK(o->rr_s == r.rr_s);
    CHECK(o->qt_s == r.qt_s);
    CHECK(o->ppg_dt_s == r.ppg_dt_s);
  }
  for (const auto& p : ds.patients) {
    const PatientProfile* o = rd.patient(p.patient_id);
    REQUIRE(o != nullptr);
    CHECK(o->age == p.age);
    CHECK(o->sbp_mmhg == p.sbp_mmhg);
    CHECK(o->height_cm == p.height_cm);
    CHECK(o->ecg.t_center == p.ecg.t_center);
  }

  // wrong magic is an explicit format error
  {
    std::ofstream bad(dir + "/apx_train.bin", std::ios::binary | std::ios::trunc);
    bad << "junkjunkjunk";
  }
  CHECK_THROWS_AS(read_dataset(dir), std::runtime_error);
}

TEST_CASE("direction batch sampler") {
  SynthConfig cfg;
  cfg.patients = 10;
  cfg.segments_per_patient = 2;
  cfg.segment_s = 1.024;
  Dataset ds = generate_dataset(cfg, 55);
  std::vector<int> idx(ds.records.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);

  Rng rng(9);
  CHECK_THROWS_AS(sample_direction_batch(ds, idx, 5, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_direction_batch(ds, {}, 8, rng), std::invalid_argument);

  int counts[3][3] = {};
  const int draws = 6000;
  for (int rep = 0; rep < draws / 6; ++rep) {
    auto batch = sample_direction_batch(ds, idx, 6, rng);
    for (const auto& s : batch) {
      CHECK(s.src != s.dst);  // never i == j
      ++counts[kind_index(s.src)][kind_index(s.dst)];
    }
  }
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      if (i == j) {
        CHECK(counts[i][j] == 0);
      } else {
        CHECK(counts[i][j] >= 1000 - 150);
        CHECK(counts[i][j] <= 1000 + 150);
      }
    }
}

TEST_CASE("csv ingest builds a dataset from user files") {
  namespace fs = std::filesystem;
  const std::string dir = std::string(VSC_TEST_TMP) + "/csv_ingest";
  fs::create_directories(dir);
  {
    std::ofstream pf(dir + "/patients.csv", std::ios::trunc);
    pf << "patient_id,age,sex,height,weight,bmi\n";
    for (int p = 0; p < 6; ++p) pf << p << "," << 40 + p << ",M,170,70,24.2\n";
    std::ofstream wf(dir + "/waveforms.csv", std::ios::trunc);
    wf << "patient_id,segment_id,ecg,ppg,abp\n";
    for (int p = 0; p < 6; ++p)
      for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 16; ++i) {
          const double t = i / 16.0;
          wf << p << "," << s << "," << 0.1 * std::sin(6.28 * t) << ","
             << 0.5 + 0.4 * std::cos(6.28 * t) << "," << 80.0 + 40.0 * t << "\n";
        }
  }
  SynthConfig cfg;
  cfg.fs = 16.0;
  cfg.segment_s = 1.0;
  cfg.test_frac = 0.34;
  Dataset ds = ingest_csv_dataset(dir, cfg, 11);
  CHECK(ds.patients.size() == 6);
  CHECK(ds.records.size() == 12);
  CHECK(ds.records[0].ecg.samples.size() == 16);
  CHECK(ds.records[0].sbp_mmhg == doctest::Approx(80.0 + 40.0 * 15.0 / 16.0));
  CHECK(ds.records[0].dbp_mmhg == doctest::Approx(80.0));
  CHECK(ds.bounds.min_mmhg < ds.bounds.max_mmhg);
}

TEST_CASE("prepared waves honor the dataset zero-centering flags") {
  SynthConfig cfg;
  cfg.patients = 6;
  cfg.segments_per_patient = 1;
  cfg.segment_s = 2.048;
  cfg.zero_center_ecg = true;
  cfg.zero_center_ppg = false;
  Dataset ds = generate_dataset(cfg, 3);
  const Record& rec = ds.records[0];

  const auto ecg = prepared_wave(ds, rec, Kind::ECG);
  double mean = 0.0;
  for (double v : ecg) mean += v;
  CHECK(std::fabs(mean / static_cast<double>(ecg.size())) < 1e-12);

  const auto ppg = prepared_wave(ds, rec, Kind::PPG);
  const auto [mn, mx] = std::minmax_element(ppg.begin(), ppg.end());
  CHECK(*mn == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*mx == doctest::Approx(1.0).epsilon(1e-12));

  const auto abp = prepared_wave(ds, rec, Kind::ABP);
  const auto [amn, amx] = std::minmax_element(abp.begin(), abp.end());
  CHECK(*amn == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(*amx == doctest::Approx(1.0).epsilon(1e-12));
}
