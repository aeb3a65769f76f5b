#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "vsc/features.hpp"
#include "vsc/synth.hpp"

using namespace vsc;

TEST_CASE("subgroup classification is closed-interval") {
  const auto r = normal_range("QTc");
  CHECK(classify_feature(0.45, r) == Subgroup::Normal);   // boundary is normal
  CHECK(classify_feature(0.35, r) == Subgroup::Normal);
  CHECK(classify_feature(0.50, r) == Subgroup::Abnormal); // prolonged QTc
  CHECK(classify_feature(0.34, r) == Subgroup::Abnormal);
  CHECK(classify_feature(110.0, normal_range("IPR")) == Subgroup::Abnormal);  // tachycardia
  CHECK(classify_feature(85.0, normal_range("SBP")) == Subgroup::Abnormal);   // hypotension
  CHECK_THROWS_AS(normal_range("NOPE"), std::invalid_argument);
}

TEST_CASE("relative error") {
  CHECK(relative_error(0.44, 0.40) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(relative_error(2.0, 2.0) == 0.0);
  CHECK_THROWS_AS(relative_error(1.0, 0.0), std::invalid_argument);
}

TEST_CASE("rr intervals from peak indices") {
  CHECK(rr_intervals({0, 100}, 125.0) == std::vector<double>{0.8});
  CHECK_THROWS_AS(rr_intervals({42}, 125.0), std::invalid_argument);
}

TEST_CASE("flat signal yields no peaks (feature unavailable)") {
  std::vector<double> flat(512, 0.3);
  CHECK(detect_r_peaks(flat, 125.0).empty());
  const auto feats = extract_features(flat, Kind::ECG, 125.0, Unit::LocalNorm);
  for (const auto& f : feats) CHECK_FALSE(f.available);
}

TEST_CASE("QTc arithmetic: QT 0.36 s over RR 0.81 s gives 0.400 s") {
  CHECK(0.36 / std::sqrt(0.81) == doctest::Approx(0.400).epsilon(1e-12));
}

TEST_CASE("detectors recover generator ground truth on clean records") {
  Rng master(4242);
  int checked_qtc = 0;
  for (int pid = 0; pid < 24; ++pid) {
    Rng prng = master.fork(static_cast<std::uint64_t>(pid));
    PatientProfile p = generate_patient(pid, prng);
    Rng rrng = master.fork(1000 + static_cast<std::uint64_t>(pid));
    Record rec = synthesize_record(p, 0, 4.096, 125.0, 0.0, rrng);
    Dataset tmp;  // prepared_wave needs dataset flags
    tmp.config.zero_center_ecg = true;
    const auto ecg = prepared_wave(tmp, rec, Kind::ECG);

    // Every interior annotated R peak has a detection within 2 samples, and
    // nothing is detected away from an annotation (no T-wave doubles).
    const auto peaks = detect_r_peaks(ecg, 125.0);
    REQUIRE(peaks.size() >= 2);
    const int L = static_cast<int>(ecg.size());
    for (int t : rec.r_peaks) {
      if (t < 2 || t > L - 3) continue;
      bool found = false;
      for (int d : peaks) found = found || std::abs(d - t) <= 2;
      CHECK(found);
    }
    for (int d : peaks) {
      bool near = false;
      for (int t : rec.r_peaks) near = near || std::abs(d - t) <= 2;
      CHECK(near);
    }

    // HR 75-ish at 4.096 s: 4..6 peaks for most profiles
    if (p.heart_rate_bpm > 70.0 && p.heart_rate_bpm < 80.0) {
      CHECK(peaks.size() >= 4);
      CHECK(peaks.size() <= 6);
    }

    // mean RR within one sample of the annotated intervals
    const auto rr = rr_intervals(peaks, 125.0);
    double rr_mean = 0.0, rr_true = 0.0;
    for (double v : rr) rr_mean += v;
    rr_mean /= static_cast<double>(rr.size());
    for (double v : rec.rr_s) rr_true += v;
    rr_true /= static_cast<double>(rec.rr_s.size());
    CHECK(std::fabs(rr_mean - rr_true) <= 1.5 / 125.0);

    // QTc against the template-derived truth
    const auto qt = qtc_bazett(ecg, peaks, 125.0);
    if (qt.ok && rec.qtc_s > 0.0) {
      CHECK(std::fabs(qt.qtc_s - rec.qtc_s) <= 0.02);
      ++checked_qtc;
    }

    // PPG onset-to-peak delay within 2 samples; IPR within 1 BPM of the
    // pulse train's own beat intervals
    const auto ppg = prepared_wave(tmp, rec, Kind::PPG);
    const auto pf = ppg_features(ppg, 125.0);
    REQUIRE(pf.ok);
    CHECK(std::fabs(pf.dt_s - rec.ppg_dt_s) <= 2.0 / 125.0);
    REQUIRE(rec.ppg_peaks.size() >= 2);
    const double true_ipi =
        (rec.ppg_peaks.back() - rec.ppg_peaks.front()) /
        (125.0 * static_cast<double>(rec.ppg_peaks.size() - 1));
    CHECK(std::fabs(pf.ipr_bpm - 60.0 / true_ipi) <= 1.0);

    // ABP extremes match the stored SBP/DBP
    const auto af = abp_features(rec.abp);
    REQUIRE(af.ok);
    CHECK(std::fabs(af.sbp - rec.sbp_mmhg) <= 0.5);
    CHECK(std::fabs(af.dbp - rec.dbp_mmhg) <= 0.5);
    CHECK(std::fabs(af.map - rec.map_mmhg) <= 0.5);
  }
  CHECK(checked_qtc >= 20);  // QTc must actually be measurable on most records
}

TEST_CASE("ppg feature arithmetic and ranges") {
  // Asp 1.0 au over 0.4 s -> 2.5 au/s sits in the normal range
  CHECK(1.0 / 0.4 == doctest::Approx(2.5));
  CHECK(classify_feature(2.5, normal_range("AspDT")) == Subgroup::Normal);
  CHECK(classify_feature(4.0, normal_range("AspDT")) == Subgroup::Abnormal);

  std::vector<double> two_samples(16, 0.0);
  CHECK_FALSE(ppg_features(two_samples, 125.0).ok);
}

TEST_CASE("abp_features requires mmHg input") {
  Waveform w;
  w.kind = Kind::ABP;
  w.unit = Unit::LocalNorm;
  w.fs = 125.0;
  w.samples.assign(64, 0.5);
  CHECK_THROWS_AS(abp_features(w), std::invalid_argument);
}
