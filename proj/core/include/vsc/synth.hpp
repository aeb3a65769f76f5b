#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vsc/rng.hpp"
#include "vsc/signal.hpp"

namespace vsc {

// Synthetic, physiologically coupled ECG/PPG/ABP triplets with known ground
// truth. The generator stands in for clinical datasets: its couplings (shared
// beat timing, pulse transit delay, BP-dependent morphology) are what the
// conversion and refinement models are trained to recover.

struct EcgTemplate {
  // Gaussian bumps relative to the R peak (seconds, normalized amplitude).
  double p_amp, p_center, p_sigma;
  double q_amp, q_center, q_sigma;
  double r_amp, r_sigma;
  double s_amp, s_center, s_sigma;
  double t_amp, t_center, t_sigma;
};

struct PatientProfile {
  int patient_id = 0;
  int age = 0;
  char sex = 'M';  // 'M' | 'F'
  std::optional<double> height_cm;
  std::optional<double> weight_kg;
  std::optional<double> bmi;
  double sbp_mmhg = 120.0;
  double dbp_mmhg = 80.0;
  double heart_rate_bpm = 75.0;
  double ptt_ms = 280.0;

  // Morphology seeds.
  EcgTemplate ecg;
  double abp_rise_frac = 0.13;       // systolic rise as fraction of the beat
  double abp_decay_frac = 0.15;      // diastolic decay constant fraction
  double abp_notch_amp = 0.12;       // dicrotic notch height
  double abp_notch_delay_frac = 0.21;
  double ppg_rise_s = 0.35;          // onset-to-peak delay
  double ppg_decay_frac = 0.28;
  double ppg_wave_amp = 0.22;        // diastolic wave height
};

struct Record {
  int patient_id = 0;
  int segment_id = 0;
  Waveform ecg, ppg, abp;
  double sbp_mmhg = 0.0, dbp_mmhg = 0.0, map_mmhg = 0.0;

  // Ground-truth annotations from the generator (empty for ingested data).
  std::vector<int> r_peaks;
  std::vector<double> rr_s;
  double qt_s = 0.0;   // 0 when unknown
  double qtc_s = 0.0;
  std::vector<int> ppg_peaks;
  std::vector<int> ppg_onsets;
  double ppg_dt_s = 0.0;
  double ppg_asp = 0.0;  // normalized peak amplitude above onset
};

struct SplitManifest {
  std::uint64_t seed = 0;
  double test_frac = 0.2;
  std::vector<int> apx_train, apx_val, apx_test;  // patient ids
  // Refinement pretraining reuses apx train/val; finetuning re-partitions the
  // apx-test segments 81/9/10 under a calibration-based protocol.
  std::vector<std::pair<int, int>> ft_train, ft_val, ft_test;  // (patient, segment)
};

struct SynthConfig {
  int patients = 256;
  int segments_per_patient = 8;
  double fs = 125.0;
  double segment_s = 4.096;  // L = 512
  double noise = 0.0;
  bool with_pi = true;           // demographics available
  bool zero_center_ecg = true;   // applied after local min-max
  bool zero_center_ppg = false;
  double test_frac = 0.2;

  int segment_len() const { return static_cast<int>(fs * segment_s + 0.5); }
};

struct Dataset {
  SynthConfig config;
  std::uint64_t seed = 0;
  std::vector<PatientProfile> patients;
  std::vector<Record> records;
  SplitManifest splits;
  GlobalBounds bounds;

  const PatientProfile* patient(int id) const;
  const Record* record(int patient_id, int segment_id) const;
  std::vector<int> record_indices_for_patients(const std::vector<int>& patient_ids) const;
  std::vector<int> record_indices_for_segments(
      const std::vector<std::pair<int, int>>& segs) const;
};

PatientProfile generate_patient(int patient_id, Rng& rng);
Record synthesize_record(const PatientProfile& p, int segment_id, double segment_s, double fs,
                         double noise, Rng& rng);

SplitManifest make_splits(const std::vector<PatientProfile>& patients,
                          const std::vector<Record>& records, double test_frac,
                          std::uint64_t seed);

// Full pipeline: patients, records, splits, bounds.
Dataset generate_dataset(const SynthConfig& cfg, std::uint64_t seed);

void write_dataset(const std::string& dir, const Dataset& ds);
Dataset read_dataset(const std::string& dir);

// CSV ingest for user-supplied data: waveforms.csv has one row per sample
// (patient_id,segment_id,ecg,ppg,abp), patients.csv one row per patient
// (patient_id,age,sex,height,weight,bmi). Annotations are left empty; SBP/DBP
// are taken from the ABP extremes.
Dataset ingest_csv_dataset(const std::string& dir, const SynthConfig& cfg, std::uint64_t seed);

// One (source kind, target kind, record) conversion sample; i != j always.
struct DirectedSample {
  int record_index;
  Kind src;
  Kind dst;
};

std::vector<DirectedSample> sample_direction_batch(const Dataset& ds,
                                                   const std::vector<int>& record_indices,
                                                   int batch_size, Rng& rng);

// Model-facing view of a stored waveform: local min-max plus the dataset's
// zero-centering flags. ABP is never zero-centered.
std::vector<double> prepared_wave(const Dataset& ds, const Record& rec, Kind kind);

}  // namespace vsc
