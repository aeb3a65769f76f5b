#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

// End-to-end checks against the built command-line binary.

namespace {

namespace fs = std::filesystem;

std::string cli() { return VSC_CLI_PATH; }
std::string tmp_root() { return std::string(VSC_TEST_TMP) + "/cli"; }

int run(const std::string& args) {
  const std::string cmd = cli() + " " + args + " >/dev/null 2>&1";
  return std::system(cmd.c_str());
}

std::string slurp(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("cli: synth is byte-identical under a fixed seed") {
  const std::string a = tmp_root() + "/synth_a";
  const std::string b = tmp_root() + "/synth_b";
  fs::remove_all(a);
  fs::remove_all(b);
  REQUIRE(run("synth --patients 8 --segments-per-patient 2 --segment-s 1.024 --seed 1 --out " +
              a) == 0);
  REQUIRE(run("synth --patients 8 --segments-per-patient 2 --segment-s 1.024 --seed 1 --out " +
              b) == 0);
  for (const char* f : {"manifest.json", "apx_train.bin", "apx_val.bin", "apx_test.bin"}) {
    CHECK(slurp(a + "/" + f) == slurp(b + "/" + f));
    CHECK(!slurp(a + "/" + f).empty());
  }
  // different seed differs
  const std::string c = tmp_root() + "/synth_c";
  fs::remove_all(c);
  REQUIRE(run("synth --patients 8 --segments-per-patient 2 --segment-s 1.024 --seed 2 --out " +
              c) == 0);
  CHECK(slurp(a + "/apx_train.bin") != slurp(c + "/apx_train.bin"));
}

TEST_CASE("cli: evaluate on an untrained run directory fails with a clear error") {
  const std::string data = tmp_root() + "/synth_a";  // created above
  const std::string empty_run = tmp_root() + "/empty_run";
  fs::create_directories(empty_run);
  const std::string cmd = cli() + " evaluate --data " + data + " --run " + empty_run +
                          " --out " + tmp_root() + "/never 2>" + tmp_root() + "/eval_err.txt";
  CHECK(std::system(cmd.c_str()) != 0);
  const std::string err = slurp(tmp_root() + "/eval_err.txt");
  CHECK(err.find("checkpoint missing") != std::string::npos);
}

TEST_CASE("cli: unknown config keys are rejected") {
  const std::string cfg = tmp_root() + "/bad.cfg";
  {
    std::ofstream os(cfg, std::ios::trunc);
    os << "[run]\nbatch_sizee = 8\n";
  }
  const std::string cmd = cli() + " train-apx --data " + tmp_root() + "/synth_a --config " + cfg +
                          " --out " + tmp_root() + "/bad_run 2>" + tmp_root() + "/cfg_err.txt";
  CHECK(std::system(cmd.c_str()) != 0);
  CHECK(slurp(tmp_root() + "/cfg_err.txt").find("unknown keys") != std::string::npos);
}

TEST_CASE("cli: quickstart pipeline synth -> train-apx -> train-ref -> evaluate") {
  const std::string root = tmp_root() + "/pipeline";
  fs::remove_all(root);
  fs::create_directories(root);
  const std::string data = root + "/data";
  const std::string cfg = root + "/run.cfg";
  {
    std::ofstream os(cfg, std::ios::trunc);
    os << "[run]\nseed = 3\nbatch_size = 6\nmax_steps = 80\nval_interval = 20\n"
       << "val_max_samples = 8\nrequire_pretrain = true\n"
       << "[apx]\nbase_channels = 4\nembed_channels = 16\nheads = 2\nstyle_dim = 8\n"
       << "[refine]\ninput_len = 128\nhidden = 8\nlayers = 1\nexpansion = 2\nembed_dim = 16\n"
       << "pi_embed = 8\npi_hidden = 8\nreg_hidden = 8\n";
  }
  REQUIRE(run("synth --patients 10 --segments-per-patient 4 --segment-s 1.024 --test-frac 0.3 "
              "--seed 4 --out " +
              data) == 0);
  REQUIRE(run("train-apx --data " + data + " --config " + cfg + " --out " + root + "/apx") == 0);
  REQUIRE(run("train-ref --data " + data + " --config " + cfg + " --stage pretrain --out " +
              root + "/pre") == 0);
  REQUIRE(run("train-ref --data " + data + " --config " + cfg + " --stage finetune --init " +
              root + "/pre --out " + root + "/ref") == 0);
  REQUIRE(run("evaluate --data " + data + " --run " + root + "/apx --refine " + root +
              "/ref --out " + root + "/report") == 0);
  for (const char* f :
       {"report.json", "report.txt", "metrics.csv", "features.csv", "mae.svg", "pc.svg"}) {
    CHECK(fs::exists(root + "/report/" + std::string(f)));
  }
  // convert: normalized and refined outputs
  REQUIRE(run("convert --data " + data + " --checkpoint " + root + "/apx --source PPG "
              "--target ABP --refine " + root + "/ref --limit 2 --out " + root + "/conv.csv") ==
          0);
  CHECK(slurp(root + "/conv.csv").find("mmHg") != std::string::npos);

  // report aggregation over the single run's report
  REQUIRE(run("report --runs " + root + "/report --out " + root + "/agg") == 0);
  CHECK(fs::exists(root + "/agg/aggregate.csv"));
}

TEST_CASE("cli: train-uni rejects a degenerate direction") {
  const std::string data = tmp_root() + "/synth_a";
  CHECK(run("train-uni --data " + data + " --direction ECG:ECG --out " + tmp_root() +
            "/uni_bad") != 0);
}

TEST_CASE("cli: evaluate honors a direction subset without a refinement model") {
  // relies on the pipeline test's run directory
  const std::string root = tmp_root() + "/pipeline";
  REQUIRE(fs::exists(root + "/apx/checkpoint.bin"));
  REQUIRE(run("evaluate --data " + root + "/data --run " + root +
              "/apx --directions ECG:PPG,PPG:ECG --out " + root + "/subset") == 0);
  const std::string metrics = slurp(root + "/subset/metrics.csv");
  CHECK(metrics.find("ECG->PPG") != std::string::npos);
  CHECK(metrics.find("PPG->ECG") != std::string::npos);
  CHECK(metrics.find("ABP") == std::string::npos);

  // ABP targets without --refine fail with a clear message
  const std::string cmd = cli() + " evaluate --data " + root + "/data --run " + root +
                          "/apx --directions ECG:ABP --out " + root + "/never 2>" + root +
                          "/abp_err.txt";
  CHECK(std::system(cmd.c_str()) != 0);
  CHECK(slurp(root + "/abp_err.txt").find("refinement") != std::string::npos);
}

TEST_CASE("cli: csv ingest through synth --from-csv") {
  const std::string root = tmp_root() + "/ingest";
  fs::remove_all(root);
  fs::create_directories(root + "/raw");
  {
    std::ofstream pf(root + "/raw/patients.csv", std::ios::trunc);
    pf << "patient_id,age,sex,height,weight,bmi\n";
    for (int p = 0; p < 6; ++p) pf << p << "," << 35 + p << ",F,165,,\n";
    std::ofstream wf(root + "/raw/waveforms.csv", std::ios::trunc);
    wf << "patient_id,segment_id,ecg,ppg,abp\n";
    for (int p = 0; p < 6; ++p)
      for (int s = 0; s < 2; ++s)
        for (int i = 0; i < 64; ++i) {
          const double t = i / 64.0;
          wf << p << "," << s << "," << 0.2 * std::sin(12.6 * t) << ","
             << 0.5 + 0.4 * std::cos(12.6 * t) << "," << 75.0 + 45.0 * t << "\n";
        }
  }
  REQUIRE(run("synth --from-csv " + root + "/raw --fs 64 --segment-s 1 --test-frac 0.34 "
              "--seed 2 --out " + root + "/data") == 0);
  CHECK(fs::exists(root + "/data/manifest.json"));
  CHECK(fs::exists(root + "/data/apx_train.bin"));
  const std::string manifest = slurp(root + "/data/manifest.json");
  CHECK(manifest.find("\"format\": \"vsc-dataset\"") != std::string::npos);
}
