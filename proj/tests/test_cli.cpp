#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>
#include <unistd.h>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include "covhmm/io.hpp"
#include "covhmm/synthgen.hpp"

namespace fs = std::filesystem;
using namespace covhmm;

namespace {

struct Run {
  int status = -1;
  std::string output;  // stdout and stderr
};

Run run(const std::string& args) {
  const std::string cmd = std::string("\"") + COVHMM_CLI_PATH + "\" " + args + " 2>&1";
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::size_t n = std::fread(buf, 1, sizeof(buf), pipe)) r.output.append(buf, n);
  const int raw = pclose(pipe);
  r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
  return r;
}

class TempDir {
 public:
  TempDir() : path_(fs::temp_directory_path() / ("covhmm_cli_" + std::to_string(::getpid()) + "_" +
                                                  std::to_string(counter_++))) {
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  std::string operator/(const std::string& name) const { return (path_ / name).string(); }

 private:
  static inline int counter_ = 0;
  fs::path path_;
};

std::string read(const std::string& path) { return io::read_file(path); }

std::map<std::string, double> posteriors_from_csv(const std::string& csv) {
  std::map<std::string, double> out;
  std::istringstream in(csv);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    const auto f = io::split(line, ',');
    out[std::string(f[0])] = io::parse_double(f[2], "posterior_c");
  }
  return out;
}

// Raw CSVs whose binning reproduces a synthetic cohort: one reading per
// observed bin, one hour into the bin.
void write_raw(const std::vector<PatientSequence>& patients, const std::string& meas, const std::string& cov) {
  std::string m = "patient_id,hours_since_surgery,temp_f\n";
  std::string c =
      "patient_id,age,gender,surgery_hours,tumor,htn,arrhythmia,fluid_electrolyte,valvular,liver,pulmonary,"
      "diabetes,label\n";
  for (const auto& p : patients) {
    for (std::size_t t = 0; t < p.seq.size(); ++t) {
      if (p.seq.observed[t]) {
        m += p.patient_id + "," + io::format_double(4.0 * static_cast<double>(t) + 1.0) + "," +
             io::format_double(p.seq.values[t]) + "\n";
      }
    }
    c += p.patient_id + "," + io::format_double(p.z.age) + "," + (p.z.gender ? "1" : "0") + "," +
         io::format_double(p.z.surgery_hours);
    for (bool f : p.z.comorbidities) c += f ? ",1" : ",0";
    c += "," + std::string(to_string(*p.label)) + "\n";
  }
  io::write_file_atomic(meas, m);
  io::write_file_atomic(cov, c);
}

}  // namespace

TEST_CASE("help output matches the snapshots") {
  const bool update = std::getenv("COVHMM_UPDATE_SNAPSHOTS") != nullptr;
  for (std::string sub : {"", "ingest", "synth", "train", "classify", "score-stream", "evaluate", "early-curve",
                          "prevalence"}) {
    CAPTURE(sub);
    const Run r = run(sub + " --help");
    CHECK(r.status == 0);
    const std::string file =
        std::string(COVHMM_SNAPSHOT_DIR) + "/" + (sub.empty() ? std::string("covhmm") : sub) + ".txt";
    if (update) {
      io::write_file_atomic(file, r.output);
      continue;
    }
    REQUIRE(fs::exists(file));
    CHECK(r.output == read(file));
  }
}

TEST_CASE("every subcommand documents the shared flags it accepts") {
  const std::map<std::string, std::vector<std::string>> expected = {
      {"train", {"--seed", "--max-iters", "--tol", "--restarts", "--l2", "--prior", "--jobs", "--out"}},
      {"evaluate", {"--seed", "--k", "--max-iters", "--tol", "--restarts", "--l2", "--threshold", "--hours",
                    "--jobs", "--out"}},
      {"early-curve", {"--seed", "--k", "--hours", "--threshold", "--jobs", "--out"}},
      {"classify", {"--threshold", "--prior", "--out"}},
      {"synth", {"--seed", "--out"}},
  };
  for (const auto& [sub, flags] : expected) {
    const Run r = run(sub + " --help");
    for (const auto& f : flags) {
      CAPTURE(sub);
      CAPTURE(f);
      CHECK(r.output.find(f) != std::string::npos);
    }
  }
}

TEST_CASE("usage errors exit with status 2") {
  TempDir dir;
  CHECK(run("").status == 2);
  CHECK(run("frobnicate").status == 2);
  CHECK(run("synth --n 10 --out " + dir / "d.jsonl").status == 2);  // no --seed
  CHECK(run("synth --seed 1 --scenario nope --out " + dir / "d.jsonl").status == 2);
  CHECK(run("train --data " + dir / "missing.jsonl" + " --seed 1 --out " + dir / "m.json").status == 2);
  REQUIRE(run("synth --seed 1 --n 30 --out " + dir / "d.jsonl").status == 0);
  CHECK(run("evaluate --data " + dir / "d.jsonl" + " --seed 1 --out /nonexistent/dir/r.json").status == 2);
  CHECK(run("early-curve --data " + dir / "d.jsonl" + " --seed 1 --hours 24,x --out " + dir / "c.csv").status == 2);
  CHECK(run("train --data " + dir / "d.jsonl" + " --seed 1 --prior 1 --out " + dir / "m.json").status == 2);
  CHECK_FALSE(fs::exists(dir / "m.json"));
}

TEST_CASE("data errors exit with status 1 and leave no output") {
  TempDir dir;
  REQUIRE(run("synth --seed 3 --n 40 --out " + dir / "d.jsonl").status == 0);
  // Keep only the NC patients.
  std::istringstream in(read(dir / "d.jsonl"));
  std::string line, nc_only;
  while (std::getline(in, line)) {
    if (line.find("\"label\":\"NC\"") != std::string::npos) nc_only += line + "\n";
  }
  io::write_file_atomic(dir / "nc.jsonl", nc_only);
  const Run r = run("train --data " + dir / "nc.jsonl" + " --seed 1 --out " + dir / "m.json");
  CHECK(r.status == 1);
  CHECK(r.output.find("single class") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "m.json"));
  CHECK_FALSE(fs::exists(dir / "m.json.tmp"));

  io::write_file_atomic(dir / "bad.jsonl", "{\"patient_id\": \"x\"\n");
  const Run bad = run("classify --data " + dir / "bad.jsonl" + " --model " + dir / "bad.jsonl" + " --out " +
                      dir / "p.csv");
  CHECK(bad.status == 1);
  CHECK(bad.output.find("bad.jsonl") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "p.csv"));
}

TEST_CASE("ingest, train, classify and score-stream agree") {
  TempDir dir;
  const auto cohort = generate(scenario("separated", 60, 5)).patients;
  write_raw(cohort, dir / "meas.csv", dir / "cov.csv");
  REQUIRE(run("ingest --measurements " + dir / "meas.csv" + " --covariates " + dir / "cov.csv" + " --out " +
              dir / "d.jsonl")
              .status == 0);
  REQUIRE(run("train --data " + dir / "d.jsonl" + " --seed 4 --restarts 1 --max-iters 20 --jobs 1 --out " +
              dir / "m.json")
              .status == 0);
  REQUIRE(run("classify --data " + dir / "d.jsonl" + " --model " + dir / "m.json" + " --out " + dir / "p.csv")
              .status == 0);
  const auto post = posteriors_from_csv(read(dir / "p.csv"));
  REQUIRE(post.size() == cohort.size());
  for (const std::string id : {"P00", "P17", "P42"}) {
    CAPTURE(id);
    REQUIRE(run("score-stream --measurements " + dir / "meas.csv" + " --covariates " + dir / "cov.csv" +
                " --patient " + id + " --model " + dir / "m.json" + " --out " + dir / "s.csv")
                .status == 0);
    const std::string csv = read(dir / "s.csv");
    CHECK(csv.rfind("bin,hours,temp_f,risk_c\n", 0) == 0);
    const auto last_line = csv.substr(csv.find_last_of('\n', csv.size() - 2) + 1);
    const double last = io::parse_double(io::trim(last_line.substr(last_line.find_last_of(',') + 1)), "risk_c");
    CHECK(std::abs(last - post.at(id)) <= 1e-12);
  }
  const Run unknown = run("score-stream --measurements " + dir / "meas.csv" + " --covariates " + dir / "cov.csv" +
                          " --patient nobody --model " + dir / "m.json" + " --out " + dir / "s2.csv");
  CHECK(unknown.status == 1);
  CHECK(unknown.output.find("nobody") != std::string::npos);

  REQUIRE(run("prevalence --data " + dir / "d.jsonl" + " --model " + dir / "m.json" + " --class NC --out " +
              dir / "prev.csv")
              .status == 0);
  CHECK(read(dir / "prev.csv").rfind("bin,hours,share_s1,share_s2,share_s3\n", 0) == 0);
}

TEST_CASE("synth and evaluate are reproducible byte for byte") {
  TempDir dir;
  std::string reports[2], curves[2];
  for (int i = 0; i < 2; ++i) {
    const std::string d = dir / ("d" + std::to_string(i) + ".jsonl");
    REQUIRE(run("synth --seed 11 --n 80 --out " + d).status == 0);
    REQUIRE(run("evaluate --data " + d + " --k 3 --seed 11 --restarts 2 --max-iters 10 --jobs " +
                std::to_string(1 + 2 * i) + " --out " + dir / ("r" + std::to_string(i) + ".json"))
                .status == 0);
    REQUIRE(run("early-curve --data " + d + " --k 3 --seed 11 --restarts 1 --max-iters 10 --hours 24,48 --out " +
                dir / ("c" + std::to_string(i) + ".csv"))
                .status == 0);
    reports[i] = read(dir / ("r" + std::to_string(i) + ".json"));
    curves[i] = read(dir / ("c" + std::to_string(i) + ".csv"));
  }
  CHECK(read(dir / "d0.jsonl") == read(dir / "d1.jsonl"));
  CHECK(reports[0] == reports[1]);
  CHECK(curves[0] == curves[1]);
  CHECK(curves[0].rfind("hours,auc,f_score,g_means\n24,", 0) == 0);
}
