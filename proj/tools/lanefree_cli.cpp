// Copyright 2026 The Lanefree Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at

//     https://www.apache.org/licenses/LICENSE-2.0

// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Command-line front end: solve, certify and sweep crossing scenarios.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lanefree/harness.hpp"

namespace {

struct CommonFlags {
  int intervals = 15;
  int degree = 5;
  double tol = 1e-6;
  uint64_t seed = 0;
  int max_iter = 3000;
  bool verbose = false;

  void Attach(CLI::App* app) {
    app->add_option("--np", intervals, "Number of collocation intervals")->check(CLI::PositiveNumber);
    app->add_option("--degree", degree, "Collocation points per interval")->check(CLI::Range(1, 9));
    app->add_option("--tol", tol, "KKT and feasibility tolerance")->check(CLI::PositiveNumber);
    app->add_option("--seed", seed, "Seed recorded with the solve");
    app->add_option("--max-iter", max_iter, "Solver iteration limit")->check(CLI::PositiveNumber);
    app->add_flag("-v,--verbose", verbose, "Print solver iterations");
  }

  lanefree::RunOptions Options() const {
    lanefree::RunOptions o;
    o.transcription.intervals = intervals;
    o.transcription.degree = degree;
    o.solver.kkt_tol = tol;
    o.solver.constr_tol = tol;
    o.solver.seed = seed;
    o.solver.max_iterations = max_iter;
    o.solver.verbose = verbose;
    return o;
  }
};

std::vector<int> ParseList(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size() || v < 1) throw CLI::ValidationError("--n", "expected positive integers, got '" + tok + "'");
    out.push_back(v);
  }
  if (out.empty()) throw CLI::ValidationError("--n", "empty list");
  return out;
}

int Solve(const std::string& path, const std::string& out_dir, const CommonFlags& flags) {
  lanefree::RunOptions opt = flags.Options();
  opt.out_dir = out_dir;
  const lanefree::RunResult r = lanefree::RunScenarioFile(path, opt);
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << "\n";
  if (r.exit_code == lanefree::kExitInvalidScenario) {
    std::cerr << r.message << "\n";
    return r.exit_code;
  }
  std::cout << "status " << lanefree::ToString(r.outcome.status) << " after " << r.outcome.iterations
            << " iterations, " << r.outcome.wall_time << " s\n";
  if (r.solution) {
    std::cout << "t_f " << r.solution->tf << " s, average speed " << r.metrics.average_speed << " m/s, throughput "
              << r.metrics.throughput_per_s << " veh/s\n";
    std::cout << "certification " << r.certification.Summary() << "\n";
  }
  std::cout << "artifacts in " << out_dir << "\n";
  if (r.exit_code != lanefree::kExitOk) std::cerr << r.message << "\n";
  return r.exit_code;
}

int Certify(const std::string& solution_path, const std::string& scenario_path) {
  lanefree::Scenario sc;
  lanefree::CrossingSolution sol;
  try {
    sc = lanefree::LoadScenario(scenario_path);
    sol = lanefree::LoadSolution(solution_path);
  } catch (const lanefree::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return lanefree::kExitInvalidScenario;
  }
  const lanefree::CertificationReport rep = lanefree::Certify(sol, sc);
  std::cout << rep.Summary() << "\n";
  return rep.passed ? lanefree::kExitOk : lanefree::kExitCertificationFailed;
}

int Sweep(const std::string& path, const std::string& ns, int reps, const std::string& out_dir,
          const CommonFlags& flags) {
  lanefree::Scenario tmpl;
  try {
    tmpl = lanefree::LoadScenario(path);
  } catch (const lanefree::ScenarioError& e) {
    std::cerr << e.what() << "\n";
    return lanefree::kExitInvalidScenario;
  }
  lanefree::SweepOptions opt;
  opt.fleet_sizes = ParseList(ns);
  for (int n : opt.fleet_sizes) {
    if (n > static_cast<int>(tmpl.cavs.size())) {
      std::cerr << "template has " << tmpl.cavs.size() << " vehicles, cannot take " << n << "\n";
      return lanefree::kExitInvalidScenario;
    }
  }
  opt.repetitions = reps;
  const lanefree::RunOptions ro = flags.Options();
  opt.transcription = ro.transcription;
  opt.solver = ro.solver;

  const lanefree::SweepSummary s = lanefree::RunSweep(tmpl, opt);
  std::filesystem::create_directories(out_dir);
  const std::filesystem::path dir(out_dir);
  {
    std::ofstream os(dir / "sweep.csv");
    lanefree::WriteSweepCsv(os, s);
  }
  {
    std::ofstream os(dir / "sweep_cells.csv");
    lanefree::WriteSweepCellsCsv(os, s);
  }
  {
    std::ofstream os(dir / "sweep.svg");
    lanefree::WriteSweepSvg(os, s);
  }
  {
    std::ofstream os(dir / "fit.json");
    os << lanefree::SweepFitToJson(s.fit).dump(2) << "\n";
  }
  lanefree::WriteSweepCsv(std::cout, s);
  for (const auto& c : s.cells) {
    if (c.exit_code != lanefree::kExitOk) {
      std::cerr << "N=" << c.n << " rep " << c.rep << ": " << c.message << "\n";
    }
  }
  if (s.fit.valid) {
    std::cout << "log-time fit: slope " << s.fit.slope << " per vehicle, R^2 " << s.fit.r2 << "\n";
  } else {
    std::cout << "log-time fit: not enough solved fleet sizes\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Minimum-time lane-free intersection crossing"};
  app.require_subcommand(1);

  CommonFlags solve_flags, sweep_flags;
  std::string scenario, solution, out_dir = "out", sweep_dir = "sweep_out", ns = "1,2,3";
  int reps = 3;

  CLI::App* solve = app.add_subcommand("solve", "Solve a scenario and write artifacts");
  solve->add_option("scenario", scenario, "Scenario JSON")->required();
  solve->add_option("--out", out_dir, "Artifact directory");
  solve_flags.Attach(solve);

  CLI::App* certify = app.add_subcommand("certify", "Check a stored solution against a scenario");
  certify->add_option("solution", solution, "Solution JSON")->required();
  certify->add_option("scenario", scenario, "Scenario JSON")->required();

  CLI::App* sweep = app.add_subcommand("sweep", "Time solves over the first N vehicles of a template");
  sweep->add_option("template", scenario, "Scenario JSON")->required();
  sweep->add_option("--n", ns, "Comma-separated fleet sizes");
  sweep->add_option("--reps", reps, "Repetitions per fleet size")->check(CLI::PositiveNumber);
  sweep->add_option("--out", sweep_dir, "Output directory");
  sweep_flags.Attach(sweep);

  try {
    app.parse(argc, argv);
    if (*solve) return Solve(scenario, out_dir, solve_flags);
    if (*certify) return Certify(solution, scenario);
    if (*sweep) return Sweep(scenario, ns, reps, sweep_dir, sweep_flags);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
