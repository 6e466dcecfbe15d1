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

#ifndef LANEFREE_HARNESS_HPP_
#define LANEFREE_HARNESS_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "lanefree/geometry.hpp"
#include "lanefree/scenario.hpp"
#include "lanefree/solver.hpp"
#include "lanefree/transcription.hpp"

namespace lanefree {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInvalidScenario = 2;
inline constexpr int kExitSolverFailed = 3;
inline constexpr int kExitCertificationFailed = 4;

// ---------------------------------------------------------------------------
// Certification

struct CertificationViolation {
  double time = 0.0;
  std::string kind;  // "pair" or "road"
  std::string first;
  std::string second;  // vehicle id or boundary name
  double distance = 0.0;
  double required = 0.0;
};

struct BoundWarning {
  double time = 0.0;
  std::string id;
  LimitViolation violation;
};

struct CertificationReport {
  bool passed = true;
  int samples = 0;
  double tolerance = 1e-6;

  double min_pair_distance = std::numeric_limits<double>::infinity();
  double min_pair_time = 0.0;
  std::string min_pair_first, min_pair_second;

  double min_road_distance = std::numeric_limits<double>::infinity();
  double min_road_time = 0.0;
  std::string min_road_id, min_road_boundary;

  int violation_count = 0;
  std::optional<CertificationViolation> first_violation;
  std::vector<CertificationViolation> violations;  // in sample order
  std::vector<BoundWarning> bound_warnings;
  std::vector<std::string> errors;  // structural problems (mismatched ids, empty grid)

  std::string Summary() const;
};

// Checks the sampled trajectories with the primal distance oracle only. Dual
// values stored in the solution are never read.
inline CertificationReport Certify(const CrossingSolution& sol, const Scenario& sc,
                                   double tolerance = 1e-6) {
  CertificationReport rep;
  rep.tolerance = tolerance;
  const size_t n = sc.cavs.size();
  if (sol.cavs.size() != n) {
    rep.errors.push_back("solution has " + std::to_string(sol.cavs.size()) + " vehicles, scenario has " +
                         std::to_string(n));
  } else {
    for (size_t c = 0; c < n; ++c) {
      if (sol.cavs[c].id != sc.cavs[c].id) {
        rep.errors.push_back("vehicle " + std::to_string(c) + " is '" + sol.cavs[c].id + "' in the solution, '" +
                             sc.cavs[c].id + "' in the scenario");
      }
      if (sol.cavs[c].states.size() != sol.times.size() || sol.cavs[c].inputs.size() != sol.times.size()) {
        rep.errors.push_back("vehicle '" + sol.cavs[c].id + "' sample count does not match the time grid");
      }
    }
  }
  if (sol.times.empty()) rep.errors.push_back("solution has no samples");
  if (!rep.errors.empty()) {
    rep.passed = false;
    return rep;
  }

  std::vector<ConvexPolytope> base(n);
  for (size_t c = 0; c < n; ++c) base[c] = BaseBodyPolytope(sc.cavs[c].params);

  auto record = [&](CertificationViolation v) {
    ++rep.violation_count;
    rep.violations.push_back(v);
    if (!rep.first_violation || v.time < rep.first_violation->time) rep.first_violation = v;
  };

  std::vector<ConvexPolytope> bodies(n);
  for (size_t k = 0; k < sol.times.size(); ++k) {
    const double t = sol.times[k];
    for (size_t c = 0; c < n; ++c) {
      const auto& s = sol.cavs[c].states[k];
      bodies[c] = PolytopeAtPose(base[c], Pose{s[kPosX], s[kPosY], s[kHeading]});

      const VehicleState vs{s[kYawRate], s[kSideslip], s[kSpeed], s[kPosX], s[kPosY], s[kHeading]};
      const auto& u = sol.cavs[c].inputs[k];
      for (const auto& lv : CheckLimits(vs, ControlInput{u[kAccel], u[kSteer]}, sc.cavs[c].bounds, tolerance)) {
        rep.bound_warnings.push_back({t, sc.cavs[c].id, lv});
      }

      for (size_t r = 0; r < sc.layout.boundaries.size(); ++r) {
        const double d = MinDistanceOracle(bodies[c], sc.layout.boundaries[r]);
        if (d < rep.min_road_distance) {
          rep.min_road_distance = d;
          rep.min_road_time = t;
          rep.min_road_id = sc.cavs[c].id;
          rep.min_road_boundary = IntersectionLayout::kBoundaryNames[r];
        }
        if (d < sc.d_rmin - tolerance) {
          record({t, "road", sc.cavs[c].id, IntersectionLayout::kBoundaryNames[r], d, sc.d_rmin});
        }
      }
    }
    for (size_t i = 0; i < n; ++i) {
      for (size_t j = i + 1; j < n; ++j) {
        const double d = MinDistanceOracle(bodies[i], bodies[j]);
        if (d < rep.min_pair_distance) {
          rep.min_pair_distance = d;
          rep.min_pair_time = t;
          rep.min_pair_first = sc.cavs[i].id;
          rep.min_pair_second = sc.cavs[j].id;
        }
        if (d < sc.d_min - tolerance) record({t, "pair", sc.cavs[i].id, sc.cavs[j].id, d, sc.d_min});
      }
    }
    ++rep.samples;
  }
  rep.passed = rep.violation_count == 0;
  return rep;
}

inline std::string CertificationReport::Summary() const {
  std::ostringstream os;
  os << (passed ? "PASS" : "FAIL") << ": " << samples << " samples";
  for (const auto& e : errors) os << "\n  error: " << e;
  if (std::isfinite(min_pair_distance)) {
    os << "\n  min pair distance " << min_pair_distance << " m between '" << min_pair_first << "' and '"
       << min_pair_second << "' at t=" << min_pair_time << " s";
  } else if (errors.empty()) {
    os << "\n  no vehicle pairs";
  }
  if (std::isfinite(min_road_distance)) {
    os << "\n  min road clearance " << min_road_distance << " m, '" << min_road_id << "' to " << min_road_boundary
       << " at t=" << min_road_time << " s";
  }
  if (first_violation) {
    const auto& v = *first_violation;
    os << "\n  " << violation_count << " violating samples; first at t=" << v.time << " s: " << v.kind << " '"
       << v.first << "'/'" << v.second << "' distance " << v.distance << " < " << v.required;
  }
  if (!bound_warnings.empty()) {
    const auto& w = bound_warnings.front();
    os << "\n  warning: " << bound_warnings.size() << " bound excursions between samples; first at t=" << w.time
       << " s, '" << w.id << "' " << w.violation.quantity << "=" << w.violation.value << " (bound "
       << w.violation.bound << ")";
  }
  return os.str();
}

inline nlohmann::json CertificationToJson(const CertificationReport& r) {
  nlohmann::json j;
  j["passed"] = r.passed;
  j["samples"] = r.samples;
  j["violations"] = r.violation_count;
  j["bound_warnings"] = r.bound_warnings.size();
  if (std::isfinite(r.min_pair_distance)) {
    j["min_pair_distance"] = r.min_pair_distance;
    j["min_pair_time"] = r.min_pair_time;
    j["min_pair"] = {r.min_pair_first, r.min_pair_second};
  }
  if (std::isfinite(r.min_road_distance)) {
    j["min_road_distance"] = r.min_road_distance;
    j["min_road_time"] = r.min_road_time;
    j["min_road"] = {r.min_road_id, r.min_road_boundary};
  }
  if (r.first_violation) {
    j["first_violation"] = {{"time", r.first_violation->time},
                            {"kind", r.first_violation->kind},
                            {"between", {r.first_violation->first, r.first_violation->second}},
                            {"distance", r.first_violation->distance}};
  }
  return j;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
  int num_cavs = 0;
  double crossing_time = 0.0;
  double average_speed = 0.0;
  double speed_std = 0.0;  // population standard deviation over all samples
  double throughput_per_s = 0.0;
  double throughput_per_h = 0.0;
};

inline Metrics ComputeMetrics(const CrossingSolution& sol) {
  Metrics m;
  m.num_cavs = static_cast<int>(sol.cavs.size());
  m.crossing_time = sol.tf - sol.t0;
  double sum = 0.0, sum_sq = 0.0;
  long count = 0;
  for (const auto& c : sol.cavs) {
    for (const auto& s : c.states) {
      sum += s[kSpeed];
      ++count;
    }
  }
  if (count > 0) {
    m.average_speed = sum / static_cast<double>(count);
    for (const auto& c : sol.cavs) {
      for (const auto& s : c.states) sum_sq += (s[kSpeed] - m.average_speed) * (s[kSpeed] - m.average_speed);
    }
    m.speed_std = std::sqrt(sum_sq / static_cast<double>(count));
  }
  if (m.crossing_time > 0.0) {
    m.throughput_per_s = m.num_cavs / m.crossing_time;
    m.throughput_per_h = 3600.0 * m.throughput_per_s;
  }
  return m;
}

inline nlohmann::json MetricsToJson(const Metrics& m) {
  return {{"num_cavs", m.num_cavs},
          {"min_crossing_time", m.crossing_time},
          {"average_speed", m.average_speed},
          {"speed_std", m.speed_std},
          {"throughput_veh_per_s", m.throughput_per_s},
          {"throughput_veh_per_h", m.throughput_per_h}};
}

// ---------------------------------------------------------------------------
// Artifacts

inline void WriteTrajectoriesCsv(std::ostream& os, const CrossingSolution& sol) {
  os << "t,id,x,y,theta,V,r,beta,a,delta\n";
  char buf[256];
  for (size_t k = 0; k < sol.times.size(); ++k) {
    for (const auto& c : sol.cavs) {
      const auto& s = c.states[k];
      const auto& u = c.inputs[k];
      std::snprintf(buf, sizeof(buf), "%.4f,%s,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g\n", sol.times[k],
                    c.id.c_str(), s[kPosX], s[kPosY], s[kHeading], s[kSpeed], s[kYawRate], s[kSideslip],
                    u[kAccel], u[kSteer]);
      os << buf;
    }
  }
}

namespace internal {

inline const char* TraceColour(size_t i) {
  static constexpr std::array<const char*, 8> kColours = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e",
                                                          "#9467bd", "#8c564b", "#e377c2", "#17becf"};
  return kColours[i % kColours.size()];
}

inline std::string Escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace internal

// Top view of the junction with one position trace per vehicle.
inline void WriteTrajectorySvg(std::ostream& os, const CrossingSolution& sol, const Scenario& sc) {
  constexpr double kSize = 1000.0, kMargin = 40.0;
  const double e = sc.layout.extent();
  const double scale = (kSize - 2.0 * kMargin) / (2.0 * e);
  auto px = [&](double x) { return kMargin + (x + e) * scale; };
  auto py = [&](double y) { return kMargin + (e - y) * scale; };
  char buf[256];

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"1000\" viewBox=\"0 0 1000 1000\">\n";
  os << "<rect width=\"1000\" height=\"1000\" fill=\"white\"/>\n";
  for (const auto& b : sc.layout.boundaries) {
    const auto v = Vertices(b);
    os << "<polygon fill=\"#bbbbbb\" stroke=\"#444444\" points=\"";
    for (const auto& p : v) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(p.x()), py(p.y()));
      os << buf;
    }
    os << "\"/>\n";
  }
  std::snprintf(buf, sizeof(buf),
                "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"none\" stroke=\"#444444\"/>\n",
                px(-e), py(e), 2.0 * e * scale, 2.0 * e * scale);
  os << buf;

  for (size_t c = 0; c < sol.cavs.size(); ++c) {
    const auto& tr = sol.cavs[c];
    const char* col = internal::TraceColour(c);
    os << "<polyline fill=\"none\" stroke-width=\"2\" stroke=\"" << col << "\" points=\"";
    for (const auto& s : tr.states) {
      std::snprintf(buf, sizeof(buf), "%.2f,%.2f ", px(s[kPosX]), py(s[kPosY]));
      os << buf;
    }
    os << "\"/>\n";
    if (!tr.states.empty()) {
      const auto& s0 = tr.states.front();
      const auto& s1 = tr.states.back();
      std::snprintf(buf, sizeof(buf), "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"5\" fill=\"%s\"/>\n", px(s0[kPosX]),
                    py(s0[kPosY]), col);
      os << buf;
      std::snprintf(buf, sizeof(buf),
                    "<rect x=\"%.2f\" y=\"%.2f\" width=\"10\" height=\"10\" fill=\"none\" stroke=\"%s\"/>\n",
                    px(s1[kPosX]) - 5.0, py(s1[kPosY]) - 5.0, col);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"16\" fill=\"%s\">",
                  kMargin + 10.0, kMargin + 24.0 + 20.0 * static_cast<double>(c), col);
    os << buf << internal::Escape(tr.id) << "</text>\n";
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.0f\" y=\"%.0f\" font-family=\"sans-serif\" font-size=\"16\">t_f = %.3f s</text>\n",
                kSize - kMargin - 150.0, kMargin + 24.0, sol.tf);
  os << buf << "</svg>\n";
}

// ---------------------------------------------------------------------------
// End-to-end run

struct RunOptions {
  TranscriptionConfig transcription;
  SolverConfig solver;
  std::string out_dir;  // empty: no artifacts
};

struct RunResult {
  int exit_code = kExitOk;
  std::string message;
  std::vector<std::string> warnings;
  std::optional<CrossingSolution> solution;
  SolveOutcome outcome;
  std::vector<IterationRecord> log;
  CertificationReport certification;
  Metrics metrics;
};

struct ScenarioSolve {
  CrossingSolution solution;
  SolveResult result;                 // of the last round; iterations and time cover all rounds
  TranscriptionConfig transcription;  // as last solved, with any added gap links
  int rounds = 0;
};

// Gap links for the conditions that failed certification, over the node gap
// holding each violating sample and `window` gaps on either side. Pair links
// list the lower vehicle index first; links the transcription already has are
// skipped.
inline std::vector<GapLink> LinksForViolations(const CrossingNlp& nlp, const CrossingSolution& sol,
                                               const std::vector<CertificationViolation>& violations,
                                               int window = 1) {
  const Scenario& sc = nlp.scenario();
  auto cav_index = [&](const std::string& id) {
    for (int c = 0; c < nlp.num_cavs(); ++c) {
      if (sc.cavs[c].id == id) return c;
    }
    return -1;
  };
  std::vector<GapLink> out;
  const auto& have = nlp.config().gap_links;
  const double horizon = sol.tf - sol.t0;
  if (!(horizon > 0.0)) return out;
  for (const auto& v : violations) {
    GapLink base;
    base.road = v.kind == "road";
    base.first = cav_index(v.first);
    if (base.road) {
      const auto& names = IntersectionLayout::kBoundaryNames;
      base.second = static_cast<int>(std::find(names.begin(), names.end(), v.second) - names.begin());
      if (base.second >= static_cast<int>(names.size())) continue;
    } else {
      base.second = cav_index(v.second);
      if (base.second < base.first) std::swap(base.first, base.second);
    }
    if (base.first < 0 || base.second < 0) continue;
    const double tau = (v.time - sol.t0) / horizon;
    int g = 0;
    while (g + 2 < nlp.num_nodes() && nlp.node_tau(g + 1) <= tau) ++g;
    for (int k = std::max(0, g - window); k <= std::min(nlp.num_nodes() - 2, g + window); ++k) {
      GapLink l = base;
      l.node = k;
      if (std::ranges::find(have, l) == have.end() && std::ranges::find(out, l) == out.end()) out.push_back(l);
    }
  }
  return out;
}

// Transcribes and solves from the default guess. Clearance is imposed at the
// nodes; when the sampled trajectory fails certification, the failing
// conditions are linked across the surrounding node gaps and the problem is
// solved again, for at most max_rounds solves in total.
inline ScenarioSolve SolveScenario(const Scenario& sc, const TranscriptionConfig& tc, const SolverConfig& cfg,
                                   const NlpSolver& solver = InteriorPointSolver(), int max_rounds = 4) {
  ScenarioSolve out;
  out.transcription = tc;
  int total_iter = 0;
  double total_time = 0.0;
  std::vector<IterationRecord> log;
  while (true) {
    const CrossingNlp nlp(sc, out.transcription);
    out.result = solver.Solve(nlp, nlp.InitialGuess(), cfg);
    ++out.rounds;
    total_iter += out.result.outcome.iterations;
    total_time += out.result.outcome.wall_time;
    for (auto rec : out.result.log) {
      rec.iter = static_cast<int>(log.size()) + 1;
      log.push_back(rec);
    }
    out.solution = nlp.Extract(out.result.x);
    const SolveStatus st = out.result.outcome.status;
    if (out.rounds >= max_rounds || (st != SolveStatus::kOptimal && st != SolveStatus::kAcceptable)) break;
    const CertificationReport rep = Certify(out.solution, sc);
    if (rep.passed || !rep.errors.empty()) break;
    const std::vector<GapLink> add = LinksForViolations(nlp, out.solution, rep.violations);
    if (add.empty()) break;
    out.transcription.gap_links.insert(out.transcription.gap_links.end(), add.begin(), add.end());
  }
  out.result.outcome.iterations = total_iter;
  out.result.outcome.wall_time = total_time;
  out.result.log = std::move(log);
  const SolveOutcome& o = out.result.outcome;
  out.solution.status = ToString(o.status);
  out.solution.iterations = o.iterations;
  out.solution.stationarity = o.stationarity;
  out.solution.primal_infeasibility = o.primal_infeasibility;
  out.solution.complementarity = o.complementarity;
  out.solution.objective = o.objective;
  return out;
}

inline void WriteArtifacts(const std::filesystem::path& dir, const RunResult& r, const Scenario& sc) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream os(dir / "iterations.log");
    WriteIterationLog(os, r.log);
  }
  if (!r.solution) return;
  {
    std::ofstream os(dir / "solution.json");
    os << SolutionToJson(*r.solution).dump(1) << "\n";
  }
  {
    std::ofstream os(dir / "trajectories.csv");
    WriteTrajectoriesCsv(os, *r.solution);
  }
  {
    nlohmann::json j = MetricsToJson(r.metrics);
    j["status"] = r.solution->status;
    j["iterations"] = r.outcome.iterations;
    j["wall_time_s"] = r.outcome.wall_time;
    j["certification"] = CertificationToJson(r.certification);
    std::ofstream os(dir / "metrics.json");
    os << j.dump(2) << "\n";
  }
  {
    std::ofstream os(dir / "plot.svg");
    WriteTrajectorySvg(os, *r.solution, sc);
  }
}

inline RunResult RunScenario(const Scenario& sc, const RunOptions& opt) {
  RunResult r;
  const ValidationReport v = ValidateScenario(sc);
  r.warnings = v.warnings;
  std::vector<std::string> problems = v.errors;
  for (const auto& e : opt.transcription.Validate()) problems.push_back(e);
  if (!problems.empty()) {
    r.exit_code = kExitInvalidScenario;
    r.message = "invalid scenario: " + problems.front();
    for (size_t i = 1; i < problems.size(); ++i) r.message += "; " + problems[i];
    return r;
  }

  ScenarioSolve s = SolveScenario(sc, opt.transcription, opt.solver);
  r.outcome = s.result.outcome;
  r.log = std::move(s.result.log);
  r.solution = std::move(s.solution);
  r.certification = Certify(*r.solution, sc);
  r.metrics = ComputeMetrics(*r.solution);

  const bool solved = r.outcome.status == SolveStatus::kOptimal || r.outcome.status == SolveStatus::kAcceptable;
  if (!solved) {
    r.exit_code = kExitSolverFailed;
    r.message = std::string("solver failed: ") + ToString(r.outcome.status);
    if (r.outcome.offending_constraint >= 0) {
      r.message += ", offending constraint " + std::to_string(r.outcome.offending_constraint);
    }
    if (!r.outcome.message.empty()) r.message += " (" + r.outcome.message + ")";
  } else if (!r.certification.passed) {
    r.exit_code = kExitCertificationFailed;
    r.message = "certification failed: " + r.certification.Summary();
  } else {
    r.message = std::string("solved: ") + ToString(r.outcome.status);
  }
  if (!opt.out_dir.empty()) WriteArtifacts(opt.out_dir, r, sc);
  return r;
}

inline RunResult RunScenarioFile(const std::string& path, const RunOptions& opt) {
  Scenario sc;
  try {
    sc = LoadScenario(path);
  } catch (const ScenarioError& e) {
    RunResult r;
    r.exit_code = kExitInvalidScenario;
    r.message = e.what();
    return r;
  }
  return RunScenario(sc, opt);
}

// ---------------------------------------------------------------------------
// Sweep

struct SweepOptions {
  std::vector<int> fleet_sizes;
  int repetitions = 3;
  TranscriptionConfig transcription;
  SolverConfig solver;
};

struct SweepCell {
  int n = 0;
  int rep = 0;
  int exit_code = kExitOk;
  std::string status;
  std::string message;
  double wall_time = 0.0;
  double tf = 0.0;
  int iterations = 0;
  Metrics metrics;
};

struct SweepRow {
  int n = 0;
  int solved = 0;  // cells with exit code 0
  double mean_time = 0.0;
  double std_time = 0.0;
  double mean_tf = 0.0;
  double std_tf = 0.0;
  Metrics metrics;  // from the first solved repetition
};

struct ExponentialFit {
  bool valid = false;
  double slope = 0.0;  // time ~ exp(intercept + slope * N)
  double intercept = 0.0;
  double r2 = 0.0;
};

struct SweepSummary {
  std::vector<SweepCell> cells;
  std::vector<SweepRow> rows;
  ExponentialFit fit;
};

// Least-squares line through (n, log t). Needs two distinct abscissae.
inline ExponentialFit FitLogTime(const std::vector<double>& n, const std::vector<double>& t) {
  ExponentialFit f;
  const size_t k = std::min(n.size(), t.size());
  std::vector<double> xs, ys;
  for (size_t i = 0; i < k; ++i) {
    if (t[i] > 0.0) {
      xs.push_back(n[i]);
      ys.push_back(std::log(t[i]));
    }
  }
  const double m = static_cast<double>(xs.size());
  if (xs.size() < 2) return f;
  double sx = 0, sy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
  }
  const double mx = sx / m, my = sy / m;
  double sxx = 0, sxy = 0, syy = 0;
  for (size_t i = 0; i < xs.size(); ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (sxx <= 0.0) return f;
  f.valid = true;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  double ss_res = 0.0;
  for (size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (f.intercept + f.slope * xs[i]);
    ss_res += e * e;
  }
  f.r2 = syy > 0.0 ? 1.0 - ss_res / syy : 1.0;
  return f;
}

namespace internal {

inline void MeanStd(const std::vector<double>& v, double& mean, double& sd) {
  mean = sd = 0.0;
  if (v.empty()) return;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sd += (x - mean) * (x - mean);
  sd = std::sqrt(sd / static_cast<double>(v.size()));
}

}  // namespace internal

// Cells run one after another so that wall times are not skewed by sharing
// cores. A failed cell is recorded and the sweep continues.
inline SweepSummary RunSweep(const Scenario& tmpl, const SweepOptions& opt) {
  SweepSummary out;
  std::vector<double> fit_n, fit_t;
  for (int n : opt.fleet_sizes) {
    std::vector<double> times, tfs;
    SweepRow row;
    row.n = n;
    for (int rep = 0; rep < opt.repetitions; ++rep) {
      SweepCell cell;
      cell.n = n;
      cell.rep = rep;
      try {
        RunOptions ro{opt.transcription, opt.solver, ""};
        const RunResult r = RunScenario(SubScenario(tmpl, n), ro);
        cell.exit_code = r.exit_code;
        cell.message = r.message;
        cell.status = r.solution ? r.solution->status : "invalid";
        cell.wall_time = r.outcome.wall_time;
        cell.iterations = r.outcome.iterations;
        if (r.solution) cell.tf = r.solution->tf;
        cell.metrics = r.metrics;
      } catch (const std::exception& e) {
        cell.exit_code = kExitInvalidScenario;
        cell.status = "invalid";
        cell.message = e.what();
      }
      if (cell.exit_code == kExitOk) {
        if (row.solved == 0) row.metrics = cell.metrics;
        ++row.solved;
        times.push_back(cell.wall_time);
        tfs.push_back(cell.tf);
      }
      out.cells.push_back(cell);
    }
    internal::MeanStd(times, row.mean_time, row.std_time);
    internal::MeanStd(tfs, row.mean_tf, row.std_tf);
    if (row.solved > 0) {
      fit_n.push_back(n);
      fit_t.push_back(row.mean_time);
    }
    out.rows.push_back(row);
  }
  out.fit = FitLogTime(fit_n, fit_t);
  return out;
}

inline void WriteSweepCsv(std::ostream& os, const SweepSummary& s) {
  os << "n,solved,mean_wall_time_s,std_wall_time_s,mean_tf_s,std_tf_s,average_speed,speed_std,"
        "throughput_veh_per_s,throughput_veh_per_h\n";
  char buf[320];
  for (const auto& r : s.rows) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%.6g,%.6g,%.9g,%.3g,%.9g,%.9g,%.9g,%.9g\n", r.n, r.solved, r.mean_time,
                  r.std_time, r.mean_tf, r.std_tf, r.metrics.average_speed, r.metrics.speed_std,
                  r.metrics.throughput_per_s, r.metrics.throughput_per_h);
    os << buf;
  }
}

inline void WriteSweepCellsCsv(std::ostream& os, const SweepSummary& s) {
  os << "n,rep,exit_code,status,wall_time_s,iterations,tf_s\n";
  char buf[256];
  for (const auto& c : s.cells) {
    std::snprintf(buf, sizeof(buf), "%d,%d,%d,%s,%.6g,%d,%.9g\n", c.n, c.rep, c.exit_code, c.status.c_str(),
                  c.wall_time, c.iterations, c.tf);
    os << buf;
  }
}

inline nlohmann::json SweepFitToJson(const ExponentialFit& f) {
  return {{"valid", f.valid}, {"slope", f.slope}, {"intercept", f.intercept}, {"r2", f.r2}};
}

// Mean wall time against fleet size on a log axis, with the fitted line.
inline void WriteSweepSvg(std::ostream& os, const SweepSummary& s) {
  constexpr double kW = 1000.0, kH = 1000.0, kL = 100.0, kR = 60.0, kT = 60.0, kB = 100.0;
  std::vector<const SweepRow*> rows;
  for (const auto& r : s.rows) {
    if (r.solved > 0 && r.mean_time > 0.0) rows.push_back(&r);
  }
  double nmin = 0.0, nmax = 1.0, lmin = -1.0, lmax = 1.0;
  if (!rows.empty()) {
    nmin = nmax = rows.front()->n;
    lmin = lmax = std::log10(rows.front()->mean_time);
    for (const auto* r : rows) {
      nmin = std::min(nmin, static_cast<double>(r->n));
      nmax = std::max(nmax, static_cast<double>(r->n));
      lmin = std::min(lmin, std::log10(std::max(1e-12, r->mean_time - r->std_time)));
      lmax = std::max(lmax, std::log10(r->mean_time + r->std_time));
    }
    lmin = std::floor(lmin);
    lmax = std::ceil(lmax);
    if (lmax <= lmin) lmax = lmin + 1.0;
    if (nmax <= nmin) nmax = nmin + 1.0;
    nmin -= 0.5;
    nmax += 0.5;
  }
  auto px = [&](double n) { return kL + (n - nmin) / (nmax - nmin) * (kW - kL - kR); };
  auto py = [&](double l) { return kT + (lmax - l) / (lmax - lmin) * (kH - kT - kB); };
  char buf[320];
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"1000\" height=\"1000\" viewBox=\"0 0 1000 1000\">\n";
  os << "<rect width=\"1000\" height=\"1000\" fill=\"white\"/>\n";
  std::snprintf(buf, sizeof(buf), "<rect x=\"%.1f\" y=\"%.1f\" width=\"%.1f\" height=\"%.1f\" fill=\"none\" stroke=\"black\"/>\n",
                kL, kT, kW - kL - kR, kH - kT - kB);
  os << buf;
  for (int e = static_cast<int>(lmin); e <= static_cast<int>(lmax); ++e) {
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#dddddd\"/>"
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"end\">1e%d s</text>\n",
                  kL, py(e), kW - kR, py(e), kL - 8.0, py(e) + 5.0, e);
    os << buf;
  }
  for (const auto* r : rows) {
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"14\" text-anchor=\"middle\">%d</text>\n",
                  px(r->n), kH - kB + 24.0, r->n);
    os << buf;
    const double lo = std::log10(std::max(1e-12, r->mean_time - r->std_time));
    const double hi = std::log10(r->mean_time + r->std_time);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#1f77b4\"/>"
                  "<circle cx=\"%.1f\" cy=\"%.1f\" r=\"6\" fill=\"#1f77b4\"/>\n",
                  px(r->n), py(std::max(lo, lmin)), px(r->n), py(hi), px(r->n), py(std::log10(r->mean_time)));
    os << buf;
  }
  if (s.fit.valid) {
    const double l0 = (s.fit.intercept + s.fit.slope * (nmin + 0.5)) / std::log(10.0);
    const double l1 = (s.fit.intercept + s.fit.slope * (nmax - 0.5)) / std::log(10.0);
    std::snprintf(buf, sizeof(buf),
                  "<line x1=\"%.1f\" y1=\"%.1f\" x2=\"%.1f\" y2=\"%.1f\" stroke=\"#d62728\" stroke-dasharray=\"8,4\"/>\n",
                  px(nmin + 0.5), py(l0), px(nmax - 0.5), py(l1));
    os << buf;
    std::snprintf(buf, sizeof(buf),
                  "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"16\" fill=\"#d62728\">"
                  "fit: time ~ exp(%.3f N), R^2 = %.3f</text>\n",
                  kL + 12.0, kT + 24.0, s.fit.slope, s.fit.r2);
    os << buf;
  }
  std::snprintf(buf, sizeof(buf),
                "<text x=\"%.1f\" y=\"%.1f\" font-family=\"sans-serif\" font-size=\"16\" text-anchor=\"middle\">number of vehicles N</text>\n",
                (kL + kW - kR) / 2.0, kH - 40.0);
  os << buf << "</svg>\n";
}

}  // namespace lanefree

#endif  // LANEFREE_HARNESS_HPP_
