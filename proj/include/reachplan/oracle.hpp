#pragma once

#include <map>
#include <string>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/scenario.hpp"

namespace reachplan {

// Brute-force ground truth. Everything in here is exact enumeration over the
// reachable graph -- slow on purpose, and kept independent of the learner and
// the search code so it can referee them.

enum class OracleMode { Behavior, Optimal };

struct ReachAvoidSolution {
  // key -> exact first-exit probability (discounted when gamma < 1).
  // Keys are bare node serializations unless the scenario uses history
  // overrides, in which case they are full node##context keys.
  std::map<std::string, double> values;
  OracleMode mode = OracleMode::Behavior;
  double gamma = 1.0;
  int horizon = 0;
  bool collapsed = true;
  double residual = 0.0;  // sup-norm Bellman residual, recomputed post hoc
};

// Backward induction over the reachable graph, all instructions pooled.
// Behavior mode averages uniformly over admissible edges; optimal mode
// maximizes. horizon < 0 means the scenario's own horizon. Throws when a
// bare-node key would have depth-dependent values (cycle or binding horizon)
// or when the residual comes out >= tol.
ReachAvoidSolution exact_reach_avoid(const Scenario& sc, OracleMode mode,
                                     double gamma = 1.0, double tol = 1e-9,
                                     int horizon = -1);

// Value at an instruction's initial node.
double root_value(const Scenario& sc, const ReachAvoidSolution& sol,
                  const std::string& instruction);

// "key\tvalue\n" lines, sorted by key.
std::string dump_solution(const ReachAvoidSolution& sol);

// Exact probability that issuing the fixed edge sequence open loop reaches
// the goal before the fail set. Off-plan outcomes keep executing as long as
// the next edge stays admissible; otherwise the run gives up (counts as not
// reaching). Throws if the plan cannot even run along its intended line
// (first listed outcome of each step).
double plan_success_prob(const Scenario& sc, const std::string& instruction,
                         const std::vector<Edge>& plan);

struct ArgmaxResult {
  std::vector<Edge> plan;
  double prob = 0.0;
};

// Exhaustive enumeration of plans up to `depth` edges (admissible along their
// intended line), scored by plan_success_prob. Ties break on the serialized
// plan text, ascending.
ArgmaxResult argmax_plan(const Scenario& sc, const std::string& instruction,
                         int depth);

}  // namespace reachplan
