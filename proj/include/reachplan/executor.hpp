#pragma once

// Open-loop plan execution and the uncertainty-triggered replanning layer.
//
// execute_plan walks a plan edge by edge through the simulator and logs
// predicted-vs-observed successors. There is no recovery: after a mismatch
// the run keeps going only while the next planned edge stays admissible.
//
// execute_with_replanning layers a variance monitor on top. Each edge's
// execution trace streams through the monitor (the window resets per edge,
// so the statistic is within-chunk variance). When it trips, the committed
// branch's W sums are scaled down, the best leaf under the observed node is
// re-selected, and if the tree has nothing there a fresh bounded search runs
// from the observed state. The edge that tripped the monitor has already
// resolved -- recovery starts from its sampled outcome, not before it.

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/proposal.hpp"
#include "reachplan/rng.hpp"
#include "reachplan/scenario.hpp"
#include "reachplan/search.hpp"

namespace reachplan {

// One executed edge: what the plan said would happen, what the simulator
// did, and any replanning activity while the edge ran.
struct MatchFlag {
  Edge edge;
  Node predicted;
  Node observed;
  bool match = false;
  bool trigger = false;  // monitor tripped while this edge's trace streamed
  std::string switched;  // "" unless a plan switch happened after this edge
};

struct ExecutionResult {
  EpisodeRecord episode;
  std::vector<MatchFlag> log;  // one entry per executed edge
  int switches = 0;
  std::string note;  // why the run gave up, when it did
};

// Rolling-variance trigger. Warm-up rule: fewer than w samples never fires.
struct UncertaintyMonitor {
  int w = 4;
  double kappa_u = 0.5;
  std::deque<double> window;
};

// Pushes one sample and reports whether the full-window population variance
// now exceeds kappa_u. Throws on w < 2 or kappa_u <= 0.
bool monitor_update(UncertaintyMonitor& mon, double sample);

struct ReplanConfig {
  bool enabled = true;
  double lambda_down = 0.5;  // multiplies W along the committed path; < 1
  int max_switches = 2;
  SearchConfig research;  // budget for recovery searches off the tree
};

// Runs `plan` from the scenario's initial node. Mismatches do not stop the
// run; it ends at a terminal node, at the horizon, or when the next planned
// edge is inadmissible (a give-up, counted as Fail). Throws on an empty or
// malformed plan and on a plan that does not start at the initial node.
ExecutionResult execute_plan(const Scenario& sc, const Plan& plan, Rng& rng,
                             std::uint64_t episode_id = 0);

// execute_plan plus the monitor. Works on a private copy of `tree`; `plan`
// must trace root-to-leaf through it. On a trigger at an interior state the
// committed path's W is scaled by lambda_down, then the best leaf under the
// observed node takes over (the committed leaf may win again; that is not a
// switch). Off-tree states fall back to a fresh search; if that also fails
// the run closes as Fail with a diagnostic note. At most max_switches
// switches. With rcfg.enabled = false (or kappa_u = infinity) the same RNG
// stream yields exactly the execute_plan episode.
ExecutionResult execute_with_replanning(const Scenario& sc, const SearchTree& tree,
                                        const Plan& plan, const ProposalModel& prop,
                                        const ValueFn& value, UncertaintyMonitor mon,
                                        const ReplanConfig& rcfg, Rng& rng,
                                        std::uint64_t episode_id = 0);

// Line-delimited episode log, one tab-separated record per executed edge:
// edge, predicted node, observed node, match, trigger, switch note.
std::string episode_log_dump(const std::vector<MatchFlag>& log);
std::vector<MatchFlag> episode_log_parse(const std::string& text);

}  // namespace reachplan
