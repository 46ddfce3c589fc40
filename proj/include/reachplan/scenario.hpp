#pragma once

// Tabletop scenario environments. A scenario file declares objects, per
// instruction initial facts and goal predicates, a global fail predicate,
// and a set of subgoal edges. Each edge carries an initiation condition and
// one or more conditional outcome branches (first match wins, last branch is
// the unconditioned base). History overrides let outcome distributions depend
// on the context instead of the node alone. Variants perturb outcome
// probabilities and rename distractor objects to build unseen splits.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/rng.hpp"

namespace reachplan {

// Conjunction of literals plus an optional at-least-one group. A literal is
// "fact", "!fact", or "gripper:open|closed|holding(x)".
struct Condition {
  std::vector<std::string> all;
  std::vector<std::string> any;
  bool trivial() const { return all.empty() && any.empty(); }
};

struct TraceSpec {
  double mean = 0.0;
  double var = 0.0025;
  int len = 6;
};

struct Outcome {
  double p = 1.0;
  std::vector<std::string> add;
  std::vector<std::string> remove;
  std::string gripper;  // "" keeps the current gripper
  TraceSpec trace;
  bool trace_given = false;
};

struct Branch {
  std::vector<std::string> when;  // conjunction; empty = base branch
  std::vector<Outcome> outcomes;
};

// Context pattern for history overrides: all edges in `contains` must appear
// in order as a subsequence of the context's edge sequence; `last`, when set,
// must equal the most recent edge.
struct ContextPattern {
  std::vector<Edge> contains;
  std::optional<Edge> last;
};

struct HistoryOverride {
  ContextPattern when;
  std::vector<Outcome> outcomes;
};

struct EdgeDef {
  Edge edge;
  Condition initiation;
  std::vector<Branch> branches;
  std::vector<HistoryOverride> overrides;
};

struct CalibrationEntry {
  std::string instruction;
  std::vector<Edge> path;
  double lo = 0.0;  // target range; point targets have lo == hi
  double hi = 0.0;
  std::string note;
};

struct ProbOverride {
  std::string edge;  // serialized edge
  int branch = 0;
  std::vector<double> probs;
};

struct Variant {
  std::string name;
  std::map<std::string, std::string> renames;
  std::vector<ProbOverride> prob_overrides;
  double prob_delta = 0.0;
};

struct InitialSpec {
  std::vector<std::string> facts;
  std::string gripper = "open";
};

struct Scenario {
  std::string name;
  std::string variant;  // "" for the base scenario
  int horizon = 12;
  std::vector<std::string> objects;
  std::vector<std::string> instructions;
  std::map<std::string, InitialSpec> initial;   // keyed by instruction or "*"
  std::map<std::string, Condition> goal;        // keyed by instruction or "*"
  Condition fail;
  std::vector<EdgeDef> edges;
  std::vector<CalibrationEntry> calibration;
  std::vector<Variant> variants;
  bool uses_overrides = false;
  bool acyclic = true;  // node graph has no cycles (checked at load)
};

// --- loading -------------------------------------------------------------

// Parses and validates a scenario from JSON text. Raises Error with the
// parser's line/column on malformed JSON and with the violated invariant's
// name on semantic problems (probability sums, goal/fail overlap on a
// reachable node, absorption escapes, inapplicable deltas, unknown refs).
Scenario load_scenario(const std::string& config_text);
Scenario load_scenario_file(const std::string& path);

// Resolves "name" or "name:variant" against a scenario directory.
Scenario load_builtin(const std::string& spec, const std::string& dir = "");

// Returns a re-validated copy with the named variant applied.
Scenario apply_variant(const Scenario& sc, const std::string& variant_name);

// --- semantics -----------------------------------------------------------

bool condition_holds(const Condition& c, const Node& n);
Label classify(const Scenario& sc, const Node& n);
Node initial_node(const Scenario& sc, const std::string& instruction);

// Edges whose initiation holds at (n, z), sorted by serialization. Empty when
// n is terminal (absorption) or a dead end.
std::vector<Edge> admissible_edges(const Scenario& sc, const Node& n, const Context& z);

// The outcome distribution step_option would sample from at (n, z, e):
// first matching history override, else first matching conditional branch.
const std::vector<Outcome>& select_outcomes(const Scenario& sc, const Node& n,
                                            const Context& z, const Edge& e);

// Applies an outcome's fact delta; throws if the delta does not apply cleanly.
Node apply_outcome(const Scenario& sc, const Node& n, const Outcome& o);

struct StepResult {
  Node next;
  Label label = Label::Interior;
  ExecutionTrace trace;
  int outcome_index = 0;
};

// Samples a successor, its label, and an execution trace. Requires that e is
// admissible at (n, z) and that n is interior.
StepResult step_option(const Scenario& sc, const Node& n, const Context& z, const Edge& e,
                       Rng& rng);

// --- calibration ---------------------------------------------------------

struct CalibrationRow {
  std::string instruction;
  std::vector<Edge> path;
  double exact = 0.0;    // enumerated success probability of executing `path`
  double lo = 0.0, hi = 0.0;
  bool pass = false;
  std::string note;
};

// Exact probability that executing the fixed edge sequence from the initial
// node reaches the goal set first, branching over every stochastic outcome.
// Off-path successors follow the executor's give-up rule: the next edge is
// attempted if admissible, otherwise the episode counts as failed.
double path_success_prob(const Scenario& sc, const std::string& instruction,
                         const std::vector<Edge>& path);

// Evaluates every declared calibration path against its target.
std::vector<CalibrationRow> calibration_report(const Scenario& sc);

}  // namespace reachplan
