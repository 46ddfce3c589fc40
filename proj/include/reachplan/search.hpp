#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/oracle.hpp"
#include "reachplan/proposal.hpp"
#include "reachplan/scenario.hpp"
#include "reachplan/value.hpp"

namespace reachplan {

// Batched value-guided tree search over model-predicted states, plus the DFS
// and single-chain baselines. The environment kernel is never sampled here:
// children come from the proposal model's greedy successor, admissibility and
// terminal labels from the scenario's symbolic predicates.

using ValueFn = std::function<double(const Node&, const Context&)>;

ValueFn make_value_fn(ValueModel m, Scenario sc);
// Looks up the exact solution (0 for states it never enumerated).
ValueFn oracle_value_fn(ReachAvoidSolution sol, Scenario sc);

struct SearchConfig {
  int B = 4;           // parents expanded per iteration
  int k = 3;           // proposals drawn per parent
  int keep = -1;       // candidates kept per parent; -1 means k
  double alpha = 0.6;  // candidate score S = alpha*Q(parent) + (1-alpha)*P
  int M = 64;          // iterations
  // score leaves by accumulated proposal confidence (product of P along the
  // path) instead of the value head; boundary labels are ignored, which is
  // exactly the blindness this ablation is meant to exhibit
  bool confidence_mode = false;
  bool stop_on_goal = false;  // end the run once a predicted-goal child exists
};

struct SearchNode {
  Node node;
  Context ctx;
  int parent = -1;  // index; -1 at the root
  Edge in_edge;     // undefined at the root
  std::vector<int> children;
  std::uint64_t n_visits = 0;  // N
  double w_sum = 0.0;          // W
  Label label = Label::Interior;
  bool exhausted = false;  // nothing admissible / nothing left to propose
  double leaf_v = 0.0;     // evaluation at creation (path confidence in that mode)
  double score = 0.0;      // S at creation; 0 at the root

  double q() const { return n_visits == 0 ? 0.0 : w_sum / n_visits; }
};

struct SearchTree {
  std::vector<SearchNode> nodes;  // [0] is the root; children in creation order
  std::uint64_t expansions = 0;   // children created
};

struct Plan {
  std::vector<Node> nodes;  // n_0 .. n_K, n_0 = search root
  std::vector<Edge> edges;  // e_0 .. e_{K-1}
  Label predicted = Label::Interior;  // label of the final node
  int leaf = -1;                      // tree index of the final node, if any
  std::string note;                   // diagnostics (truncations etc.)
};

struct SearchResult {
  SearchTree tree;
  Plan plan;
};

// Algorithm: M times, take the top-B expandable leaves by Q (ties: S, then
// key), propose k edges each, drop already-expanded edges, keep the top
// `keep`, create greedy children, evaluate (goal 1, fail 0, else V), and back
// the value up the whole path. The plan is traced to the best leaf by
// (Q, S, plan serialization). Throws if the root is terminal or nothing is
// ever expandable.
SearchResult search(const Scenario& sc, const Node& root, const Context& root_z,
                    const ProposalModel& prop, const ValueFn& value,
                    const SearchConfig& cfg);

struct DfsResult {
  Plan plan;
  std::uint64_t expansions = 0;
};

// Fixed-order baseline: walks every admissible edge in lexicographic order to
// terminal, dead-end, or the cap, scoring complete paths like search scores
// leaves; best score wins, ties prefer the higher-valued pre-exit parent and
// then the lexicographically smaller plan.
DfsResult dfs_search(const Scenario& sc, const Node& root, const Context& root_z,
                     const ProposalModel& prop, const ValueFn& value, int depth_cap);

// No branching at all: follow the proposal argmax until a terminal label, the
// cap, or a dead end (which truncates with a note).
Plan chain_rollout(const Scenario& sc, const Node& root, const Context& root_z,
                   const ProposalModel& prop, int depth_cap);

// Deterministic codecs for inspection and replanning persistence.
std::string tree_dump(const SearchTree& t);
SearchTree tree_parse(const std::string& text);
std::string plan_dump(const Plan& p);
Plan plan_parse(const std::string& text);

}  // namespace reachplan
