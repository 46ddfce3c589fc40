#pragma once

// Core symbolic-state types shared by every other component: nodes (symbolic
// scene abstractions), subgoal edges, history contexts and episode records,
// plus their canonical text serializations.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace reachplan {

struct Error : std::runtime_error {
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

enum class Label { Interior, Goal, Fail };

std::string label_name(Label l);
Label parse_label(const std::string& s);

// Gripper is one of "open", "closed", "holding(<obj>)".
struct Node {
  std::vector<std::string> facts;  // kept sorted and duplicate-free
  std::string gripper = "open";
  std::string instruction;

  void canonicalize();  // sort facts, drop duplicates
  bool has_fact(const std::string& f) const;
  bool operator==(const Node& o) const {
    return facts == o.facts && gripper == o.gripper && instruction == o.instruction;
  }
};

struct Edge {
  std::string verb;
  std::vector<std::string> args;

  bool operator==(const Edge& o) const { return verb == o.verb && args == o.args; }
  bool operator<(const Edge& o) const;  // lexicographic on serialization
};

// History context: alternating (edge taken, node it was taken from) entries.
// The empty context is the unique initial context; each transition appends
// one (edge, node) pair, so the flat entry count grows by exactly 2.
struct Context {
  std::vector<std::pair<Edge, Node>> steps;

  std::size_t depth() const { return steps.size(); }
  bool empty() const { return steps.empty(); }
  const Edge* last_edge() const { return steps.empty() ? nullptr : &steps.back().first; }
  bool operator==(const Context& o) const { return steps == o.steps; }
};

struct NodeEdgeState {
  Node node;
  Context ctx;
};

// --- canonical serialization -------------------------------------------
//
// node:    [fact1;fact2;...]|<gripper>|<instruction>
// edge:    verb(arg1,arg2,...)
// context: edge~node~edge~node~...   ("" when empty)
//
// Payload charsets are validated so the separators ; | ~ # cannot collide.

std::string serialize_node(const Node& n);
Node parse_node(const std::string& s);

std::string serialize_edge(const Edge& e);
Edge parse_edge(const std::string& s);

std::string serialize_context(const Context& z);
Context parse_context(const std::string& s);

// plan: edge~edge~...  ("" when empty); the lexicographic order of this
// string is the tie-break order used everywhere a plan must be picked
// deterministically among equals
std::string serialize_plan(const std::vector<Edge>& plan);
std::vector<Edge> parse_plan(const std::string& s);

// Appends (e, n) to z; n is the node the edge was taken from.
Context context_update(const Context& z, const Edge& e, const Node& n);

// Canonical key for a node-edge state and its stable 64-bit hash.
std::string node_edge_key(const Node& n, const Context& z);
std::uint64_t fnv1a64(const std::string& s);

// Charset guards used by the scenario loader; throw Error on violation.
void validate_fact_text(const std::string& fact);
void validate_instruction_text(const std::string& instr);

// --- episodes ------------------------------------------------------------

struct ExecutionTrace {
  std::vector<double> samples;
};

struct EpisodeStep {
  Node from;
  Context ctx;  // context at `from`, before taking `edge`
  Edge edge;
  Node to;
  double reward = 0.0;  // 1 exactly when `to` enters the goal set
  bool terminal = false;
  Label to_label = Label::Interior;
  ExecutionTrace trace;
};

struct EpisodeRecord {
  std::string scenario;
  std::string variant;
  std::string instruction;
  std::uint64_t episode_id = 0;
  std::vector<EpisodeStep> steps;
  Label outcome = Label::Fail;  // Goal or Fail once closed
  bool horizon_fail = false;    // closed by the step cap, not by a terminal node
  bool dead_end = false;        // closed because no edge was admissible
  bool gave_up = false;         // closed by an executor with no usable plan edge left
};

// Sum of entrance rewards; equals gamma^(tau-1) * 1{goal first} when
// discounting is applied during accumulation, and exactly 1{goal first}
// at gamma = 1 (the pathwise identity the fuzz tests pin down).
double episode_return(const EpisodeRecord& ep, double gamma = 1.0);

// Checks structural invariants (absorption, reward/terminal agreement,
// strictly growing contexts). Throws Error naming the violated invariant.
void validate_episode(const EpisodeRecord& ep);

}  // namespace reachplan
