#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/demo.hpp"
#include "reachplan/scenario.hpp"

namespace reachplan {

// Count-based stand-in for a learned subgoal proposer: ranked next-edge
// proposals and successor-node predictions, fit by tallying demonstration
// samples. Laplace smoothing keeps every probability strictly inside (0,1);
// condition keys never seen in the data back off to a uniform guess.

enum class Conditioning { NodeOnly, NodeLastEdge, NodeFullContext };

std::string conditioning_name(Conditioning c);   // "node-only" etc.
Conditioning parse_conditioning(const std::string& s);

// What the model conditions on: the node alone, node plus the most recent
// edge (default; cheap order-awareness), or node plus the whole context.
std::string condition_key(Conditioning c, const Node& n, const Context& z);

// Successors are learned as fact deltas relative to the parent, so one
// observed transition transfers to any node the same edit applies to.
struct NodeDelta {
  std::vector<std::string> add;     // sorted
  std::vector<std::string> remove;  // sorted
  std::string gripper;              // resulting gripper, recorded absolutely

  bool operator==(const NodeDelta& o) const {
    return add == o.add && remove == o.remove && gripper == o.gripper;
  }
};

std::string serialize_delta(const NodeDelta& d);
NodeDelta parse_delta(const std::string& s);
NodeDelta node_delta(const Node& from, const Node& to);
// Set-wise application (missing removals are ignored); instruction carries over.
Node apply_delta(const Node& n, const NodeDelta& d);

struct ProposalModel {
  Conditioning conditioning = Conditioning::NodeLastEdge;
  double alpha = 1.0;  // Laplace smoothing mass, > 0
  // condition key -> serialized edge -> count
  std::map<std::string, std::map<std::string, std::uint64_t>> edge_counts;
  // condition key + "@@" + serialized edge -> serialized delta -> count
  std::map<std::string, std::map<std::string, std::uint64_t>> successor_counts;
  // closed vocabularies: every distinct edge / delta in the corpus, sorted
  std::vector<std::string> edge_vocab;
  std::vector<std::string> delta_vocab;
};

ProposalModel fit_proposal(const Dataset& ds,
                           Conditioning conditioning = Conditioning::NodeLastEdge,
                           double alpha = 1.0);

// Smoothed P(e | key): (c + a) / (N + a*V) over the edge vocabulary. A key
// with no counts backs off to uniform over the admissible set (0 for an
// inadmissible edge).
double edge_prob(const ProposalModel& m, const Scenario& sc, const Node& n,
                 const Context& z, const Edge& e);

// The k most probable admissible edges, probability descending, ties broken
// by edge serialization. Shorter when fewer edges are admissible.
std::vector<std::pair<Edge, double>> propose_topk(const ProposalModel& m,
                                                  const Scenario& sc, const Node& n,
                                                  const Context& z, int k);

// Smoothed successor distribution for taking e at (n, z): every vocabulary
// delta applied to n, mass merged per resulting node, probability descending
// with serialization tie-break. An unseen (key, e) backs off to uniform over
// the scenario-enumerable outcomes of e.
std::vector<std::pair<Node, double>> predict_successor(const ProposalModel& m,
                                                       const Scenario& sc,
                                                       const Node& n, const Context& z,
                                                       const Edge& e);
Node greedy_successor(const ProposalModel& m, const Scenario& sc, const Node& n,
                      const Context& z, const Edge& e);

// One JSON header line, then E/S count rows; vocabularies are rebuilt from
// the counts on load.
void save_proposal(const ProposalModel& m, const std::string& path);
ProposalModel load_proposal(const std::string& path);

}  // namespace reachplan
