#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "reachplan/core.hpp"
#include "reachplan/rng.hpp"
#include "reachplan/scenario.hpp"

namespace reachplan {

// Demonstration generation: behavior policies rolled out in a scenario, cut
// into per-edge training samples.

enum class PolicyKind { Uniform, PathBalanced, Weighted };

struct BehaviorPolicy {
  PolicyKind kind = PolicyKind::Uniform;
  // PathBalanced: scripted plans, assigned round-robin by episode id. The
  // demonstrator follows the script while its next edge is admissible and
  // improvises uniformly otherwise (scripts must at least run on their
  // intended line; build_dataset checks).
  std::vector<std::vector<Edge>> paths;
  // Weighted: serialized edge (exact) or bare verb -> weight; unmatched
  // edges weigh 1.
  std::map<std::string, double> weights;

  static BehaviorPolicy uniform();
  static BehaviorPolicy path_balanced(std::vector<std::vector<Edge>> paths);
  static BehaviorPolicy weighted(std::map<std::string, double> weights);
};

Edge choose_edge(const BehaviorPolicy& pol, const std::vector<Edge>& admissible,
                 std::size_t step_index, std::uint64_t episode_id, Rng& rng);

// Normalized pick probabilities over the admissible set. Only the Markov
// policies (uniform, weighted) have these; script policies throw.
std::vector<double> policy_edge_probs(const BehaviorPolicy& pol,
                                      const std::vector<Edge>& admissible);

// one transition of the training corpus
struct Sys2Sample {
  Node n;
  Context z;
  Edge e;
  Node next;
  double r = 0.0;  // goal-entrance indicator
  bool term = false;
  std::uint64_t episode_id = 0;
  Label episode_outcome = Label::Fail;
};

struct Dataset {
  std::string scenario;
  std::string variant;
  std::uint64_t seed = 0;
  std::uint64_t episodes = 0;
  std::vector<std::string> instructions;  // the mix actually used, cycled per episode
  std::vector<Sys2Sample> samples;
};

// Runs the policy to termination: goal, fail, dead end (nothing admissible)
// or the horizon cap. The two non-terminal closures count as failures.
EpisodeRecord rollout(const Scenario& sc, const BehaviorPolicy& pol,
                      const std::string& instruction, Rng& rng,
                      std::uint64_t episode_id = 0);

// One sample per executed edge; contexts come straight off the episode steps.
std::vector<Sys2Sample> segment(const EpisodeRecord& ep);

// Episode e runs on derive_stream(seed, e) with instruction_mix[e % mix]
// (empty mix = every scenario instruction), so regeneration is bit-identical.
Dataset build_dataset(const Scenario& sc, const BehaviorPolicy& pol,
                      std::uint64_t n_episodes,
                      const std::vector<std::string>& instruction_mix,
                      std::uint64_t seed);

struct PathStat {
  std::string instruction;
  std::string path;  // realized edge sequence, serialized
  std::uint64_t trials = 0;
  std::uint64_t successes = 0;
  double p_hat = 0.0;
};

// Success table keyed by (instruction, realized edge sequence), sorted.
// Episodes cut short by a give-up, dead end, or the cap key under their
// truncated sequence.
std::vector<PathStat> dataset_stats(const Dataset& ds);

// One JSON header line, then one tab-separated sample per line using the
// canonical serializations.
void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

}  // namespace reachplan
