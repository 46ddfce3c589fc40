#pragma once

// Batched plan evaluation. Episode e always runs on derive_stream(seed, e),
// so episodes are independent and the OpenMP kernel must agree with the
// serial reference slot for slot; the tests pin that and the bench target
// times one against the other.

#include <cstdint>
#include <vector>

#include "reachplan/executor.hpp"

namespace reachplan {

struct EvalOutcome {
  bool success = false;
  int steps = 0;
  int switches = 0;
  bool operator==(const EvalOutcome& o) const {
    return success == o.success && steps == o.steps && switches == o.switches;
  }
};

struct EvalSummary {
  int n = 0;
  int successes = 0;
  long long total_steps = 0;
  int total_switches = 0;
  double success_rate() const { return n > 0 ? static_cast<double>(successes) / n : 0.0; }
  double mean_steps() const { return n > 0 ? static_cast<double>(total_steps) / n : 0.0; }
};

EvalSummary summarize(const std::vector<EvalOutcome>& outs);

std::vector<EvalOutcome> evaluate_plan_serial(const Scenario& sc, const Plan& plan, int n,
                                              std::uint64_t seed);
std::vector<EvalOutcome> evaluate_plan_parallel(const Scenario& sc, const Plan& plan, int n,
                                                std::uint64_t seed);

std::vector<EvalOutcome> evaluate_replan_serial(const Scenario& sc, const SearchTree& tree,
                                                const Plan& plan, const ProposalModel& prop,
                                                const ValueFn& value,
                                                const UncertaintyMonitor& mon,
                                                const ReplanConfig& rcfg, int n,
                                                std::uint64_t seed);
std::vector<EvalOutcome> evaluate_replan_parallel(const Scenario& sc, const SearchTree& tree,
                                                  const Plan& plan, const ProposalModel& prop,
                                                  const ValueFn& value,
                                                  const UncertaintyMonitor& mon,
                                                  const ReplanConfig& rcfg, int n,
                                                  std::uint64_t seed);

}  // namespace reachplan
