#include "reachplan/eval.hpp"

#include <exception>
#include <string>

namespace reachplan {

namespace {

EvalOutcome close_out(const ExecutionResult& res) {
  EvalOutcome o;
  o.success = res.episode.outcome == Label::Goal;
  o.steps = static_cast<int>(res.episode.steps.size());
  o.switches = res.switches;
  return o;
}

}  // namespace

EvalSummary summarize(const std::vector<EvalOutcome>& outs) {
  EvalSummary s;
  s.n = static_cast<int>(outs.size());
  for (const auto& o : outs) {
    if (o.success) ++s.successes;
    s.total_steps += o.steps;
    s.total_switches += o.switches;
  }
  return s;
}

std::vector<EvalOutcome> evaluate_plan_serial(const Scenario& sc, const Plan& plan, int n,
                                              std::uint64_t seed) {
  std::vector<EvalOutcome> out(n);
  for (int e = 0; e < n; ++e) {
    Rng rng = derive_stream(seed, static_cast<std::uint64_t>(e));
    out[e] = close_out(execute_plan(sc, plan, rng, static_cast<std::uint64_t>(e)));
  }
  return out;
}

std::vector<EvalOutcome> evaluate_plan_parallel(const Scenario& sc, const Plan& plan, int n,
                                                std::uint64_t seed) {
  std::vector<EvalOutcome> out(n);
  std::string err;  // exceptions may not cross the parallel region
#pragma omp parallel for schedule(dynamic, 16)
  for (int e = 0; e < n; ++e) {
    try {
      Rng rng = derive_stream(seed, static_cast<std::uint64_t>(e));
      out[e] = close_out(execute_plan(sc, plan, rng, static_cast<std::uint64_t>(e)));
    } catch (const std::exception& ex) {
#pragma omp critical
      if (err.empty()) err = ex.what();
    }
  }
  if (!err.empty()) throw Error(err);
  return out;
}

std::vector<EvalOutcome> evaluate_replan_serial(const Scenario& sc, const SearchTree& tree,
                                                const Plan& plan, const ProposalModel& prop,
                                                const ValueFn& value,
                                                const UncertaintyMonitor& mon,
                                                const ReplanConfig& rcfg, int n,
                                                std::uint64_t seed) {
  std::vector<EvalOutcome> out(n);
  for (int e = 0; e < n; ++e) {
    Rng rng = derive_stream(seed, static_cast<std::uint64_t>(e));
    out[e] = close_out(execute_with_replanning(sc, tree, plan, prop, value, mon, rcfg, rng,
                                               static_cast<std::uint64_t>(e)));
  }
  return out;
}

std::vector<EvalOutcome> evaluate_replan_parallel(const Scenario& sc, const SearchTree& tree,
                                                  const Plan& plan, const ProposalModel& prop,
                                                  const ValueFn& value,
                                                  const UncertaintyMonitor& mon,
                                                  const ReplanConfig& rcfg, int n,
                                                  std::uint64_t seed) {
  std::vector<EvalOutcome> out(n);
  std::string err;
#pragma omp parallel for schedule(dynamic, 16)
  for (int e = 0; e < n; ++e) {
    try {
      Rng rng = derive_stream(seed, static_cast<std::uint64_t>(e));
      out[e] = close_out(execute_with_replanning(sc, tree, plan, prop, value, mon, rcfg, rng,
                                                 static_cast<std::uint64_t>(e)));
    } catch (const std::exception& ex) {
#pragma omp critical
      if (err.empty()) err = ex.what();
    }
  }
  if (!err.empty()) throw Error(err);
  return out;
}

}  // namespace reachplan
