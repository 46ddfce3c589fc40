// Times the OpenMP evaluation kernels against their serial references and
// checks they agree slot for slot. Usage: bench_kernels [n_open] [n_replan]
// (defaults 20000 / 2000; pass smaller numbers for a quick pass). Exits
// nonzero on any disagreement.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "reachplan/demo.hpp"
#include "reachplan/eval.hpp"
#include "reachplan/oracle.hpp"
#include "reachplan/search.hpp"

using namespace reachplan;

namespace {

double ms(std::chrono::steady_clock::time_point a, std::chrono::steady_clock::time_point b) {
  return std::chrono::duration<double, std::milli>(b - a).count();
}

SearchConfig exhaustive() {
  SearchConfig cfg;
  cfg.B = 64;
  cfg.k = 8;
  cfg.M = 4096;
  return cfg;
}

struct Row {
  std::string kernel;
  int n = 0;
  double serial_ms = 0.0;
  double parallel_ms = 0.0;
  bool agree = false;
};

template <typename F, typename G>
Row time_pair(const std::string& kernel, int n, F serial, G parallel) {
  Row r;
  r.kernel = kernel;
  r.n = n;
  auto t0 = std::chrono::steady_clock::now();
  auto a = serial();
  auto t1 = std::chrono::steady_clock::now();
  auto b = parallel();
  auto t2 = std::chrono::steady_clock::now();
  r.serial_ms = ms(t0, t1);
  r.parallel_ms = ms(t1, t2);
  r.agree = a == b;
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  int n_open = argc > 1 ? std::atoi(argv[1]) : 20000;
  int n_replan = argc > 2 ? std::atoi(argv[2]) : 2000;

  try {
    // open-loop kernel on plug3's best line
    Scenario plug = load_builtin("plug3");
    ProposalModel plug_prop =
        fit_proposal(build_dataset(plug, BehaviorPolicy::uniform(), 5000, {}, 7));
    ValueFn plug_v = oracle_value_fn(exact_reach_avoid(plug, OracleMode::Optimal), plug);
    SearchResult plug_sr = search(plug, initial_node(plug, "plug all three"), {}, plug_prop,
                                  plug_v, exhaustive());

    // replanning kernel on drawer-degraded, committed to the fragile push line
    Scenario drw = load_builtin("drawer-degraded");
    ProposalModel drw_prop =
        fit_proposal(build_dataset(drw, BehaviorPolicy::uniform(), 3000, {}, 11));
    ValueFn drw_v = oracle_value_fn(exact_reach_avoid(drw, OracleMode::Optimal), drw);
    SearchResult drw_sr =
        search(drw, initial_node(drw, "stow the box"), {}, drw_prop, drw_v, exhaustive());
    Plan push_plan;
    for (int u = 0; u < static_cast<int>(drw_sr.tree.nodes.size()); ++u) {
      if (!drw_sr.tree.nodes[u].children.empty()) continue;
      std::vector<int> path;
      for (int i = u; i >= 0; i = drw_sr.tree.nodes[i].parent) path.push_back(i);
      std::reverse(path.begin(), path.end());
      std::vector<Edge> edges;
      for (std::size_t j = 1; j < path.size(); ++j)
        edges.push_back(drw_sr.tree.nodes[path[j]].in_edge);
      if (serialize_plan(edges) != "open(drawer)~push(box)~close(drawer)") continue;
      for (int idx : path) push_plan.nodes.push_back(drw_sr.tree.nodes[idx].node);
      push_plan.edges = edges;
      push_plan.leaf = u;
      break;
    }
    if (push_plan.leaf < 0) {
      std::fprintf(stderr, "setup: push line missing from the drawer-degraded tree\n");
      return 1;
    }
    UncertaintyMonitor mon;
    ReplanConfig rcfg;

    std::vector<Row> rows;
    rows.push_back(time_pair(
        "open-loop plug3", n_open,
        [&] { return evaluate_plan_serial(plug, plug_sr.plan, n_open, 99); },
        [&] { return evaluate_plan_parallel(plug, plug_sr.plan, n_open, 99); }));
    rows.push_back(time_pair(
        "replan drawer-degraded", n_replan,
        [&] {
          return evaluate_replan_serial(drw, drw_sr.tree, push_plan, drw_prop, drw_v, mon,
                                        rcfg, n_replan, 55);
        },
        [&] {
          return evaluate_replan_parallel(drw, drw_sr.tree, push_plan, drw_prop, drw_v, mon,
                                          rcfg, n_replan, 55);
        }));

    std::printf("threads: %d\n", omp_get_max_threads());
    std::printf("%-24s %8s %12s %12s %8s %6s\n", "kernel", "n", "serial ms", "parallel ms",
                "speedup", "agree");
    bool ok = true;
    for (const auto& r : rows) {
      std::printf("%-24s %8d %12.1f %12.1f %8.2f %6s\n", r.kernel.c_str(), r.n, r.serial_ms,
                  r.parallel_ms, r.parallel_ms > 0 ? r.serial_ms / r.parallel_ms : 0.0,
                  r.agree ? "yes" : "NO");
      ok = ok && r.agree;
    }
    if (!ok) {
      std::fprintf(stderr, "kernel disagreement\n");
      return 1;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
