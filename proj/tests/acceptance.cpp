// Acceptance gate: one pass/fail line per criterion, exit count = failures.
// Each criterion pins its own tolerances and corpus seeds; runtime caps are
// part of the check. Everything here goes through the public headers only.

#include <boost/math/distributions/beta.hpp>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "reachplan/demo.hpp"
#include "reachplan/eval.hpp"
#include "reachplan/executor.hpp"
#include "reachplan/oracle.hpp"
#include "reachplan/search.hpp"
#include "reachplan/value.hpp"

using namespace reachplan;

namespace {

struct CheckResult {
  bool pass = false;
  std::string detail;
};

int g_failures = 0;
int g_index = 0;

void criterion(const std::string& name, const std::function<CheckResult()>& body) {
  ++g_index;
  auto t0 = std::chrono::steady_clock::now();
  CheckResult o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (!o.pass) ++g_failures;
  std::printf("%2d/13 %s %6.2fs  %s: %s\n", g_index, o.pass ? "PASS" : "FAIL", secs,
              name.c_str(), o.detail.c_str());
  std::fflush(stdout);
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::string node_part(const std::string& key) { return key.substr(0, key.find("##")); }

ProposalModel uniform_prop(const Scenario& sc, std::uint64_t eps, std::uint64_t seed) {
  return fit_proposal(build_dataset(sc, BehaviorPolicy::uniform(), eps, {}, seed));
}

ValueFn oracle_v(const Scenario& sc) {
  return oracle_value_fn(exact_reach_avoid(sc, OracleMode::Optimal), sc);
}

SearchConfig exhaustive() {
  SearchConfig cfg;
  cfg.B = 64;
  cfg.k = 8;
  cfg.M = 4096;
  return cfg;
}

std::pair<double, double> clopper_pearson(int s, int n) {
  double lo = s == 0 ? 0.0
                     : boost::math::quantile(
                           boost::math::beta_distribution<double>(s, n - s + 1), 0.025);
  double hi = s == n ? 1.0
                     : boost::math::quantile(
                           boost::math::beta_distribution<double>(s + 1, n - s), 0.975);
  return {lo, hi};
}

}  // namespace

int main() {
  // 1. expectile loss arithmetic, exact to machine precision (1 - 0.7 lands
  // one ulp off the 0.3 literal, so "exact" means a couple of ulps)
  criterion("expectile arithmetic", [] {
    CheckResult o;
    const double ulps = 1e-15;
    bool a = std::abs(expectile_loss(1.0, 0.7) - 0.7) <= ulps;
    bool b = std::abs(expectile_loss(-1.0, 0.7) - 0.3) <= ulps;
    bool c = std::abs(expectile_loss(2.0, 0.5) - 2.0) <= ulps;
    o.pass = a && b && c;
    o.detail = "rho_0.7(+1)=" + fmt(expectile_loss(1.0, 0.7), 17) +
               " rho_0.7(-1)=" + fmt(expectile_loss(-1.0, 0.7), 17) +
               " rho_0.5(2)=" + fmt(expectile_loss(2.0, 0.5), 17) + " (tol 1e-15)";
    return o;
  });

  // 2. pathwise identity over 10,000 fuzzed episodes, < 10 s
  criterion("pathwise return identity", [] {
    CheckResult o;
    const char* names[] = {"cabinet",    "chain3", "drawer-box", "drawer-can",
                           "drawer-degraded", "plug2",  "plug3",      "simpler"};
    auto t0 = std::chrono::steady_clock::now();
    int total = 0, bad = 0;
    for (const char* name : names) {
      Scenario sc = load_builtin(name);
      for (int e = 0; e < 1250; ++e) {
        Rng rng = derive_stream(2000 + e, static_cast<std::uint64_t>(e));
        const std::string& instr = sc.instructions[e % sc.instructions.size()];
        EpisodeRecord ep = rollout(sc, BehaviorPolicy::uniform(), instr, rng, e);
        double want = ep.outcome == Label::Goal ? 1.0 : 0.0;
        if (episode_return(ep, 1.0) != want) ++bad;
        ++total;
      }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = total == 10000 && bad == 0 && secs < 10.0;
    o.detail = std::to_string(total) + " episodes across 8 scenarios, " +
               std::to_string(bad) + " mismatches, " + fmt(secs, 2) + "s (cap 10s)";
    return o;
  });

  // 3. symmetric expectile VI == behavior oracle, sup-norm 1e-8, < 5 s
  criterion("expectile VI matches the exact kernel", [] {
    CheckResult o;
    auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    std::size_t keys = 0;
    for (const char* name : {"plug2", "drawer-can"}) {
      Scenario sc = load_builtin(name);
      ExpectileVIResult vi = synchronous_expectile_vi(sc, BehaviorPolicy::uniform(), 0.5, 1.0);
      ReachAvoidSolution sol = exact_reach_avoid(sc, OracleMode::Behavior);
      for (const auto& [key, v] : vi.values) {
        worst = std::max(worst, std::abs(v - sol.values.at(node_part(key))));
        ++keys;
      }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = worst <= 1e-8 && keys > 0 && secs < 5.0;
    o.detail = "sup-norm " + fmt(worst, 12) + " over " + std::to_string(keys) +
               " keys (tol 1e-8), " + fmt(secs, 2) + "s (cap 5s)";
    return o;
  });

  // 4. tabular training on 50,000 sampled transitions, <= 0.05 on >=100-visit keys, < 60 s
  criterion("sampled tabular training converges", [] {
    CheckResult o;
    auto t0 = std::chrono::steady_clock::now();
    Scenario sc = load_builtin("plug2");
    Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 20000, {}, 41);
    if (ds.samples.size() < 50000) {
      o.detail = "corpus only has " + std::to_string(ds.samples.size()) + " transitions";
      return o;
    }
    ds.samples.resize(50000);
    TrainConfig cfg;
    cfg.tau_e = 0.5;
    cfg.gamma = 1.0;
    TrainResult tr = train_value(ds, cfg);
    ReachAvoidSolution sol = exact_reach_avoid(sc, OracleMode::Behavior);
    double worst = 0.0;
    std::size_t checked = 0;
    for (const auto& [key, v] : tr.model.table) {
      if (tr.model.visits.at(key) < 100) continue;
      worst = std::max(worst, std::abs(v - sol.values.at(node_part(key))));
      ++checked;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = worst <= 0.05 && checked > 0 && secs < 60.0;
    o.detail = "max |V - oracle| " + fmt(worst) + " over " + std::to_string(checked) +
               " keys with >=100 visits (tol 0.05), " + fmt(secs, 2) + "s (cap 60s)";
    return o;
  });

  // 5. discounted identity on the deterministic 3-edge chain
  criterion("discounted chain value", [] {
    CheckResult o;
    Scenario sc = load_builtin("chain3");
    ReachAvoidSolution sol = exact_reach_avoid(sc, OracleMode::Optimal, 0.9);
    double v = root_value(sc, sol, "advance the token");
    o.pass = std::abs(v - 0.81) <= 1e-8;
    o.detail = "gamma=0.9 root value " + fmt(v, 12) + " vs 0.81 (tol 1e-8)";
    return o;
  });

  // 6. search with the exact value head returns the enumeration argmax, < 10 s
  criterion("planner-oracle agreement", [] {
    CheckResult o;
    struct Case {
      const char* scenario;
      const char* instruction;
      std::uint64_t eps;
      std::uint64_t seed;
    };
    // corpora sized so fitted most-likely outcomes match the true ones
    const Case cases[] = {
        {"plug3", "plug all three", 5000, 7},   {"plug2", "plug both plugs", 2000, 8},
        {"drawer-box", "stow the box", 3000, 9}, {"drawer-can", "pack spam", 5000, 10},
        {"drawer-can", "pack salmon", 5000, 10}, {"cabinet", "fetch the mug", 20000, 11},
        {"cabinet", "fetch the jar", 20000, 11},
    };
    auto t0 = std::chrono::steady_clock::now();
    int agree = 0, total = 0;
    std::string plug3_plan;
    double plug3_prob = 0.0;
    for (const Case& c : cases) {
      Scenario sc = load_builtin(c.scenario);
      ProposalModel prop = uniform_prop(sc, c.eps, c.seed);
      SearchResult r =
          search(sc, initial_node(sc, c.instruction), {}, prop, oracle_v(sc), exhaustive());
      ArgmaxResult best = argmax_plan(sc, c.instruction, 6);
      if (serialize_plan(r.plan.edges) == serialize_plan(best.plan)) ++agree;
      ++total;
      if (std::string(c.scenario) == "plug3") {
        plug3_plan = serialize_plan(r.plan.edges);
        plug3_prob = plan_success_prob(sc, c.instruction, r.plan.edges);
      }
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool plug3_ok =
        plug3_plan ==
            "grasp(small)~insert(small)~grasp(round)~insert(round)~grasp(rect)~insert(rect)" &&
        std::abs(plug3_prob - 0.96) <= 1e-9;
    o.pass = agree == total && plug3_ok && secs < 10.0;
    o.detail = std::to_string(agree) + "/" + std::to_string(total) +
               " instructions at the argmax; plug3 small-round-rect at " + fmt(plug3_prob) +
               " (want 0.96), " + fmt(secs, 2) + "s (cap 10s)";
    return o;
  });

  // 7. every configured calibration target within +-0.01
  criterion("scenario calibration", [] {
    CheckResult o;
    int rows = 0, misses = 0;
    for (const char* name : {"cabinet", "drawer-box", "drawer-can", "plug2", "plug3"}) {
      for (const auto& row : calibration_report(load_builtin(name))) {
        ++rows;
        if (!row.pass) ++misses;
      }
    }
    o.pass = rows > 0 && misses == 0;
    o.detail = std::to_string(rows) + " configured paths, " + std::to_string(misses) +
               " outside +-0.01";
    return o;
  });

  // 8. failure-data ablation on leave-biased drawer-can, < 2 min
  criterion("failure-aware value beats the chain on biased data", [] {
    CheckResult o;
    auto t0 = std::chrono::steady_clock::now();
    Scenario sc = load_builtin("drawer-can");
    // 3:1:1 root weights = 60% of demonstrations reach over the salmon
    Dataset ds = build_dataset(sc, BehaviorPolicy::weighted({{"grasp(spam)", 3.0}}), 2000,
                               {}, 3);
    ProposalModel prop = fit_proposal(ds);
    TrainResult tr = train_value(ds, TrainConfig{});
    ValueFn vf = make_value_fn(tr.model, sc);
    Node root = initial_node(sc, "pack spam");

    Plan chain = chain_rollout(sc, root, {}, prop, 6);
    SearchResult full = search(sc, root, {}, prop, vf, SearchConfig{});
    double p_chain = plan_success_prob(sc, "pack spam", chain.edges);
    double p_full = plan_success_prob(sc, "pack spam", full.plan.edges);

    EvalSummary ev_chain = summarize(evaluate_plan_parallel(sc, chain, 1000, 3));
    EvalSummary ev_full = summarize(evaluate_plan_parallel(sc, full.plan, 1000, 3));
    double gap = ev_full.success_rate() - ev_chain.success_rate();
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    o.pass = p_full >= 0.45 && p_chain <= 0.05 && gap >= 0.30 && secs < 120.0;
    o.detail = "exact full " + fmt(p_full) + " (>=0.45) vs chain " + fmt(p_chain) +
               " (<=0.05); evaluated gap " + fmt(gap) + " over 1000 episodes (>=0.30), " +
               fmt(secs, 2) + "s (cap 120s)";
    return o;
  });

  // 9. success non-decreasing in proposal width K on the unseen drawer variant
  criterion("test-time scaling trend", [] {
    CheckResult o;
    Scenario base = load_builtin("drawer-can");
    Scenario shifted = apply_variant(base, "shifted");
    const int Ks[] = {1, 2, 3, 4};
    std::vector<double> rates;
    std::vector<std::pair<double, double>> cis;
    std::string per_k;
    for (int K : Ks) {
      int succ = 0, n = 0;
      for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        Dataset ds = build_dataset(base, BehaviorPolicy::weighted({{"grasp(spam)", 3.0}}),
                                   2000, {}, seed);
        ProposalModel prop = fit_proposal(ds);
        TrainResult tr = train_value(ds, TrainConfig{});
        ValueFn vf = make_value_fn(tr.model, shifted);
        SearchConfig cfg;
        cfg.k = K;
        SearchResult r =
            search(shifted, initial_node(shifted, "pack spam"), {}, prop, vf, cfg);
        EvalSummary ev = summarize(evaluate_plan_parallel(shifted, r.plan, 500, seed));
        succ += ev.successes;
        n += ev.n;
      }
      rates.push_back(static_cast<double>(succ) / n);
      cis.push_back(clopper_pearson(succ, n));
      per_k += (per_k.empty() ? "" : " ") + std::string("K") + std::to_string(K) + "=" +
               fmt(rates.back(), 3);
    }
    bool ok = true;
    for (std::size_t i = 1; i < rates.size(); ++i) {
      // a decrease is only tolerated while the 95% CIs still overlap
      if (rates[i] < rates[i - 1] && cis[i].second < cis[i - 1].first) ok = false;
    }
    o.pass = ok;
    o.detail = per_k + " over 5 seeds x 500 episodes on drawer-can:shifted" +
               (ok ? "" : " (disjoint-CI decrease)");
    return o;
  });

  // 10. replanning beats open-loop execution by >= 5 points over 2,000 episodes
  criterion("replanning trend", [] {
    CheckResult o;
    Scenario sc = load_builtin("drawer-degraded");
    ProposalModel prop = uniform_prop(sc, 3000, 11);
    ValueFn v = oracle_v(sc);
    SearchResult sr = search(sc, initial_node(sc, "stow the box"), {}, prop, v, exhaustive());
    // commit the fragile push line: its mid-plan scuff is the scripted degradation
    Plan plan;
    for (int u = 0; u < static_cast<int>(sr.tree.nodes.size()); ++u) {
      if (!sr.tree.nodes[u].children.empty()) continue;
      std::vector<int> path;
      for (int i = u; i >= 0; i = sr.tree.nodes[i].parent) path.push_back(i);
      std::reverse(path.begin(), path.end());
      std::vector<Edge> edges;
      for (std::size_t j = 1; j < path.size(); ++j)
        edges.push_back(sr.tree.nodes[path[j]].in_edge);
      if (serialize_plan(edges) != "open(drawer)~push(box)~close(drawer)") continue;
      for (int idx : path) plan.nodes.push_back(sr.tree.nodes[idx].node);
      plan.edges = edges;
      plan.leaf = u;
      break;
    }
    if (plan.leaf < 0) {
      o.detail = "push line missing from the committed tree";
      return o;
    }
    UncertaintyMonitor mon;
    ReplanConfig on;
    ReplanConfig off = on;
    off.enabled = false;
    EvalSummary ev_on =
        summarize(evaluate_replan_parallel(sc, sr.tree, plan, prop, v, mon, on, 2000, 55));
    EvalSummary ev_off =
        summarize(evaluate_replan_parallel(sc, sr.tree, plan, prop, v, mon, off, 2000, 55));
    double gap = ev_on.success_rate() - ev_off.success_rate();
    o.pass = gap >= 0.05;
    o.detail = "enabled " + fmt(ev_on.success_rate(), 3) + " vs disabled " +
               fmt(ev_off.success_rate(), 3) + " over 2000 episodes each; gap " +
               fmt(gap, 3) + " (>=0.05)";
    return o;
  });

  // 11. guided search reaches the plug3 argmax with strictly fewer expansions than DFS
  criterion("search efficiency", [] {
    CheckResult o;
    Scenario sc = load_builtin("plug3");
    ValueFn v = oracle_v(sc);
    std::string want = serialize_plan(argmax_plan(sc, "plug all three", 6).plan);
    Node root = initial_node(sc, "plug all three");
    int wins = 0, at_argmax = 0;
    std::uint64_t guided_sum = 0, dfs_sum = 0;
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
      ProposalModel prop = uniform_prop(sc, 400, seed);
      SearchConfig cfg;
      cfg.B = 1;
      cfg.k = 3;
      cfg.M = 8;
      SearchResult guided = search(sc, root, {}, prop, v, cfg);
      DfsResult sweep = dfs_search(sc, root, {}, prop, v, 6);
      if (serialize_plan(guided.plan.edges) == want) ++at_argmax;
      if (guided.tree.expansions < sweep.expansions) ++wins;
      guided_sum += guided.tree.expansions;
      dfs_sum += sweep.expansions;
    }
    o.pass = wins == 10 && at_argmax == 10;
    o.detail = "strictly fewer expansions on " + std::to_string(wins) +
               "/10 seeds, argmax on " + std::to_string(at_argmax) + "/10 (mean " +
               fmt(guided_sum / 10.0, 1) + " vs dfs " + fmt(dfs_sum / 10.0, 1) + ")";
    return o;
  });

  // 12. analytic linear gradients vs central differences, 1e-5 relative
  criterion("linear gradient check", [] {
    CheckResult o;
    double worst = 0.0;
    for (std::uint64_t seed : {5, 6, 7})
      worst = std::max(worst, value_gradient_check(0.7, 100, seed));
    worst = std::max(worst, value_gradient_check(0.3, 100, 8));
    worst = std::max(worst, value_gradient_check(0.5, 100, 9));
    o.pass = worst <= 1e-5;
    o.detail = "max relative error " + fmt(worst, 9) + " at 100 points x 5 runs (tol 1e-5)";
    return o;
  });

  // 13. fitted expectiles non-decreasing in tau
  criterion("expectile monotonicity", [] {
    CheckResult o;
    Rng rng(99);
    std::vector<std::pair<double, double>> wy;
    for (int i = 0; i < 20; ++i) wy.emplace_back(0.2 + rng.uniform(), rng.uniform());
    double e3 = expectile_fit(wy, 0.3);
    double e5 = expectile_fit(wy, 0.5);
    double e7 = expectile_fit(wy, 0.7);
    o.pass = e3 <= e5 && e5 <= e7;
    o.detail = "tau 0.3/0.5/0.7 -> " + fmt(e3) + " <= " + fmt(e5) + " <= " + fmt(e7);
    return o;
  });

  std::printf("%d/13 criteria passed\n", 13 - g_failures);
  return g_failures;
}
