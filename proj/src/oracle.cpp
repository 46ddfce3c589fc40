#include "reachplan/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>

namespace reachplan {

namespace {

// One reachable state of the enumeration. In collapsed mode (no history
// overrides) the transition law only sees the node, so states are keyed
// (node, depth) and `z` stays empty; otherwise the full context is part of
// the identity.
struct ExpState {
  Node n;
  Context z;
  int depth = 0;
  Label label = Label::Interior;
  bool expandable = false;  // interior and under the horizon
  struct Arm {
    double p;
    Label next_label;
    std::string next_key;
  };
  std::vector<std::vector<Arm>> arms;  // one entry per admissible edge
};

double backup(const ExpState& st, OracleMode mode, double gamma,
              const std::map<std::string, double>& V) {
  double sum = 0.0, best = 0.0;
  for (const auto& arm : st.arms) {
    double q = 0.0;
    for (const auto& a : arm) {
      double c;
      if (a.next_label == Label::Goal)
        c = 1.0;  // entrance reward, paid undiscounted on arrival
      else if (a.next_label == Label::Fail)
        c = 0.0;
      else
        c = gamma * V.at(a.next_key);
      q += a.p * c;
    }
    sum += q;
    best = std::max(best, q);
  }
  return mode == OracleMode::Optimal ? best : sum / double(st.arms.size());
}

}  // namespace

ReachAvoidSolution exact_reach_avoid(const Scenario& sc, OracleMode mode,
                                     double gamma, double tol, int horizon) {
  if (horizon < 0) horizon = sc.horizon;

  const bool full = sc.uses_overrides;
  auto state_key = [&](const Node& n, const Context& z, int depth) {
    return full ? node_edge_key(n, z)
                : serialize_node(n) + "#d" + std::to_string(depth);
  };

  std::map<std::string, ExpState> states;
  std::vector<std::string> order;  // discovery order; depth is nondecreasing

  auto discover = [&](const Node& n, const Context& z, int depth) {
    std::string key = state_key(n, z, depth);
    if (!states.count(key)) {
      ExpState st;
      st.n = n;
      st.z = z;
      st.depth = depth;
      st.label = classify(sc, n);
      states.emplace(key, std::move(st));
      order.push_back(key);
    }
    return key;
  };

  for (const auto& instr : sc.instructions)
    discover(initial_node(sc, instr), Context{}, 0);

  for (std::size_t qi = 0; qi < order.size(); ++qi) {
    ExpState& st = states.at(order[qi]);
    if (st.label != Label::Interior || st.depth >= horizon) continue;
    st.expandable = true;
    for (const Edge& e : admissible_edges(sc, st.n, st.z)) {
      std::vector<ExpState::Arm> arm;
      Context z2 = full ? context_update(st.z, e, st.n) : Context{};
      for (const Outcome& o : select_outcomes(sc, st.n, st.z, e)) {
        if (o.p == 0.0) continue;
        Node nxt = apply_outcome(sc, st.n, o);
        std::string nk = discover(nxt, z2, st.depth + 1);
        arm.push_back({o.p, states.at(nk).label, nk});
      }
      st.arms.push_back(std::move(arm));
    }
  }

  // Successor depth strictly exceeds parent depth and discovery is layered,
  // so walking the discovery order backwards is a topological sweep.
  std::map<std::string, double> V;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const ExpState& st = states.at(*it);
    double v = 0.0;
    if (st.label == Label::Goal)
      v = 1.0;
    else if (st.label == Label::Fail)
      v = 0.0;
    else if (!st.expandable || st.arms.empty())
      v = 0.0;  // out of budget, or a dead end
    else
      v = backup(st, mode, gamma, V);
    V[*it] = v;
  }

  double residual = 0.0;
  for (const auto& [key, st] : states) {
    if (!st.expandable || st.arms.empty()) continue;
    residual = std::max(residual, std::abs(backup(st, mode, gamma, V) - V.at(key)));
  }
  if (residual >= tol)
    throw Error("reach-avoid backward induction left residual " +
                std::to_string(residual));

  ReachAvoidSolution sol;
  sol.mode = mode;
  sol.gamma = gamma;
  sol.horizon = horizon;
  sol.collapsed = !full;
  sol.residual = residual;
  if (full) {
    sol.values = std::move(V);
  } else {
    for (const auto& [key, st] : states) {
      std::string nk = serialize_node(st.n);
      double v = V.at(key);
      auto [it, fresh] = sol.values.emplace(nk, v);
      if (!fresh && it->second != v)
        throw Error("value at node " + nk +
                    " depends on depth (cycle or binding horizon); cannot "
                    "collapse to bare node keys");
    }
  }
  return sol;
}

double root_value(const Scenario& sc, const ReachAvoidSolution& sol,
                  const std::string& instruction) {
  Node root = initial_node(sc, instruction);
  std::string key =
      sol.collapsed ? serialize_node(root) : node_edge_key(root, Context{});
  auto it = sol.values.find(key);
  if (it == sol.values.end())
    throw Error("solution has no value for the root of \"" + instruction + "\"");
  return it->second;
}

std::string dump_solution(const ReachAvoidSolution& sol) {
  std::string out;
  char buf[40];
  for (const auto& [key, v] : sol.values) {
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += key;
    out += '\t';
    out += buf;
    out += '\n';
  }
  return out;
}

namespace {

// Pure depth-first enumeration over outcome branches, deliberately unshared
// with path_success_prob in scenario.cpp (memoized recursion) so the two
// routes can cross-check each other.
double plan_dfs(const Scenario& sc, const Node& n, const Context& z,
                const std::vector<Edge>& plan, std::size_t i) {
  Label lab = classify(sc, n);
  if (lab == Label::Goal) return 1.0;
  if (lab == Label::Fail) return 0.0;
  if (i >= plan.size()) return 0.0;
  if (z.depth() >= static_cast<std::size_t>(sc.horizon)) return 0.0;
  auto adm = admissible_edges(sc, n, z);
  if (std::find(adm.begin(), adm.end(), plan[i]) == adm.end())
    return 0.0;  // give up, same rule the executor uses
  Context z2 = context_update(z, plan[i], n);
  double total = 0.0;
  for (const Outcome& o : select_outcomes(sc, n, z, plan[i])) {
    if (o.p == 0.0) continue;
    total += o.p * plan_dfs(sc, apply_outcome(sc, n, o), z2, plan, i + 1);
  }
  return total;
}

// Walk the intended line: every step takes the first listed outcome.
void check_spine(const Scenario& sc, const std::string& instruction,
                 const std::vector<Edge>& plan) {
  Node n = initial_node(sc, instruction);
  Context z;
  for (const Edge& e : plan) {
    if (classify(sc, n) != Label::Interior)
      throw Error("plan " + serialize_plan(plan) +
                  " keeps going past a terminal node on its intended line");
    auto adm = admissible_edges(sc, n, z);
    if (std::find(adm.begin(), adm.end(), e) == adm.end())
      throw Error("plan edge " + serialize_edge(e) +
                  " is inadmissible on its intended line");
    Node nxt = apply_outcome(sc, n, select_outcomes(sc, n, z, e).front());
    z = context_update(z, e, n);
    n = nxt;
  }
}

}  // namespace

double plan_success_prob(const Scenario& sc, const std::string& instruction,
                         const std::vector<Edge>& plan) {
  check_spine(sc, instruction, plan);
  return plan_dfs(sc, initial_node(sc, instruction), Context{}, plan, 0);
}

ArgmaxResult argmax_plan(const Scenario& sc, const std::string& instruction,
                         int depth) {
  if (depth < 1) throw Error("argmax_plan needs depth >= 1");
  const int cap = std::min(depth, sc.horizon);
  const Node root = initial_node(sc, instruction);

  ArgmaxResult best;
  best.prob = -1.0;  // any scored plan replaces the sentinel
  std::vector<Edge> plan;

  // Recurse over intended-line prefixes; every prefix is a candidate plan.
  std::function<void(const Node&, const Context&)> rec = [&](const Node& n,
                                                             const Context& z) {
    if (!plan.empty()) {
      double p = plan_dfs(sc, root, Context{}, plan, 0);
      if (p > best.prob ||
          (p == best.prob && serialize_plan(plan) < serialize_plan(best.plan)))
        best = {plan, p};
    }
    if (static_cast<int>(plan.size()) >= cap) return;
    if (classify(sc, n) != Label::Interior) return;
    for (const Edge& e : admissible_edges(sc, n, z)) {
      Node nxt = apply_outcome(sc, n, select_outcomes(sc, n, z, e).front());
      Context z2 = context_update(z, e, n);
      plan.push_back(e);
      rec(nxt, z2);
      plan.pop_back();
    }
  };
  rec(root, Context{});

  if (best.prob < 0.0) best.prob = 0.0;  // no admissible edge at the root
  return best;
}

}  // namespace reachplan
