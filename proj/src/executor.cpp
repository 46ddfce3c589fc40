#include "reachplan/executor.hpp"

#include <algorithm>
#include <sstream>
#include <utility>

namespace reachplan {

namespace {

std::vector<int> path_of(const SearchTree& t, int leaf) {
  std::vector<int> path;
  for (int i = leaf; i >= 0; i = t.nodes[i].parent) path.push_back(i);
  std::reverse(path.begin(), path.end());
  return path;
}

std::string plan_key(const SearchTree& t, int leaf) {
  std::vector<Edge> edges;
  for (int i = leaf; i > 0; i = t.nodes[i].parent) edges.push_back(t.nodes[i].in_edge);
  std::reverse(edges.begin(), edges.end());
  return serialize_plan(edges);
}

// Contexts carry the whole history, so (node, ctx) pins down at most one
// tree position.
int find_state(const SearchTree& t, const Node& n, const Context& z) {
  for (std::size_t i = 0; i < t.nodes.size(); ++i)
    if (t.nodes[i].node == n && t.nodes[i].ctx == z) return static_cast<int>(i);
  return -1;
}

bool descends_from(const SearchTree& t, int u, int at) {
  for (int i = u; i >= 0; i = t.nodes[i].parent)
    if (i == at) return true;
  return false;
}

// Argmax leaf strictly below `at`, under the same ordering the search uses
// for its final pick: Q, then score, then the serialized plan.
int best_leaf_below(const SearchTree& t, int at) {
  int best = -1;
  double bq = 0.0, bs = 0.0;
  std::string bp;
  for (std::size_t u = 0; u < t.nodes.size(); ++u) {
    if (!t.nodes[u].children.empty() || static_cast<int>(u) == at) continue;
    if (!descends_from(t, static_cast<int>(u), at)) continue;
    double q = t.nodes[u].q();
    double s = t.nodes[u].score;
    std::string p = plan_key(t, static_cast<int>(u));
    if (best < 0 || q > bq || (q == bq && (s > bs || (s == bs && p < bp)))) {
      best = static_cast<int>(u);
      bq = q;
      bs = s;
      bp = std::move(p);
    }
  }
  return best;
}

// Shared walk for both executors. The open-loop caller passes no tree and no
// monitor; the replanning caller hands its private copies in. Keeping one
// body guarantees both consume the RNG stream identically.
ExecutionResult run_plan(const Scenario& sc, const char* fn, const Plan& plan, Rng& rng,
                         std::uint64_t episode_id, SearchTree* t, int committed_leaf,
                         const ProposalModel* prop, const ValueFn* value,
                         UncertaintyMonitor* mon, const ReplanConfig* rcfg) {
  if (plan.edges.empty()) throw Error(std::string(fn) + ": empty plan");
  if (plan.nodes.size() != plan.edges.size() + 1)
    throw Error(std::string(fn) + ": plan nodes and edges do not alternate");

  ExecutionResult res;
  EpisodeRecord& ep = res.episode;
  ep.scenario = sc.name;
  ep.variant = sc.variant;
  ep.instruction = plan.nodes.front().instruction;
  ep.episode_id = episode_id;

  Node n = initial_node(sc, ep.instruction);
  if (!(n == plan.nodes.front()))
    throw Error(std::string(fn) + ": plan does not start at the scenario initial node");

  std::vector<Node> cnodes = plan.nodes;
  std::vector<Edge> cedges = plan.edges;
  std::size_t i = 0;  // next edge of the committed plan
  Context z;

  while (true) {
    Label lab = classify(sc, n);
    if (lab != Label::Interior) {
      ep.outcome = lab;
      break;
    }
    if (z.depth() >= static_cast<std::size_t>(sc.horizon)) {
      ep.outcome = Label::Fail;
      ep.horizon_fail = true;
      break;
    }
    if (i >= cedges.size()) {
      ep.outcome = Label::Fail;
      ep.gave_up = true;
      res.note = "plan exhausted before a terminal node";
      break;
    }
    auto adm = admissible_edges(sc, n, z);
    if (adm.empty()) {
      ep.outcome = Label::Fail;
      ep.dead_end = true;
      break;
    }
    const Edge e = cedges[i];
    if (std::find(adm.begin(), adm.end(), e) == adm.end()) {
      ep.outcome = Label::Fail;
      ep.gave_up = true;
      res.note = "plan edge " + serialize_edge(e) + " is inadmissible at the observed node";
      break;
    }

    StepResult sr = step_option(sc, n, z, e, rng);

    bool trig = false;
    if (mon) {
      mon->window.clear();  // within-chunk statistic: the window never spans edges
      for (double s : sr.trace.samples)
        if (monitor_update(*mon, s)) trig = true;
    }

    EpisodeStep st;
    st.from = n;
    st.ctx = z;
    st.edge = e;
    st.to = sr.next;
    st.to_label = sr.label;
    st.terminal = sr.label != Label::Interior;
    st.reward = sr.label == Label::Goal ? 1.0 : 0.0;
    st.trace = sr.trace;
    ep.steps.push_back(std::move(st));

    MatchFlag mf;
    mf.edge = e;
    mf.predicted = cnodes[i + 1];
    mf.observed = sr.next;
    mf.match = sr.next == cnodes[i + 1];
    mf.trigger = trig;

    z = context_update(z, e, n);
    n = sr.next;
    ++i;

    // The edge already resolved; recovery starts from its sampled outcome.
    if (trig && rcfg && rcfg->enabled && res.switches < rcfg->max_switches &&
        classify(sc, n) == Label::Interior) {
      for (int idx : path_of(*t, committed_leaf)) t->nodes[idx].w_sum *= rcfg->lambda_down;
      int at = find_state(*t, n, z);
      int pick = at >= 0 ? best_leaf_below(*t, at) : -1;
      if (pick >= 0) {
        if (pick != committed_leaf) {
          std::vector<int> down = path_of(*t, pick);
          auto cut = std::find(down.begin(), down.end(), at);
          cnodes.clear();
          cedges.clear();
          for (auto j = cut; j != down.end(); ++j) cnodes.push_back(t->nodes[*j].node);
          for (auto j = cut + 1; j != down.end(); ++j) cedges.push_back(t->nodes[*j].in_edge);
          i = 0;
          committed_leaf = pick;
          res.switches += 1;
          mf.switched = "switched to " + serialize_plan(cedges);
        }
        // else: the committed leaf still wins after the penalty; stay the course
      } else {
        try {
          SearchResult r2 = search(sc, n, z, *prop, *value, rcfg->research);
          *t = std::move(r2.tree);
          committed_leaf = r2.plan.leaf;
          cnodes = std::move(r2.plan.nodes);
          cedges = std::move(r2.plan.edges);
          i = 0;
          res.switches += 1;
          mf.switched = "re-searched: " + serialize_plan(cedges);
        } catch (const Error& err) {
          mf.switched = "re-search failed";
          ep.outcome = Label::Fail;
          ep.gave_up = true;
          res.note = std::string("replanning failed: ") + err.what();
          res.log.push_back(std::move(mf));
          return res;
        }
      }
    }
    res.log.push_back(std::move(mf));
  }
  return res;
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> cols;
  std::size_t start = 0;
  while (true) {
    std::size_t tab = line.find('\t', start);
    if (tab == std::string::npos) {
      cols.push_back(line.substr(start));
      break;
    }
    cols.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
  return cols;
}

bool parse_flag(const std::string& s) {
  if (s == "0") return false;
  if (s == "1") return true;
  throw Error("bad episode log row: flags must be 0 or 1");
}

}  // namespace

bool monitor_update(UncertaintyMonitor& mon, double sample) {
  if (mon.w < 2) throw Error("monitor_update: the window must hold at least 2 samples");
  if (!(mon.kappa_u > 0.0)) throw Error("monitor_update: kappa_u must be positive");
  mon.window.push_back(sample);
  while (static_cast<int>(mon.window.size()) > mon.w) mon.window.pop_front();
  if (static_cast<int>(mon.window.size()) < mon.w) return false;  // warm-up
  double mean = 0.0;
  for (double x : mon.window) mean += x;
  mean /= static_cast<double>(mon.window.size());
  double var = 0.0;
  for (double x : mon.window) var += (x - mean) * (x - mean);
  var /= static_cast<double>(mon.window.size());
  return var > mon.kappa_u;
}

ExecutionResult execute_plan(const Scenario& sc, const Plan& plan, Rng& rng,
                             std::uint64_t episode_id) {
  return run_plan(sc, "execute_plan", plan, rng, episode_id, nullptr, -1, nullptr, nullptr,
                  nullptr, nullptr);
}

ExecutionResult execute_with_replanning(const Scenario& sc, const SearchTree& tree,
                                        const Plan& plan, const ProposalModel& prop,
                                        const ValueFn& value, UncertaintyMonitor mon,
                                        const ReplanConfig& rcfg, Rng& rng,
                                        std::uint64_t episode_id) {
  if (rcfg.lambda_down < 0.0 || rcfg.lambda_down >= 1.0)
    throw Error("execute_with_replanning: lambda_down must sit in [0, 1)");
  if (rcfg.max_switches < 0)
    throw Error("execute_with_replanning: max_switches must be non-negative");
  if (plan.leaf < 0 || plan.leaf >= static_cast<int>(tree.nodes.size()))
    throw Error("execute_with_replanning: plan leaf is not a tree node");

  std::vector<int> path = path_of(tree, plan.leaf);
  bool ok = path.size() == plan.nodes.size() && plan.nodes.size() == plan.edges.size() + 1;
  for (std::size_t i = 0; ok && i < path.size(); ++i)
    ok = tree.nodes[path[i]].node == plan.nodes[i];
  for (std::size_t i = 0; ok && i + 1 < path.size(); ++i)
    ok = tree.nodes[path[i + 1]].in_edge == plan.edges[i];
  if (!ok) throw Error("execute_with_replanning: plan does not trace a path in the tree");

  SearchTree t = tree;  // private copy: down-weighting must not leak to the caller
  return run_plan(sc, "execute_with_replanning", plan, rng, episode_id, &t, plan.leaf, &prop,
                  &value, &mon, &rcfg);
}

std::string episode_log_dump(const std::vector<MatchFlag>& log) {
  std::string out;
  for (const auto& mf : log) {
    out += serialize_edge(mf.edge);
    out += '\t';
    out += serialize_node(mf.predicted);
    out += '\t';
    out += serialize_node(mf.observed);
    out += '\t';
    out += mf.match ? '1' : '0';
    out += '\t';
    out += mf.trigger ? '1' : '0';
    out += '\t';
    out += mf.switched;
    out += '\n';
  }
  return out;
}

std::vector<MatchFlag> episode_log_parse(const std::string& text) {
  std::vector<MatchFlag> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 6) throw Error("bad episode log row: expected 6 columns");
    MatchFlag mf;
    mf.edge = parse_edge(cols[0]);
    mf.predicted = parse_node(cols[1]);
    mf.observed = parse_node(cols[2]);
    mf.match = parse_flag(cols[3]);
    mf.trigger = parse_flag(cols[4]);
    mf.switched = cols[5];
    out.push_back(std::move(mf));
  }
  return out;
}

}  // namespace reachplan
