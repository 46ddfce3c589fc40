#include "reachplan/search.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "json.hpp"

namespace reachplan {

namespace {

using nlohmann::json;

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::vector<int> path_to(const SearchTree& t, int idx) {
  std::vector<int> path;
  for (int i = idx; i != -1; i = t.nodes[i].parent) path.push_back(i);
  std::reverse(path.begin(), path.end());
  return path;
}

Plan trace_plan(const SearchTree& t, int leaf) {
  Plan p;
  p.leaf = leaf;
  for (int i : path_to(t, leaf)) {
    if (t.nodes[i].parent != -1) p.edges.push_back(t.nodes[i].in_edge);
    p.nodes.push_back(t.nodes[i].node);
  }
  p.predicted = t.nodes[leaf].label;
  return p;
}

std::string plan_string(const SearchTree& t, int leaf) {
  std::vector<Edge> edges;
  for (int i : path_to(t, leaf))
    if (t.nodes[i].parent != -1) edges.push_back(t.nodes[i].in_edge);
  return serialize_plan(edges);
}

void backup(SearchTree& t, int leaf, double v) {
  for (int i = leaf; i != -1; i = t.nodes[i].parent) {
    t.nodes[i].w_sum += v;
    t.nodes[i].n_visits += 1;
  }
}

}  // namespace

ValueFn make_value_fn(ValueModel m, Scenario sc) {
  return [m = std::move(m), sc = std::move(sc)](const Node& n, const Context& z) {
    return value_of(m, sc, n, z);
  };
}

ValueFn oracle_value_fn(ReachAvoidSolution sol, Scenario sc) {
  return [sol = std::move(sol), sc = std::move(sc)](const Node& n, const Context& z) {
    switch (classify(sc, n)) {
      case Label::Goal: return 1.0;
      case Label::Fail: return 0.0;
      case Label::Interior: break;
    }
    auto it = sol.values.find(sol.collapsed ? serialize_node(n) : node_edge_key(n, z));
    return it == sol.values.end() ? 0.0 : it->second;
  };
}

SearchResult search(const Scenario& sc, const Node& root, const Context& root_z,
                    const ProposalModel& prop, const ValueFn& value,
                    const SearchConfig& cfg) {
  if (cfg.B < 1) throw Error("search needs B >= 1");
  if (cfg.k < 1) throw Error("search needs k >= 1");
  if (cfg.M < 1) throw Error("search needs M >= 1");
  int keep = cfg.keep < 0 ? cfg.k : cfg.keep;
  if (keep < 1 || keep > cfg.k) throw Error("search needs 1 <= keep <= k");
  if (!(cfg.alpha >= 0.0 && cfg.alpha <= 1.0)) throw Error("alpha must be in [0,1]");
  if (classify(sc, root) != Label::Interior)
    throw Error("search root is terminal (" + label_name(classify(sc, root)) + ")");

  SearchResult out;
  SearchTree& t = out.tree;
  {
    SearchNode r;
    r.node = root;
    r.ctx = root_z;
    r.leaf_v = cfg.confidence_mode ? 1.0 : value(root, root_z);
    t.nodes.push_back(std::move(r));
  }

  auto expandable = [&](const SearchNode& sn) {
    return sn.children.empty() && sn.label == Label::Interior && !sn.exhausted &&
           sn.ctx.depth() < static_cast<std::size_t>(sc.horizon);
  };
  // deterministic preference order: Q, then creation score, then state key
  auto better = [&](int a, int b) {
    const SearchNode &na = t.nodes[a], &nb = t.nodes[b];
    if (na.q() != nb.q()) return na.q() > nb.q();
    if (na.score != nb.score) return na.score > nb.score;
    return node_edge_key(na.node, na.ctx) < node_edge_key(nb.node, nb.ctx);
  };

  bool found_goal = false;
  for (int m = 0; m < cfg.M && !(cfg.stop_on_goal && found_goal); ++m) {
    std::vector<int> pool;
    for (int i = 0; i < int(t.nodes.size()); ++i)
      if (expandable(t.nodes[i])) pool.push_back(i);
    if (pool.empty()) break;
    std::sort(pool.begin(), pool.end(), better);
    if (pool.size() > static_cast<std::size_t>(cfg.B)) pool.resize(cfg.B);

    for (int pi : pool) {
      auto ranked = propose_topk(prop, sc, t.nodes[pi].node, t.nodes[pi].ctx, cfg.k);
      // skip edges this parent already has; take the next-ranked instead
      std::vector<std::pair<Edge, double>> kept;
      for (const auto& cand : ranked) {
        if (int(kept.size()) == keep) break;
        bool dup = false;
        for (int ci : t.nodes[pi].children)
          if (t.nodes[ci].in_edge == cand.first) dup = true;
        if (!dup) kept.push_back(cand);
      }
      if (kept.empty()) {
        t.nodes[pi].exhausted = true;
        continue;
      }
      double q_parent = t.nodes[pi].q();  // snapshot: siblings score alike
      for (const auto& [e, phat] : kept) {
        SearchNode c;
        c.node = greedy_successor(prop, sc, t.nodes[pi].node, t.nodes[pi].ctx, e);
        c.ctx = context_update(t.nodes[pi].ctx, e, t.nodes[pi].node);
        c.parent = pi;
        c.in_edge = e;
        c.label = classify(sc, c.node);
        c.score = cfg.alpha * q_parent + (1.0 - cfg.alpha) * phat;
        if (cfg.confidence_mode) {
          c.leaf_v = t.nodes[pi].leaf_v * phat;  // label-blind by design
        } else {
          c.leaf_v = c.label == Label::Goal   ? 1.0
                     : c.label == Label::Fail ? 0.0
                                              : value(c.node, c.ctx);
        }
        int ci = int(t.nodes.size());
        t.nodes.push_back(std::move(c));
        t.nodes[pi].children.push_back(ci);
        t.expansions += 1;
        backup(t, ci, t.nodes[ci].leaf_v);
        if (t.nodes[ci].label == Label::Goal) found_goal = true;
      }
    }
  }
  if (t.expansions == 0)
    throw Error("no plan: nothing was expandable from the search root");

  int best = -1;
  std::string best_plan;
  for (int i = 0; i < int(t.nodes.size()); ++i) {
    if (!t.nodes[i].children.empty()) continue;  // select over leaves
    std::string ps = plan_string(t, i);
    if (best == -1) {
      best = i;
      best_plan = ps;
      continue;
    }
    const SearchNode &a = t.nodes[i], &b = t.nodes[best];
    bool wins = a.q() != b.q()         ? a.q() > b.q()
                : a.score != b.score   ? a.score > b.score
                                       : ps < best_plan;
    if (wins) {
      best = i;
      best_plan = ps;
    }
  }
  out.plan = trace_plan(t, best);
  return out;
}

DfsResult dfs_search(const Scenario& sc, const Node& root, const Context& root_z,
                     const ProposalModel& prop, const ValueFn& value, int depth_cap) {
  if (depth_cap < 1) throw Error("dfs needs a positive depth cap");
  if (classify(sc, root) != Label::Interior)
    throw Error("search root is terminal (" + label_name(classify(sc, root)) + ")");
  std::size_t left = static_cast<std::size_t>(sc.horizon) > root_z.depth()
                         ? static_cast<std::size_t>(sc.horizon) - root_z.depth()
                         : 0;
  std::size_t cap = std::min<std::size_t>(depth_cap, left);
  if (cap == 0) throw Error("no plan: the root already sits at the horizon");

  DfsResult out;
  double best_score = -1.0, best_pv = -1.0;
  std::string best_key;
  std::vector<Node> nodes{root};
  std::vector<Edge> edges;

  // ties between complete paths go to the one whose pre-exit parent the value
  // head likes better (the thing Q separates in tree search), then lex order
  auto record = [&](double score, double pv, Label lab) {
    std::string key = serialize_plan(edges);
    bool wins = score != best_score ? score > best_score
                : pv != best_pv     ? pv > best_pv
                                    : key < best_key;
    if (wins) {
      best_score = score;
      best_pv = pv;
      best_key = key;
      out.plan.nodes = nodes;
      out.plan.edges = edges;
      out.plan.predicted = lab;
    }
  };

  std::function<void(const Node&, const Context&, double)> walk =
      [&](const Node& n, const Context& z, double parent_v) {
        Label lab = classify(sc, n);
        if (lab != Label::Interior) {
          record(lab == Label::Goal ? 1.0 : 0.0, parent_v, lab);
          return;
        }
        std::size_t depth = z.depth() - root_z.depth();
        if (depth >= cap) {
          record(value(n, z), parent_v, lab);
          return;
        }
        auto adm = admissible_edges(sc, n, z);  // lexicographic by construction
        if (adm.empty()) {
          record(0.0, parent_v, lab);  // stranded: counts like a failure
          return;
        }
        double v_here = value(n, z);
        for (const Edge& e : adm) {
          out.expansions += 1;
          Node child = greedy_successor(prop, sc, n, z, e);
          nodes.push_back(child);
          edges.push_back(e);
          walk(child, context_update(z, e, n), v_here);
          nodes.pop_back();
          edges.pop_back();
        }
      };
  walk(root, root_z, value(root, root_z));
  if (out.expansions == 0)
    throw Error("no plan: nothing was expandable from the search root");
  return out;
}

Plan chain_rollout(const Scenario& sc, const Node& root, const Context& root_z,
                   const ProposalModel& prop, int depth_cap) {
  if (depth_cap < 1) throw Error("chain rollout needs a positive depth cap");
  if (classify(sc, root) != Label::Interior)
    throw Error("search root is terminal (" + label_name(classify(sc, root)) + ")");
  std::size_t left = static_cast<std::size_t>(sc.horizon) > root_z.depth()
                         ? static_cast<std::size_t>(sc.horizon) - root_z.depth()
                         : 0;
  std::size_t cap = std::min<std::size_t>(depth_cap, left);

  Plan p;
  p.nodes.push_back(root);
  Node n = root;
  Context z = root_z;
  while (true) {
    Label lab = classify(sc, n);
    if (lab != Label::Interior) {
      p.predicted = lab;
      break;
    }
    if (p.edges.size() >= cap) {
      p.note = "cut at the depth cap";
      break;
    }
    auto top = propose_topk(prop, sc, n, z, 1);
    if (top.empty()) {
      p.note = "dead end after " + std::to_string(p.edges.size()) +
               " edges: nothing admissible";
      break;
    }
    const Edge& e = top[0].first;
    Node child = greedy_successor(prop, sc, n, z, e);
    p.edges.push_back(e);
    p.nodes.push_back(child);
    z = context_update(z, e, n);
    n = child;
  }
  return p;
}

std::string tree_dump(const SearchTree& t) {
  std::ostringstream out;
  out << json{{"nodes", t.nodes.size()}, {"expansions", t.expansions}}.dump() << "\n";
  for (std::size_t i = 0; i < t.nodes.size(); ++i) {
    const SearchNode& sn = t.nodes[i];
    out << i << "\t" << sn.parent << "\t"
        << (sn.parent == -1 ? "" : serialize_edge(sn.in_edge)) << "\t"
        << label_name(sn.label) << "\t" << (sn.exhausted ? 1 : 0) << "\t"
        << sn.n_visits << "\t" << fmt_double(sn.w_sum) << "\t"
        << fmt_double(sn.leaf_v) << "\t" << fmt_double(sn.score) << "\t"
        << serialize_node(sn.node) << "\t" << serialize_context(sn.ctx) << "\n";
  }
  return out.str();
}

SearchTree tree_parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty tree dump");
  SearchTree t;
  std::size_t expect = 0;
  try {
    json header = json::parse(line);
    expect = header.at("nodes").get<std::size_t>();
    t.expansions = header.at("expansions").get<std::uint64_t>();
  } catch (const json::exception& ex) {
    throw Error(std::string("bad tree dump header: ") + ex.what());
  }
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;  // keep trailing empties: the root has no context
    for (std::size_t pos = 0;;) {
      std::size_t tab = line.find('\t', pos);
      cols.push_back(line.substr(pos, tab - pos));
      if (tab == std::string::npos) break;
      pos = tab + 1;
    }
    if (cols.size() != 11) throw Error("bad tree dump row: '" + line + "'");
    SearchNode sn;
    std::size_t idx = std::stoull(cols[0]);
    if (idx != t.nodes.size()) throw Error("tree dump rows out of order");
    sn.parent = std::stoi(cols[1]);
    if (sn.parent != -1) {
      if (sn.parent < 0 || sn.parent >= int(t.nodes.size()))
        throw Error("tree dump parent out of range");
      sn.in_edge = parse_edge(cols[2]);
    }
    sn.label = parse_label(cols[3]);
    sn.exhausted = cols[4] == "1";
    sn.n_visits = std::stoull(cols[5]);
    sn.w_sum = std::stod(cols[6]);
    sn.leaf_v = std::stod(cols[7]);
    sn.score = std::stod(cols[8]);
    sn.node = parse_node(cols[9]);
    sn.ctx = parse_context(cols[10]);
    int parent = sn.parent;
    t.nodes.push_back(std::move(sn));
    if (parent != -1) t.nodes[parent].children.push_back(int(idx));
  }
  if (t.nodes.size() != expect) throw Error("tree dump truncated");
  return t;
}

std::string plan_dump(const Plan& p) {
  std::ostringstream out;
  out << json{{"predicted", label_name(p.predicted)}, {"note", p.note}}.dump() << "\n";
  for (std::size_t i = 0; i < p.nodes.size(); ++i) {
    out << serialize_node(p.nodes[i]) << "\n";
    if (i < p.edges.size()) out << serialize_edge(p.edges[i]) << "\n";
  }
  return out.str();
}

Plan plan_parse(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty plan dump");
  Plan p;
  try {
    json header = json::parse(line);
    p.predicted = parse_label(header.at("predicted").get<std::string>());
    p.note = header.at("note").get<std::string>();
  } catch (const json::exception& ex) {
    throw Error(std::string("bad plan dump header: ") + ex.what());
  }
  bool want_node = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (want_node) p.nodes.push_back(parse_node(line));
    else p.edges.push_back(parse_edge(line));
    want_node = !want_node;
  }
  if (p.nodes.empty() || p.nodes.size() != p.edges.size() + 1)
    throw Error("plan dump does not alternate node/edge/node");
  return p;
}

}  // namespace reachplan
