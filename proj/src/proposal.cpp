#include "reachplan/proposal.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace reachplan {

namespace {

using nlohmann::json;

// vocabulary-relative Laplace estimate
double smoothed(std::uint64_t c, std::uint64_t total, double alpha, std::size_t vocab) {
  return (double(c) + alpha) / (double(total) + alpha * double(vocab));
}

std::uint64_t count_total(const std::map<std::string, std::uint64_t>& counts) {
  std::uint64_t n = 0;
  for (const auto& [k, c] : counts) n += c;
  return n;
}

}  // namespace

std::string conditioning_name(Conditioning c) {
  switch (c) {
    case Conditioning::NodeOnly: return "node-only";
    case Conditioning::NodeLastEdge: return "node+last-edge";
    case Conditioning::NodeFullContext: return "node+full-context";
  }
  throw Error("bad conditioning enum");
}

Conditioning parse_conditioning(const std::string& s) {
  if (s == "node-only") return Conditioning::NodeOnly;
  if (s == "node+last-edge") return Conditioning::NodeLastEdge;
  if (s == "node+full-context") return Conditioning::NodeFullContext;
  throw Error("unknown conditioning '" + s + "'");
}

std::string condition_key(Conditioning c, const Node& n, const Context& z) {
  switch (c) {
    case Conditioning::NodeOnly:
      return serialize_node(n);
    case Conditioning::NodeLastEdge: {
      const Edge* last = z.last_edge();
      return serialize_node(n) + "##" + (last ? serialize_edge(*last) : "");
    }
    case Conditioning::NodeFullContext:
      return node_edge_key(n, z);
  }
  throw Error("bad conditioning enum");
}

std::string serialize_delta(const NodeDelta& d) {
  std::string s;
  for (const std::string& f : d.add) {
    if (!s.empty()) s += ';';
    s += '+';
    s += f;
  }
  for (const std::string& f : d.remove) {
    if (!s.empty()) s += ';';
    s += '-';
    s += f;
  }
  s += '|';
  s += d.gripper;
  return s;
}

NodeDelta parse_delta(const std::string& s) {
  auto bar = s.rfind('|');
  if (bar == std::string::npos) throw Error("delta missing gripper: '" + s + "'");
  NodeDelta d;
  d.gripper = s.substr(bar + 1);
  std::stringstream ss(s.substr(0, bar));
  std::string item;
  while (std::getline(ss, item, ';')) {
    if (item.empty()) continue;
    if (item[0] == '+') d.add.push_back(item.substr(1));
    else if (item[0] == '-') d.remove.push_back(item.substr(1));
    else throw Error("delta entry needs a +/- sign: '" + item + "'");
  }
  return d;
}

NodeDelta node_delta(const Node& from, const Node& to) {
  NodeDelta d;
  std::set_difference(to.facts.begin(), to.facts.end(), from.facts.begin(),
                      from.facts.end(), std::back_inserter(d.add));
  std::set_difference(from.facts.begin(), from.facts.end(), to.facts.begin(),
                      to.facts.end(), std::back_inserter(d.remove));
  d.gripper = to.gripper;
  return d;
}

Node apply_delta(const Node& n, const NodeDelta& d) {
  Node out;
  std::set_difference(n.facts.begin(), n.facts.end(), d.remove.begin(),
                      d.remove.end(), std::back_inserter(out.facts));
  out.facts.insert(out.facts.end(), d.add.begin(), d.add.end());
  out.gripper = d.gripper;
  out.instruction = n.instruction;
  out.canonicalize();
  return out;
}

ProposalModel fit_proposal(const Dataset& ds, Conditioning conditioning, double alpha) {
  if (ds.samples.empty()) throw Error("fit_proposal needs a non-empty dataset");
  if (!(alpha > 0.0)) throw Error("fit_proposal needs smoothing alpha > 0");
  ProposalModel m;
  m.conditioning = conditioning;
  m.alpha = alpha;
  std::set<std::string> edges, deltas;
  for (const Sys2Sample& s : ds.samples) {
    std::string key = condition_key(conditioning, s.n, s.z);
    std::string e = serialize_edge(s.e);
    std::string d = serialize_delta(node_delta(s.n, s.next));
    m.edge_counts[key][e] += 1;
    m.successor_counts[key + "@@" + e][d] += 1;
    edges.insert(e);
    deltas.insert(d);
  }
  m.edge_vocab.assign(edges.begin(), edges.end());
  m.delta_vocab.assign(deltas.begin(), deltas.end());
  return m;
}

double edge_prob(const ProposalModel& m, const Scenario& sc, const Node& n,
                 const Context& z, const Edge& e) {
  auto it = m.edge_counts.find(condition_key(m.conditioning, n, z));
  if (it == m.edge_counts.end()) {
    std::vector<Edge> adm = admissible_edges(sc, n, z);
    if (std::find(adm.begin(), adm.end(), e) == adm.end()) return 0.0;
    return 1.0 / double(adm.size());
  }
  std::string key = serialize_edge(e);
  auto cit = it->second.find(key);
  std::uint64_t c = cit == it->second.end() ? 0 : cit->second;
  // an edge outside the corpus vocabulary still gets the zero-count share
  std::size_t vocab = m.edge_vocab.size();
  if (!std::binary_search(m.edge_vocab.begin(), m.edge_vocab.end(), key)) ++vocab;
  return smoothed(c, count_total(it->second), m.alpha, vocab);
}

std::vector<std::pair<Edge, double>> propose_topk(const ProposalModel& m,
                                                  const Scenario& sc, const Node& n,
                                                  const Context& z, int k) {
  if (k < 1) throw Error("propose_topk needs k >= 1");
  std::vector<std::pair<Edge, double>> ranked;
  for (const Edge& e : admissible_edges(sc, n, z))
    ranked.emplace_back(e, edge_prob(m, sc, n, z, e));
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return serialize_edge(a.first) < serialize_edge(b.first);
  });
  if (ranked.size() > static_cast<std::size_t>(k)) ranked.resize(k);
  return ranked;
}

std::vector<std::pair<Node, double>> predict_successor(const ProposalModel& m,
                                                       const Scenario& sc,
                                                       const Node& n, const Context& z,
                                                       const Edge& e) {
  std::string skey =
      condition_key(m.conditioning, n, z) + "@@" + serialize_edge(e);
  std::map<std::string, double> mass;  // serialized node -> prob
  auto it = m.successor_counts.find(skey);
  if (it != m.successor_counts.end()) {
    std::uint64_t total = count_total(it->second);
    for (const std::string& ds : m.delta_vocab) {
      auto cit = it->second.find(ds);
      std::uint64_t c = cit == it->second.end() ? 0 : cit->second;
      Node next = apply_delta(n, parse_delta(ds));
      mass[serialize_node(next)] += smoothed(c, total, m.alpha, m.delta_vocab.size());
    }
  } else {
    // never saw this key take this edge: fall back on the environment's own
    // outcome support, uniformly
    std::set<std::string> support;
    for (const Outcome& o : select_outcomes(sc, n, z, e))
      support.insert(serialize_node(apply_outcome(sc, n, o)));
    for (const std::string& ns : support) mass[ns] = 1.0 / double(support.size());
  }
  std::vector<std::pair<Node, double>> out;
  out.reserve(mass.size());
  for (const auto& [ns, p] : mass) out.emplace_back(parse_node(ns), p);
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return serialize_node(a.first) < serialize_node(b.first);
  });
  return out;
}

Node greedy_successor(const ProposalModel& m, const Scenario& sc, const Node& n,
                      const Context& z, const Edge& e) {
  auto dist = predict_successor(m, sc, n, z, e);
  if (dist.empty()) throw Error("no successor support for " + serialize_edge(e));
  return dist.front().first;
}

void save_proposal(const ProposalModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write proposal model to " + path);
  json header = {{"alpha", m.alpha},
                 {"conditioning", conditioning_name(m.conditioning)}};
  out << header.dump() << "\n";
  for (const auto& [key, row] : m.edge_counts)
    for (const auto& [edge, c] : row)
      out << "E\t" << key << "\t" << edge << "\t" << c << "\n";
  for (const auto& [skey, row] : m.successor_counts) {
    auto at = skey.find("@@");
    for (const auto& [delta, c] : row)
      out << "S\t" << skey.substr(0, at) << "\t" << skey.substr(at + 2) << "\t"
          << delta << "\t" << c << "\n";
  }
}

ProposalModel load_proposal(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read proposal model from " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty proposal model file " + path);
  ProposalModel m;
  try {
    json header = json::parse(line);
    m.alpha = header.at("alpha").get<double>();
    m.conditioning = parse_conditioning(header.at("conditioning").get<std::string>());
  } catch (const json::exception& ex) {
    throw Error(std::string("bad proposal model header: ") + ex.what());
  }
  std::set<std::string> edges, deltas;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols[0] == "E" && cols.size() == 4) {
      m.edge_counts[cols[1]][cols[2]] += std::stoull(cols[3]);
      edges.insert(cols[2]);
    } else if (cols[0] == "S" && cols.size() == 5) {
      m.successor_counts[cols[1] + "@@" + cols[2]][cols[3]] += std::stoull(cols[4]);
      edges.insert(cols[2]);
      deltas.insert(cols[3]);
    } else {
      throw Error("bad proposal model row: '" + line + "'");
    }
  }
  m.edge_vocab.assign(edges.begin(), edges.end());
  m.delta_vocab.assign(deltas.begin(), deltas.end());
  return m;
}

}  // namespace reachplan
