#include "reachplan/demo.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "json.hpp"

namespace reachplan {

using nlohmann::json;

BehaviorPolicy BehaviorPolicy::uniform() { return BehaviorPolicy{}; }

BehaviorPolicy BehaviorPolicy::path_balanced(std::vector<std::vector<Edge>> paths) {
  BehaviorPolicy pol;
  pol.kind = PolicyKind::PathBalanced;
  pol.paths = std::move(paths);
  return pol;
}

BehaviorPolicy BehaviorPolicy::weighted(std::map<std::string, double> weights) {
  BehaviorPolicy pol;
  pol.kind = PolicyKind::Weighted;
  pol.weights = std::move(weights);
  return pol;
}

namespace {

double edge_weight(const BehaviorPolicy& pol, const Edge& e) {
  auto it = pol.weights.find(serialize_edge(e));
  if (it != pol.weights.end()) return it->second;
  it = pol.weights.find(e.verb);
  if (it != pol.weights.end()) return it->second;
  return 1.0;
}

// scripts must run on their intended line (first listed outcomes)
void check_script(const Scenario& sc, const std::string& instruction,
                  const std::vector<Edge>& path) {
  Node n = initial_node(sc, instruction);
  Context z;
  for (const Edge& e : path) {
    if (classify(sc, n) != Label::Interior)
      throw Error("scripted path " + serialize_plan(path) +
                  " runs past a terminal node under \"" + instruction + "\"");
    auto adm = admissible_edges(sc, n, z);
    if (std::find(adm.begin(), adm.end(), e) == adm.end())
      throw Error("scripted path edge " + serialize_edge(e) +
                  " is inadmissible under \"" + instruction + "\"");
    Node nxt = apply_outcome(sc, n, select_outcomes(sc, n, z, e).front());
    z = context_update(z, e, n);
    n = nxt;
  }
}

}  // namespace

Edge choose_edge(const BehaviorPolicy& pol, const std::vector<Edge>& admissible,
                 std::size_t step_index, std::uint64_t episode_id, Rng& rng) {
  if (admissible.empty()) throw Error("choose_edge: nothing admissible");
  if (pol.kind == PolicyKind::PathBalanced && !pol.paths.empty()) {
    const auto& path = pol.paths[episode_id % pol.paths.size()];
    if (step_index < path.size()) {
      const Edge& want = path[step_index];
      if (std::find(admissible.begin(), admissible.end(), want) != admissible.end())
        return want;
    }
    // script exhausted or off line: improvise like the uniform policy
  }
  std::vector<double> w(admissible.size(), 1.0);
  if (pol.kind == PolicyKind::Weighted)
    for (std::size_t i = 0; i < admissible.size(); ++i)
      w[i] = edge_weight(pol, admissible[i]);
  return admissible[rng.pick_weighted(w)];
}

std::vector<double> policy_edge_probs(const BehaviorPolicy& pol,
                                      const std::vector<Edge>& admissible) {
  if (pol.kind == PolicyKind::PathBalanced)
    throw Error("script policies have no per-state pick distribution");
  std::vector<double> w(admissible.size(), 1.0);
  double total = 0.0;
  for (std::size_t i = 0; i < admissible.size(); ++i) {
    if (pol.kind == PolicyKind::Weighted) w[i] = edge_weight(pol, admissible[i]);
    total += w[i];
  }
  for (double& x : w) x /= total;
  return w;
}

EpisodeRecord rollout(const Scenario& sc, const BehaviorPolicy& pol,
                      const std::string& instruction, Rng& rng,
                      std::uint64_t episode_id) {
  EpisodeRecord ep;
  ep.scenario = sc.name;
  ep.variant = sc.variant;
  ep.instruction = instruction;
  ep.episode_id = episode_id;

  Node n = initial_node(sc, instruction);
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
    auto adm = admissible_edges(sc, n, z);
    if (adm.empty()) {
      ep.outcome = Label::Fail;
      ep.dead_end = true;
      break;
    }
    Edge e = choose_edge(pol, adm, ep.steps.size(), episode_id, rng);
    StepResult sr = step_option(sc, n, z, e, rng);
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
    z = context_update(z, e, n);
    n = sr.next;
  }
  return ep;
}

std::vector<Sys2Sample> segment(const EpisodeRecord& ep) {
  if (ep.outcome == Label::Interior)
    throw Error("segment: episode has not terminated");
  std::vector<Sys2Sample> out;
  out.reserve(ep.steps.size());
  for (const auto& st : ep.steps) {
    Sys2Sample s;
    s.n = st.from;
    s.z = st.ctx;
    s.e = st.edge;
    s.next = st.to;
    s.r = st.reward;
    s.term = st.terminal;
    s.episode_id = ep.episode_id;
    s.episode_outcome = ep.outcome;
    out.push_back(std::move(s));
  }
  return out;
}

Dataset build_dataset(const Scenario& sc, const BehaviorPolicy& pol,
                      std::uint64_t n_episodes,
                      const std::vector<std::string>& instruction_mix,
                      std::uint64_t seed) {
  if (n_episodes == 0) throw Error("build_dataset needs at least one episode");
  Dataset ds;
  ds.scenario = sc.name;
  ds.variant = sc.variant;
  ds.seed = seed;
  ds.episodes = n_episodes;
  ds.instructions = instruction_mix.empty() ? sc.instructions : instruction_mix;
  for (const auto& instr : ds.instructions) {
    if (std::find(sc.instructions.begin(), sc.instructions.end(), instr) ==
        sc.instructions.end())
      throw Error("unknown instruction in mix: " + instr);
    if (pol.kind == PolicyKind::PathBalanced)
      for (const auto& path : pol.paths) check_script(sc, instr, path);
  }
  for (std::uint64_t e = 0; e < n_episodes; ++e) {
    Rng rng = derive_stream(seed, e);
    EpisodeRecord ep =
        rollout(sc, pol, ds.instructions[e % ds.instructions.size()], rng, e);
    for (auto& s : segment(ep)) ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::vector<PathStat> dataset_stats(const Dataset& ds) {
  struct EpAgg {
    std::vector<Edge> edges;
    Label outcome = Label::Fail;
    std::string instruction;
  };
  std::map<std::uint64_t, EpAgg> eps;
  for (const auto& s : ds.samples) {
    EpAgg& a = eps[s.episode_id];
    a.edges.push_back(s.e);  // samples sit in step order within an episode
    a.outcome = s.episode_outcome;
    a.instruction = s.n.instruction;
  }
  std::map<std::pair<std::string, std::string>, std::pair<std::uint64_t, std::uint64_t>>
      table;
  for (const auto& [id, a] : eps) {
    auto& cell = table[{a.instruction, serialize_plan(a.edges)}];
    cell.first += 1;
    cell.second += a.outcome == Label::Goal ? 1 : 0;
  }
  std::vector<PathStat> out;
  out.reserve(table.size());
  for (const auto& [key, cell] : table) {
    PathStat row;
    row.instruction = key.first;
    row.path = key.second;
    row.trials = cell.first;
    row.successes = cell.second;
    row.p_hat = static_cast<double>(cell.second) / static_cast<double>(cell.first);
    out.push_back(std::move(row));
  }
  return out;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write dataset file " + path);
  json header;
  header["scenario"] = ds.scenario;
  header["variant"] = ds.variant;
  header["seed"] = ds.seed;
  header["episodes"] = ds.episodes;
  header["instructions"] = ds.instructions;
  header["samples"] = ds.samples.size();
  out << header.dump() << "\n";
  for (const auto& s : ds.samples) {
    out << serialize_node(s.n) << '\t' << serialize_context(s.z) << '\t'
        << serialize_edge(s.e) << '\t' << serialize_node(s.next) << '\t'
        << (s.r != 0.0 ? 1 : 0) << '\t' << (s.term ? 1 : 0) << '\t'
        << s.episode_id << '\t' << label_name(s.episode_outcome) << "\n";
  }
  if (!out) throw Error("short write on dataset file " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read dataset file " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("dataset file is empty: " + path);

  Dataset ds;
  try {
    json header = json::parse(line);
    ds.scenario = header.at("scenario").get<std::string>();
    ds.variant = header.at("variant").get<std::string>();
    ds.seed = header.at("seed").get<std::uint64_t>();
    ds.episodes = header.at("episodes").get<std::uint64_t>();
    ds.instructions = header.at("instructions").get<std::vector<std::string>>();
  } catch (const json::exception& ex) {
    throw Error(std::string("bad dataset header: ") + ex.what());
  }

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::size_t pos = 0;
    while (true) {
      auto tab = line.find('\t', pos);
      if (tab == std::string::npos) {
        cols.push_back(line.substr(pos));
        break;
      }
      cols.push_back(line.substr(pos, tab - pos));
      pos = tab + 1;
    }
    if (cols.size() != 8) throw Error("bad dataset row: " + line);
    Sys2Sample s;
    s.n = parse_node(cols[0]);
    s.z = parse_context(cols[1]);
    s.e = parse_edge(cols[2]);
    s.next = parse_node(cols[3]);
    s.r = cols[4] == "1" ? 1.0 : 0.0;
    s.term = cols[5] == "1";
    s.episode_id = std::stoull(cols[6]);
    s.episode_outcome = parse_label(cols[7]);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace reachplan
