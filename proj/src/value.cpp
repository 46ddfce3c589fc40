#include "reachplan/value.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "json.hpp"

namespace reachplan {

namespace {

using nlohmann::json;

double clamp01(double x) { return std::clamp(x, 0.0, 1.0); }

std::string fmt_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

// model evaluation without the boundary check (training-time form)
double raw_value(const ValueModel& m, const Node& n, const Context& z) {
  if (m.kind == ValueKind::Tabular) {
    auto it = m.table.find(node_edge_key(n, z));
    return it == m.table.end() ? m.unknown : it->second;
  }
  std::vector<double> phi = featurize(m.feat, n, z);
  double v = 0.0;
  for (std::size_t i = 0; i < phi.size(); ++i) v += m.weights[i] * phi[i];
  return clamp01(v);
}

void check_config(const TrainConfig& cfg) {
  if (!(cfg.gamma > 0.0 && cfg.gamma <= 1.0)) throw Error("gamma must be in (0,1]");
  if (!(cfg.tau_e > 0.0 && cfg.tau_e < 1.0)) throw Error("tau_e must be in (0,1)");
  if (!(cfg.rho_ema > 0.0 && cfg.rho_ema < 1.0)) throw Error("rho_ema must be in (0,1)");
  if (cfg.epochs < 1) throw Error("need at least one epoch");
  if (cfg.kind == ValueKind::Linear && !(cfg.lr > 0.0))
    throw Error("linear training needs lr > 0");
}

// in-place Fisher-Yates on our own stream; std::shuffle is not pinned down
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.eng() % i]);
}

}  // namespace

double expectile_weight(double u, double tau_e) {
  return std::abs(tau_e - (u < 0.0 ? 1.0 : 0.0));
}

double expectile_loss(double u, double tau_e) {
  return expectile_weight(u, tau_e) * u * u;
}

double expectile_fit(const std::vector<std::pair<double, double>>& weighted_targets,
                     double tau_e) {
  if (weighted_targets.empty()) throw Error("expectile of an empty target set");
  std::vector<std::pair<double, double>> yw;  // (y, w), sorted by y
  double wtot = 0.0;
  for (const auto& [w, y] : weighted_targets) {
    if (w < 0.0) throw Error("negative weight in expectile fit");
    if (w == 0.0) continue;
    yw.emplace_back(y, w);
    wtot += w;
  }
  if (wtot <= 0.0) throw Error("expectile fit needs positive total weight");
  std::sort(yw.begin(), yw.end());

  // Scan split points: entries before the split count as y < e (weight 1-tau),
  // the rest as y >= e (weight tau). Exactly one split is self-consistent.
  std::size_t m = yw.size();
  std::vector<double> psw(m + 1, 0.0), psy(m + 1, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    psw[i + 1] = psw[i] + yw[i].second;
    psy[i + 1] = psy[i] + yw[i].second * yw[i].first;
  }
  double best = yw[0].first;
  double best_gap = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j <= m; ++j) {
    double lo_w = (1.0 - tau_e) * psw[j], lo_s = (1.0 - tau_e) * psy[j];
    double hi_w = tau_e * (psw[m] - psw[j]), hi_s = tau_e * (psy[m] - psy[j]);
    double e = (lo_s + hi_s) / (lo_w + hi_w);
    bool ok_lo = j == 0 || yw[j - 1].first < e;
    bool ok_hi = j == m || e <= yw[j].first;
    if (ok_lo && ok_hi) return e;
    // track the least-violating split as a numerical fallback
    double gap = 0.0;
    if (!ok_lo) gap = std::max(gap, yw[j - 1].first - e);
    if (!ok_hi) gap = std::max(gap, e - yw[j].first);
    if (gap < best_gap) {
      best_gap = gap;
      best = e;
    }
  }
  return best;
}

std::vector<double> featurize(const FeatureSpec& fs, const Node& n, const Context& z) {
  std::vector<double> phi(fs.dim(), 0.0);
  for (const std::string& f : n.facts) {
    auto it = fs.fact_idx.find(f);
    if (it != fs.fact_idx.end()) phi[it->second] = 1.0;
  }
  if (const Edge* last = z.last_edge()) {
    auto it = fs.edge_idx.find(serialize_edge(*last));
    if (it != fs.edge_idx.end()) phi[fs.fact_idx.size() + it->second] = 1.0;
  }
  phi[fs.dim() - 2] = double(z.depth());
  phi[fs.dim() - 1] = 1.0;  // bias
  return phi;
}

double value_of(const ValueModel& m, const Scenario& sc, const Node& n,
                const Context& z) {
  switch (classify(sc, n)) {
    case Label::Goal: return 1.0;
    case Label::Fail: return 0.0;
    case Label::Interior: break;
  }
  return clamp01(raw_value(m, n, z));
}

double td_target(const Sys2Sample& s, const ValueModel& target, double gamma) {
  if (s.term) return s.r;
  return gamma * raw_value(target, s.next, context_update(s.z, s.e, s.n));
}

TrainResult train_value(const Dataset& ds, const TrainConfig& cfg) {
  if (ds.samples.empty()) throw Error("train_value needs a non-empty dataset");
  check_config(cfg);

  TrainResult out;
  ValueModel& m = out.model;
  m.kind = cfg.kind;
  m.cfg = cfg;
  const std::size_t n = ds.samples.size();

  if (cfg.kind == ValueKind::Tabular) {
    // precompute per-sample state key and, for interior samples, the
    // bootstrap key; targets then cost one map lookup per sample per epoch
    std::vector<std::string> key(n), next_key(n);
    std::map<std::string, std::vector<std::size_t>> by_key;
    for (std::size_t i = 0; i < n; ++i) {
      const Sys2Sample& s = ds.samples[i];
      key[i] = node_edge_key(s.n, s.z);
      if (!s.term)
        next_key[i] = node_edge_key(s.next, context_update(s.z, s.e, s.n));
      by_key[key[i]].push_back(i);
      m.visits[key[i]] += 1;
    }
    for (const auto& [k, rows] : by_key) m.table[k] = 0.5;
    std::map<std::string, double> target = m.table;  // theta' starts at theta

    std::vector<double> y(n);
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
      double loss = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Sys2Sample& s = ds.samples[i];
        if (s.term) {
          y[i] = s.r;
        } else {
          auto it = target.find(next_key[i]);
          y[i] = cfg.gamma * (it == target.end() ? m.unknown : it->second);
        }
        loss += expectile_loss(y[i] - m.table[key[i]], cfg.tau_e);
      }
      loss /= double(n);
      if (!std::isfinite(loss))
        throw Error("training diverged (non-finite loss at epoch " +
                    std::to_string(epoch) + ")");
      out.losses.push_back(loss);
      for (const auto& [k, rows] : by_key) {
        std::vector<std::pair<double, double>> wy;
        wy.reserve(rows.size());
        for (std::size_t i : rows) wy.emplace_back(1.0, y[i]);
        m.table[k] = expectile_fit(wy, cfg.tau_e);
      }
      for (auto& [k, v] : target) v = cfg.rho_ema * v + (1.0 - cfg.rho_ema) * m.table[k];
    }
    return out;
  }

  // linear: build the feature space from the corpus
  {
    std::set<std::string> facts, edges;
    for (const Sys2Sample& s : ds.samples) {
      for (const std::string& f : s.n.facts) facts.insert(f);
      for (const std::string& f : s.next.facts) facts.insert(f);
      edges.insert(serialize_edge(s.e));
    }
    std::size_t i = 0;
    for (const std::string& f : facts) m.feat.fact_idx[f] = i++;
    i = 0;
    for (const std::string& e : edges) m.feat.edge_idx[e] = i++;
  }
  m.weights.assign(m.feat.dim(), 0.0);

  std::vector<std::vector<double>> phi(n), phi_next(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Sys2Sample& s = ds.samples[i];
    phi[i] = featurize(m.feat, s.n, s.z);
    if (!s.term)
      phi_next[i] = featurize(m.feat, s.next, context_update(s.z, s.e, s.n));
  }

  std::vector<double> target = m.weights;
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(splitmix64(cfg.seed) + std::uint64_t(epoch) * 0x9e3779b97f4a7c15ULL);
    shuffle_indices(order, rng);
    double loss = 0.0;
    for (std::size_t i : order) {
      const Sys2Sample& s = ds.samples[i];
      double y;
      if (s.term) {
        y = s.r;
      } else {
        double v = 0.0;
        for (std::size_t d = 0; d < target.size(); ++d) v += target[d] * phi_next[i][d];
        y = cfg.gamma * clamp01(v);
      }
      double pred = 0.0;
      for (std::size_t d = 0; d < m.weights.size(); ++d) pred += m.weights[d] * phi[i][d];
      double u = y - pred;
      loss += expectile_loss(u, cfg.tau_e);
      double step = 2.0 * cfg.lr * expectile_weight(u, cfg.tau_e) * u;
      for (std::size_t d = 0; d < m.weights.size(); ++d)
        m.weights[d] += step * phi[i][d];
    }
    loss /= double(n);
    if (!std::isfinite(loss))
      throw Error("training diverged (non-finite loss at epoch " +
                  std::to_string(epoch) + ")");
    out.losses.push_back(loss);
    for (std::size_t d = 0; d < target.size(); ++d)
      target[d] = cfg.rho_ema * target[d] + (1.0 - cfg.rho_ema) * m.weights[d];
  }
  return out;
}

ExpectileVIResult synchronous_expectile_vi(const Scenario& sc,
                                           const BehaviorPolicy& mu_b, double tau_e,
                                           double gamma, double tol, int max_iters) {
  if (!(tau_e > 0.0 && tau_e < 1.0)) throw Error("tau_e must be in (0,1)");
  if (!(gamma > 0.0 && gamma <= 1.0)) throw Error("gamma must be in (0,1]");

  struct Arm {
    double w = 0.0;
    Label label = Label::Interior;
    std::string next_key;
  };
  struct State {
    bool interior_live = false;  // regressed; everything else is pinned
    double pinned = 0.0;
    std::vector<Arm> arms;
  };
  std::map<std::string, State> states;
  std::vector<std::string> order;

  // full-context reachability from every instruction's root
  std::vector<NodeEdgeState> frontier;
  auto discover = [&](const Node& nn, const Context& zz) -> std::string {
    std::string k = node_edge_key(nn, zz);
    if (states.count(k)) return k;
    State st;
    Label lab = classify(sc, nn);
    if (lab == Label::Goal) {
      st.pinned = 1.0;
    } else if (lab == Label::Fail) {
      st.pinned = 0.0;
    } else if (zz.depth() >= static_cast<std::size_t>(sc.horizon)) {
      st.pinned = 0.0;  // step cap: counted as a failure, like the executor
    } else {
      st.interior_live = true;
      frontier.push_back({nn, zz});
    }
    states.emplace(k, std::move(st));
    order.push_back(k);
    return k;
  };
  for (const std::string& instr : sc.instructions)
    discover(initial_node(sc, instr), Context{});

  for (std::size_t qi = 0; qi < frontier.size(); ++qi) {
    Node nn = frontier[qi].node;
    Context zz = frontier[qi].ctx;
    std::string k = node_edge_key(nn, zz);
    auto adm = admissible_edges(sc, nn, zz);
    if (adm.empty()) {
      states[k].interior_live = false;  // dead end gives up: value 0
      states[k].pinned = 0.0;
      continue;
    }
    std::vector<double> pick = policy_edge_probs(mu_b, adm);
    Context znext = context_update(zz, adm[0], nn);  // re-stamped per edge below
    for (std::size_t ei = 0; ei < adm.size(); ++ei) {
      znext = context_update(zz, adm[ei], nn);
      for (const Outcome& o : select_outcomes(sc, nn, zz, adm[ei])) {
        if (o.p == 0.0) continue;
        Node next = apply_outcome(sc, nn, o);
        Arm a;
        a.w = pick[ei] * o.p;
        a.label = classify(sc, next);
        a.next_key = discover(next, znext);
        states[k].arms.push_back(std::move(a));
      }
    }
  }

  std::map<std::string, double> v;
  for (const auto& [k, st] : states) v[k] = st.interior_live ? 0.5 : st.pinned;

  ExpectileVIResult out;
  for (out.iters = 1; out.iters <= max_iters; ++out.iters) {
    double delta = 0.0;
    std::map<std::string, double> nv = v;
    for (const auto& [k, st] : states) {
      if (!st.interior_live) continue;
      std::vector<std::pair<double, double>> wy;
      wy.reserve(st.arms.size());
      for (const Arm& a : st.arms) {
        double y = a.label == Label::Goal   ? 1.0
                   : a.label == Label::Fail ? 0.0
                                            : gamma * v.at(a.next_key);
        wy.emplace_back(a.w, y);
      }
      nv[k] = expectile_fit(wy, tau_e);
      delta = std::max(delta, std::abs(nv[k] - v[k]));
    }
    v.swap(nv);
    out.residual = delta;
    if (delta < tol) {
      out.values = std::move(v);
      return out;
    }
  }
  throw Error("expectile VI did not converge: residual " +
              std::to_string(out.residual) + " after " + std::to_string(max_iters) +
              " sweeps");
}

double value_gradient_check(double tau_e, int points, std::uint64_t seed) {
  const std::size_t dim = 8;
  const double h = 1e-6;
  Rng rng(splitmix64(seed) ^ 0x5bf03635f0a5b9d1ULL);
  double worst = 0.0;
  for (int p = 0; p < points; ++p) {
    std::vector<double> w(dim), phi(dim);
    for (std::size_t d = 0; d < dim; ++d) {
      w[d] = 2.0 * rng.uniform() - 1.0;
      phi[d] = 2.0 * rng.uniform() - 1.0;
    }
    double pred = 0.0;
    for (std::size_t d = 0; d < dim; ++d) pred += w[d] * phi[d];
    // keep the probe away from the loss kink at u = 0
    double y = pred + (rng.uniform() < 0.5 ? -1.0 : 1.0) * (0.05 + rng.uniform());
    auto loss_at = [&](const std::vector<double>& ww) {
      double v = 0.0;
      for (std::size_t d = 0; d < dim; ++d) v += ww[d] * phi[d];
      return expectile_loss(y - v, tau_e);
    };
    double u = y - pred;
    for (std::size_t d = 0; d < dim; ++d) {
      double analytic = -2.0 * expectile_weight(u, tau_e) * u * phi[d];
      std::vector<double> wp = w, wm = w;
      wp[d] += h;
      wm[d] -= h;
      double numeric = (loss_at(wp) - loss_at(wm)) / (2.0 * h);
      worst = std::max(worst, std::abs(analytic - numeric) /
                                  std::max(1.0, std::abs(analytic)));
    }
  }
  return worst;
}

void save_value(const ValueModel& m, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write value model to " + path);
  json header = {{"kind", m.kind == ValueKind::Tabular ? "tabular" : "linear"},
                 {"gamma", m.cfg.gamma},
                 {"tau_e", m.cfg.tau_e},
                 {"lr", m.cfg.lr},
                 {"rho_ema", m.cfg.rho_ema},
                 {"epochs", m.cfg.epochs},
                 {"seed", m.cfg.seed},
                 {"unknown", m.unknown}};
  out << header.dump() << "\n";
  if (m.kind == ValueKind::Tabular) {
    for (const auto& [k, val] : m.table) {
      auto vit = m.visits.find(k);
      out << "T\t" << k << "\t" << fmt_double(val) << "\t"
          << (vit == m.visits.end() ? 0 : vit->second) << "\n";
    }
  } else {
    for (const auto& [f, i] : m.feat.fact_idx) out << "F\t" << f << "\t" << i << "\n";
    for (const auto& [e, i] : m.feat.edge_idx) out << "L\t" << e << "\t" << i << "\n";
    for (std::size_t i = 0; i < m.weights.size(); ++i)
      out << "W\t" << i << "\t" << fmt_double(m.weights[i]) << "\n";
  }
}

ValueModel load_value(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read value model from " + path);
  std::string line;
  if (!std::getline(in, line)) throw Error("empty value model file " + path);
  ValueModel m;
  try {
    json header = json::parse(line);
    std::string kind = header.at("kind").get<std::string>();
    if (kind == "tabular") m.kind = ValueKind::Tabular;
    else if (kind == "linear") m.kind = ValueKind::Linear;
    else throw Error("unknown value model kind '" + kind + "'");
    m.cfg.kind = m.kind;
    m.cfg.gamma = header.at("gamma").get<double>();
    m.cfg.tau_e = header.at("tau_e").get<double>();
    m.cfg.lr = header.at("lr").get<double>();
    m.cfg.rho_ema = header.at("rho_ema").get<double>();
    m.cfg.epochs = header.at("epochs").get<int>();
    m.cfg.seed = header.at("seed").get<std::uint64_t>();
    m.unknown = header.at("unknown").get<double>();
  } catch (const json::exception& ex) {
    throw Error(std::string("bad value model header: ") + ex.what());
  }
  std::vector<std::pair<std::size_t, double>> weights;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ss(line);
    std::string col;
    while (std::getline(ss, col, '\t')) cols.push_back(col);
    if (cols[0] == "T" && cols.size() == 4 && m.kind == ValueKind::Tabular) {
      m.table[cols[1]] = std::stod(cols[2]);
      m.visits[cols[1]] = std::stoull(cols[3]);
    } else if (cols[0] == "F" && cols.size() == 3 && m.kind == ValueKind::Linear) {
      m.feat.fact_idx[cols[1]] = std::stoull(cols[2]);
    } else if (cols[0] == "L" && cols.size() == 3 && m.kind == ValueKind::Linear) {
      m.feat.edge_idx[cols[1]] = std::stoull(cols[2]);
    } else if (cols[0] == "W" && cols.size() == 3 && m.kind == ValueKind::Linear) {
      weights.emplace_back(std::stoull(cols[1]), std::stod(cols[2]));
    } else {
      throw Error("bad value model row: '" + line + "'");
    }
  }
  if (m.kind == ValueKind::Linear) {
    m.weights.assign(m.feat.dim(), 0.0);
    for (const auto& [i, x] : weights) {
      if (i >= m.weights.size()) throw Error("weight index out of range");
      m.weights[i] = x;
    }
  }
  return m;
}

}  // namespace reachplan
