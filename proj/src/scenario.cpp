#include "reachplan/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace reachplan {

using nlohmann::json;

namespace {

constexpr double kProbTol = 1e-12;

struct FactParts {
  std::string pred;
  std::vector<std::string> args;
};

FactParts split_fact(const std::string& fact) {
  FactParts out;
  auto open = fact.find('(');
  if (open == std::string::npos) {
    out.pred = fact;
    return out;
  }
  if (fact.back() != ')') throw Error("malformed fact: " + fact);
  out.pred = fact.substr(0, open);
  std::string args = fact.substr(open + 1, fact.size() - open - 2);
  std::size_t pos = 0;
  while (pos < args.size()) {
    auto comma = args.find(',', pos);
    if (comma == std::string::npos) comma = args.size();
    out.args.push_back(args.substr(pos, comma - pos));
    pos = comma + 1;
  }
  return out;
}

std::string join_fact(const FactParts& f) {
  if (f.args.empty()) return f.pred;
  std::string out = f.pred + "(";
  for (std::size_t i = 0; i < f.args.size(); ++i) {
    if (i) out += ',';
    out += f.args[i];
  }
  out += ')';
  return out;
}

std::string rename_fact(const std::string& fact, const std::map<std::string, std::string>& ren) {
  FactParts f = split_fact(fact);
  for (auto& a : f.args) {
    auto it = ren.find(a);
    if (it != ren.end()) a = it->second;
  }
  return join_fact(f);
}

Edge rename_edge(const Edge& e, const std::map<std::string, std::string>& ren) {
  Edge out = e;
  for (auto& a : out.args) {
    auto it = ren.find(a);
    if (it != ren.end()) a = it->second;
  }
  return out;
}

bool literal_holds(const std::string& lit, const Node& n) {
  if (lit.rfind("gripper:", 0) == 0) return n.gripper == lit.substr(8);
  if (!lit.empty() && lit[0] == '!') return !n.has_fact(lit.substr(1));
  return n.has_fact(lit);
}

Condition parse_condition(const json& j, const std::string& where) {
  Condition c;
  if (j.is_array()) {
    for (const auto& lit : j) c.all.push_back(lit.get<std::string>());
  } else if (j.is_object()) {
    if (j.contains("all"))
      for (const auto& lit : j["all"]) c.all.push_back(lit.get<std::string>());
    if (j.contains("any"))
      for (const auto& lit : j["any"]) c.any.push_back(lit.get<std::string>());
  } else {
    throw Error("condition must be an array or {all, any} object at " + where);
  }
  return c;
}

void check_literal_text(const std::string& lit) {
  std::string body = lit;
  if (!body.empty() && body[0] == '!') body = body.substr(1);
  if (body.rfind("gripper:", 0) == 0) return;  // gripper text checked structurally elsewhere
  validate_fact_text(body);
}

Outcome parse_outcome(const json& j, const std::string& where) {
  Outcome o;
  if (!j.contains("p")) throw Error("outcome missing probability at " + where);
  o.p = j["p"].get<double>();
  if (j.contains("add"))
    for (const auto& f : j["add"]) o.add.push_back(f.get<std::string>());
  if (j.contains("remove"))
    for (const auto& f : j["remove"]) o.remove.push_back(f.get<std::string>());
  if (j.contains("gripper")) o.gripper = j["gripper"].get<std::string>();
  if (j.contains("trace")) {
    const auto& t = j["trace"];
    o.trace.mean = t.value("mean", 0.0);
    o.trace.var = t.value("var", 0.0025);
    o.trace.len = t.value("len", 6);
    o.trace_given = true;
  }
  std::sort(o.add.begin(), o.add.end());
  std::sort(o.remove.begin(), o.remove.end());
  return o;
}

void check_outcome_probs(const std::vector<Outcome>& outs, const std::string& where) {
  if (outs.empty()) throw Error("empty outcome list at " + where);
  double total = 0.0;
  for (const auto& o : outs) {
    if (o.p < 0.0) throw Error("negative outcome probability at " + where);
    total += o.p;
  }
  if (std::fabs(total - 1.0) > kProbTol)
    throw Error("outcome probabilities must sum to 1 at " + where + " (got " +
                std::to_string(total) + ")");
}

const EdgeDef* find_edge_def(const Scenario& sc, const Edge& e) {
  for (const auto& ed : sc.edges)
    if (ed.edge == e) return &ed;
  return nullptr;
}

bool context_matches(const ContextPattern& pat, const Context& z) {
  if (pat.last) {
    const Edge* le = z.last_edge();
    if (!le || !(*le == *pat.last)) return false;
  }
  std::size_t i = 0;
  for (const auto& step : z.steps) {
    if (i < pat.contains.size() && step.first == pat.contains[i]) ++i;
  }
  return i == pat.contains.size();
}

// Successor support used by reachability analysis: every branch outcome plus
// every override outcome that applies cleanly at n.
std::vector<const Outcome*> support_outcomes(const Scenario& sc, const EdgeDef& ed,
                                             const Node& n) {
  std::vector<const Outcome*> out;
  for (const auto& br : ed.branches) {
    bool holds = true;
    for (const auto& lit : br.when)
      if (!literal_holds(lit, n)) { holds = false; break; }
    if (!holds) continue;
    for (const auto& o : br.outcomes) out.push_back(&o);
    break;  // first matching branch is the one step_option uses
  }
  for (const auto& ov : ed.overrides) {
    for (const auto& o : ov.outcomes) {
      try {
        apply_outcome(sc, n, o);
        out.push_back(&o);
      } catch (const Error&) {
        // this override cannot fire at n; its pattern implies a different path shape
      }
    }
  }
  return out;
}

void validate_reachable(Scenario& sc) {
  for (const auto& instr : sc.instructions) {
    Node root = initial_node(sc, instr);
    if (classify(sc, root) != Label::Interior)
      throw Error("initial node for \"" + instr + "\" is already terminal");

    // Ambiguous labels are only a bug where an episode could actually end on
    // the node, i.e. when it is entered from the live (interior) region.
    auto check_overlap = [&sc](const Node& n) {
      bool is_fail = !sc.fail.trivial() && condition_holds(sc.fail, n);
      auto git = sc.goal.find(n.instruction);
      if (git == sc.goal.end()) git = sc.goal.find("*");
      bool is_goal = git != sc.goal.end() && condition_holds(git->second, n);
      if (is_goal && is_fail)
        throw Error("goal and fail predicates overlap on reachable node " + serialize_node(n));
    };
    check_overlap(root);

    std::map<std::string, Node> seen;
    std::map<std::string, std::vector<std::string>> adj;
    std::deque<std::pair<Node, int>> queue;
    queue.emplace_back(root, 0);
    seen[serialize_node(root)] = root;

    while (!queue.empty()) {
      auto [n, depth] = queue.front();
      queue.pop_front();
      std::string nk = serialize_node(n);

      Label lab = classify(sc, n);
      if (lab == Label::Goal) continue;  // absorbing; post-goal actions never run
      if (depth >= sc.horizon) continue;

      for (const auto& ed : sc.edges) {
        if (!condition_holds(ed.initiation, n)) continue;
        for (const Outcome* o : support_outcomes(sc, ed, n)) {
          Node nxt;
          if (lab == Label::Fail) {
            // lint only: these transitions can never execute (fail absorbs), but a
            // clean delta escaping the fail set means the predicates are broken
            try {
              nxt = apply_outcome(sc, n, *o);
            } catch (const Error&) {
              continue;
            }
            if (classify(sc, nxt) != Label::Fail)
              throw Error("fail set is not sticky: edge " + serialize_edge(ed.edge) +
                          " would leave failed node " + nk);
          } else {
            nxt = apply_outcome(sc, n, *o);  // strict on the live region
            check_overlap(nxt);
            adj[nk].push_back(serialize_node(nxt));
          }
          std::string xk = serialize_node(nxt);
          if (!seen.count(xk)) {
            seen[xk] = nxt;
            queue.emplace_back(nxt, depth + 1);
          }
        }
      }
    }

    // cycle check on the reachable node graph (0 white, 1 on stack, 2 done)
    std::map<std::string, int> color;
    std::vector<std::pair<std::string, std::size_t>> stack;
    for (const auto& [k, _] : seen) {
      if (color[k]) continue;
      stack.push_back({k, 0});
      color[k] = 1;
      while (!stack.empty()) {
        auto& [cur, idx] = stack.back();
        auto& next = adj[cur];
        if (idx < next.size()) {
          const std::string& nk2 = next[idx++];
          if (color[nk2] == 1) {
            sc.acyclic = false;
            stack.clear();
            break;
          }
          if (color[nk2] == 0) {
            color[nk2] = 1;
            stack.push_back({nk2, 0});
          }
        } else {
          color[cur] = 2;
          stack.pop_back();
        }
      }
    }
  }
}

void validate(Scenario& sc) {
  if (sc.name.empty()) throw Error("scenario needs a name");
  if (sc.horizon < 1) throw Error("horizon must be positive");
  if (sc.instructions.empty()) throw Error("scenario needs at least one instruction");
  for (const auto& instr : sc.instructions) validate_instruction_text(instr);
  for (const auto& obj : sc.objects) validate_fact_text(obj);

  for (const auto& [key, init] : sc.initial) {
    if (key != "*" &&
        std::find(sc.instructions.begin(), sc.instructions.end(), key) == sc.instructions.end())
      throw Error("initial spec for unknown instruction: " + key);
    for (const auto& f : init.facts) validate_fact_text(f);
  }
  for (const auto& instr : sc.instructions) {
    if (!sc.initial.count(instr) && !sc.initial.count("*"))
      throw Error("no initial spec for instruction: " + instr);
    if (!sc.goal.count(instr) && !sc.goal.count("*"))
      throw Error("no goal predicate for instruction: " + instr);
  }

  std::set<std::string> edge_names;
  for (const auto& ed : sc.edges) {
    std::string ename = serialize_edge(ed.edge);
    if (!edge_names.insert(ename).second) throw Error("duplicate edge: " + ename);
    for (const auto& lit : ed.initiation.all) check_literal_text(lit);
    for (const auto& lit : ed.initiation.any) check_literal_text(lit);
    if (ed.branches.empty()) throw Error("edge has no outcome branches: " + ename);
    for (std::size_t b = 0; b < ed.branches.size(); ++b) {
      const auto& br = ed.branches[b];
      bool is_base = br.when.empty();
      if (is_base && b + 1 != ed.branches.size())
        throw Error("base branch must come last for edge " + ename);
      if (!is_base && b + 1 == ed.branches.size())
        throw Error("last branch of edge " + ename + " must be the unconditioned base");
      for (const auto& lit : br.when) check_literal_text(lit);
      check_outcome_probs(br.outcomes, ename + " branch " + std::to_string(b));
    }
    for (std::size_t v = 0; v < ed.overrides.size(); ++v)
      check_outcome_probs(ed.overrides[v].outcomes, ename + " override " + std::to_string(v));
    if (!ed.overrides.empty()) sc.uses_overrides = true;
  }

  std::set<std::string> vnames;
  for (const auto& var : sc.variants) {
    if (var.name.empty() || !vnames.insert(var.name).second)
      throw Error("variant names must be unique and non-empty");
    for (const auto& [from, to] : var.renames) {
      if (std::find(sc.objects.begin(), sc.objects.end(), from) == sc.objects.end())
        throw Error("variant " + var.name + " renames unknown object: " + from);
      validate_fact_text(to);
    }
    for (const auto& po : var.prob_overrides) {
      Edge e = parse_edge(po.edge);
      const EdgeDef* ed = find_edge_def(sc, e);
      if (!ed) throw Error("variant " + var.name + " overrides unknown edge: " + po.edge);
      if (po.branch < 0 || po.branch >= static_cast<int>(ed->branches.size()))
        throw Error("variant " + var.name + " overrides missing branch of " + po.edge);
      if (po.probs.size() != ed->branches[po.branch].outcomes.size())
        throw Error("variant " + var.name + " probability count mismatch on " + po.edge);
      double total = 0.0;
      for (double p : po.probs) total += p;
      if (std::fabs(total - 1.0) > kProbTol)
        throw Error("variant " + var.name + " probabilities must sum to 1 on " + po.edge);
    }
    if (var.prob_delta < 0.0) throw Error("variant prob_delta must be non-negative");
  }

  for (auto& cal : sc.calibration) {
    if (cal.instruction.empty()) cal.instruction = sc.instructions.front();
    if (std::find(sc.instructions.begin(), sc.instructions.end(), cal.instruction) ==
        sc.instructions.end())
      throw Error("calibration entry references unknown instruction: " + cal.instruction);
    for (const auto& e : cal.path)
      if (!find_edge_def(sc, e))
        throw Error("calibration path references unknown edge: " + serialize_edge(e));
    if (cal.lo > cal.hi) throw Error("calibration range inverted");
  }

  validate_reachable(sc);
}

Scenario from_json(const json& j) {
  Scenario sc;
  sc.name = j.value("name", "");
  sc.horizon = j.value("horizon", 12);
  if (j.contains("objects"))
    for (const auto& o : j["objects"]) sc.objects.push_back(o.get<std::string>());
  if (j.contains("instructions"))
    for (const auto& i : j["instructions"]) sc.instructions.push_back(i.get<std::string>());

  if (j.contains("initial")) {
    for (auto it = j["initial"].begin(); it != j["initial"].end(); ++it) {
      InitialSpec spec;
      for (const auto& f : it.value()["facts"]) spec.facts.push_back(f.get<std::string>());
      spec.gripper = it.value().value("gripper", "open");
      sc.initial[it.key()] = spec;
    }
  }
  if (j.contains("goal")) {
    for (auto it = j["goal"].begin(); it != j["goal"].end(); ++it)
      sc.goal[it.key()] = parse_condition(it.value(), "goal " + it.key());
  }
  if (j.contains("fail")) sc.fail = parse_condition(j["fail"], "fail");

  if (j.contains("edges")) {
    for (const auto& je : j["edges"]) {
      EdgeDef ed;
      ed.edge = parse_edge(je["edge"].get<std::string>());
      std::string ename = serialize_edge(ed.edge);
      if (je.contains("requires"))
        ed.initiation = parse_condition(je["requires"], "requires of " + ename);
      if (!je.contains("branches")) throw Error("edge missing branches: " + ename);
      for (const auto& jb : je["branches"]) {
        Branch br;
        if (jb.contains("when"))
          for (const auto& lit : jb["when"]) br.when.push_back(lit.get<std::string>());
        for (const auto& jo : jb["outcomes"]) br.outcomes.push_back(parse_outcome(jo, ename));
        ed.branches.push_back(std::move(br));
      }
      if (je.contains("overrides")) {
        for (const auto& jv : je["overrides"]) {
          HistoryOverride ov;
          const auto& w = jv.at("when_context");
          if (w.contains("contains"))
            for (const auto& e : w["contains"]) ov.when.contains.push_back(parse_edge(e.get<std::string>()));
          if (w.contains("last")) ov.when.last = parse_edge(w["last"].get<std::string>());
          for (const auto& jo : jv["outcomes"])
            ov.outcomes.push_back(parse_outcome(jo, ename + " override"));
          ed.overrides.push_back(std::move(ov));
        }
      }
      sc.edges.push_back(std::move(ed));
    }
  }

  if (j.contains("calibration")) {
    for (const auto& jc : j["calibration"]) {
      CalibrationEntry cal;
      cal.instruction = jc.value("instruction", "");
      for (const auto& e : jc["path"]) cal.path.push_back(parse_edge(e.get<std::string>()));
      if (jc.contains("target")) {
        cal.lo = cal.hi = jc["target"].get<double>();
      } else if (jc.contains("range")) {
        cal.lo = jc["range"][0].get<double>();
        cal.hi = jc["range"][1].get<double>();
      } else {
        throw Error("calibration entry needs a target or range");
      }
      cal.note = jc.value("note", "");
      sc.calibration.push_back(std::move(cal));
    }
  }

  if (j.contains("variants")) {
    for (const auto& jv : j["variants"]) {
      Variant var;
      var.name = jv.value("name", "");
      if (jv.contains("renames"))
        for (auto it = jv["renames"].begin(); it != jv["renames"].end(); ++it)
          var.renames[it.key()] = it.value().get<std::string>();
      if (jv.contains("prob_overrides")) {
        for (const auto& jp : jv["prob_overrides"]) {
          ProbOverride po;
          po.edge = jp["edge"].get<std::string>();
          po.branch = jp.value("branch", 0);
          for (const auto& p : jp["probs"]) po.probs.push_back(p.get<double>());
          var.prob_overrides.push_back(std::move(po));
        }
      }
      var.prob_delta = jv.value("prob_delta", 0.0);
      sc.variants.push_back(std::move(var));
    }
  }
  return sc;
}

}  // namespace

Scenario load_scenario(const std::string& config_text) {
  json j;
  try {
    j = json::parse(config_text);
  } catch (const json::parse_error& e) {
    throw Error(std::string("scenario config parse error: ") + e.what());
  }
  Scenario sc;
  try {
    sc = from_json(j);
  } catch (const json::exception& e) {
    throw Error(std::string("scenario config structure error: ") + e.what());
  }
  validate(sc);
  return sc;
}

Scenario load_scenario_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open scenario file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return load_scenario(ss.str());
}

Scenario load_builtin(const std::string& spec, const std::string& dir) {
  std::string name = spec, variant;
  auto colon = spec.find(':');
  if (colon != std::string::npos) {
    name = spec.substr(0, colon);
    variant = spec.substr(colon + 1);
  }
  std::string base = dir;
#ifdef REACHPLAN_SCENARIO_DIR
  if (base.empty()) base = REACHPLAN_SCENARIO_DIR;
#endif
  if (base.empty()) base = "scenarios";
  Scenario sc = load_scenario_file(base + "/" + name + ".json");
  if (!variant.empty()) sc = apply_variant(sc, variant);
  return sc;
}

Scenario apply_variant(const Scenario& sc, const std::string& variant_name) {
  const Variant* var = nullptr;
  for (const auto& v : sc.variants)
    if (v.name == variant_name) var = &v;
  if (!var) throw Error("scenario " + sc.name + " has no variant named " + variant_name);

  Scenario out = sc;
  out.variant = variant_name;

  if (var->prob_delta > 0.0) {
    for (auto& ed : out.edges) {
      for (auto& br : ed.branches) {
        if (br.outcomes.size() < 2) continue;
        double d = std::min(var->prob_delta, br.outcomes[0].p);
        double rest = 0.0;
        for (std::size_t i = 1; i < br.outcomes.size(); ++i) rest += br.outcomes[i].p;
        br.outcomes[0].p -= d;
        for (std::size_t i = 1; i < br.outcomes.size(); ++i)
          br.outcomes[i].p += rest > 0.0 ? d * br.outcomes[i].p / rest
                                         : d / static_cast<double>(br.outcomes.size() - 1);
      }
    }
  }
  for (const auto& po : var->prob_overrides) {
    Edge e = parse_edge(po.edge);
    for (auto& ed : out.edges) {
      if (!(ed.edge == e)) continue;
      auto& outs = ed.branches[po.branch].outcomes;
      for (std::size_t i = 0; i < outs.size(); ++i) outs[i].p = po.probs[i];
    }
  }

  if (!var->renames.empty()) {
    const auto& ren = var->renames;
    auto fix_facts = [&](std::vector<std::string>& facts) {
      for (auto& f : facts) f = rename_fact(f, ren);
    };
    auto fix_literal = [&](std::string& lit) {
      if (lit.rfind("gripper:holding(", 0) == 0) {
        lit = "gripper:holding(" + rename_fact(lit.substr(16, lit.size() - 17), ren) + ")";
      } else if (lit.rfind("gripper:", 0) != 0) {
        lit = (lit[0] == '!') ? "!" + rename_fact(lit.substr(1), ren) : rename_fact(lit, ren);
      }
    };
    auto fix_cond = [&](Condition& c) {
      for (auto& lit : c.all) fix_literal(lit);
      for (auto& lit : c.any) fix_literal(lit);
    };
    for (auto& obj : out.objects) {
      auto it = ren.find(obj);
      if (it != ren.end()) obj = it->second;
    }
    for (auto& [key, init] : out.initial) fix_facts(init.facts);
    for (auto& [key, cond] : out.goal) fix_cond(cond);
    fix_cond(out.fail);
    for (auto& ed : out.edges) {
      ed.edge = rename_edge(ed.edge, ren);
      fix_cond(ed.initiation);
      for (auto& br : ed.branches) {
        for (auto& lit : br.when) fix_literal(lit);
        for (auto& o : br.outcomes) {
          fix_facts(o.add);
          fix_facts(o.remove);
          if (o.gripper.rfind("holding(", 0) == 0)
            o.gripper = "holding(" + rename_fact(o.gripper.substr(8, o.gripper.size() - 9), ren) + ")";
        }
      }
      for (auto& ov : ed.overrides) {
        for (auto& e : ov.when.contains) e = rename_edge(e, ren);
        if (ov.when.last) ov.when.last = rename_edge(*ov.when.last, ren);
        for (auto& o : ov.outcomes) {
          fix_facts(o.add);
          fix_facts(o.remove);
          if (o.gripper.rfind("holding(", 0) == 0)
            o.gripper = "holding(" + rename_fact(o.gripper.substr(8, o.gripper.size() - 9), ren) + ")";
        }
      }
    }
    for (auto& cal : out.calibration)
      for (auto& e : cal.path) e = rename_edge(e, ren);
  }

  out.variants.clear();
  out.uses_overrides = false;
  out.acyclic = true;
  validate(out);
  return out;
}

bool condition_holds(const Condition& c, const Node& n) {
  for (const auto& lit : c.all)
    if (!literal_holds(lit, n)) return false;
  if (!c.any.empty()) {
    bool one = false;
    for (const auto& lit : c.any)
      if (literal_holds(lit, n)) { one = true; break; }
    if (!one) return false;
  }
  return true;
}

Label classify(const Scenario& sc, const Node& n) {
  if (!sc.fail.trivial() && condition_holds(sc.fail, n)) return Label::Fail;
  auto it = sc.goal.find(n.instruction);
  if (it == sc.goal.end()) it = sc.goal.find("*");
  if (it != sc.goal.end() && condition_holds(it->second, n)) return Label::Goal;
  return Label::Interior;
}

Node initial_node(const Scenario& sc, const std::string& instruction) {
  if (std::find(sc.instructions.begin(), sc.instructions.end(), instruction) ==
      sc.instructions.end())
    throw Error("unknown instruction for scenario " + sc.name + ": " + instruction);
  auto it = sc.initial.find(instruction);
  if (it == sc.initial.end()) it = sc.initial.find("*");
  Node n;
  n.facts = it->second.facts;
  n.gripper = it->second.gripper;
  n.instruction = instruction;
  n.canonicalize();
  return n;
}

std::vector<Edge> admissible_edges(const Scenario& sc, const Node& n, const Context&) {
  std::vector<Edge> out;
  if (classify(sc, n) != Label::Interior) return out;  // absorption
  for (const auto& ed : sc.edges)
    if (condition_holds(ed.initiation, n)) out.push_back(ed.edge);
  std::sort(out.begin(), out.end());
  return out;
}

const std::vector<Outcome>& select_outcomes(const Scenario& sc, const Node& n, const Context& z,
                                            const Edge& e) {
  const EdgeDef* ed = find_edge_def(sc, e);
  if (!ed) throw Error("unknown edge: " + serialize_edge(e));
  for (const auto& ov : ed->overrides)
    if (context_matches(ov.when, z)) return ov.outcomes;
  for (const auto& br : ed->branches) {
    bool holds = true;
    for (const auto& lit : br.when)
      if (!literal_holds(lit, n)) { holds = false; break; }
    if (holds) return br.outcomes;
  }
  throw Error("no outcome branch matched for edge " + serialize_edge(e));  // base always matches
}

Node apply_outcome(const Scenario& sc, const Node& n, const Outcome& o) {
  (void)sc;
  Node out = n;
  for (const auto& f : o.remove) {
    auto it = std::find(out.facts.begin(), out.facts.end(), f);
    if (it == out.facts.end())
      throw Error("outcome removes absent fact " + f + " at node " + serialize_node(n));
    out.facts.erase(it);
  }
  for (const auto& f : o.add) {
    if (std::find(out.facts.begin(), out.facts.end(), f) != out.facts.end())
      throw Error("outcome adds duplicate fact " + f + " at node " + serialize_node(n));
    out.facts.push_back(f);
  }
  if (!o.gripper.empty()) out.gripper = o.gripper;
  out.canonicalize();
  return out;
}

StepResult step_option(const Scenario& sc, const Node& n, const Context& z, const Edge& e,
                       Rng& rng) {
  if (classify(sc, n) != Label::Interior)
    throw Error("step_option on a terminal node: " + serialize_node(n));
  const EdgeDef* ed = find_edge_def(sc, e);
  if (!ed || !condition_holds(ed->initiation, n))
    throw Error("edge not admissible: " + serialize_edge(e) + " at " + serialize_node(n));

  const auto& outs = select_outcomes(sc, n, z, e);
  std::vector<double> w;
  w.reserve(outs.size());
  for (const auto& o : outs) w.push_back(o.p);
  std::size_t idx = rng.pick_weighted(w);

  StepResult res;
  res.outcome_index = static_cast<int>(idx);
  res.next = apply_outcome(sc, n, outs[idx]);
  res.label = classify(sc, res.next);

  TraceSpec t = outs[idx].trace;
  if (!outs[idx].trace_given && res.label == Label::Fail) t.var = 1.0;  // failure-bound default
  res.trace.samples.reserve(t.len);
  for (int i = 0; i < t.len; ++i) res.trace.samples.push_back(rng.normal(t.mean, t.var));
  return res;
}

namespace {

double path_prob_rec(const Scenario& sc, const Node& n, const Context& z,
                     const std::vector<Edge>& path, std::size_t i,
                     std::map<std::string, double>& memo) {
  Label lab = classify(sc, n);
  if (lab == Label::Goal) return 1.0;
  if (lab == Label::Fail) return 0.0;
  if (i >= path.size()) return 0.0;  // plan exhausted while interior
  if (z.depth() >= static_cast<std::size_t>(sc.horizon)) return 0.0;

  std::string key = node_edge_key(n, z) + ":" + std::to_string(i);
  auto hit = memo.find(key);
  if (hit != memo.end()) return hit->second;

  const EdgeDef* ed = find_edge_def(sc, path[i]);
  double total = 0.0;
  if (ed && condition_holds(ed->initiation, n)) {
    const auto& outs = select_outcomes(sc, n, z, path[i]);
    Context z2 = context_update(z, path[i], n);
    for (const auto& o : outs) {
      if (o.p == 0.0) continue;
      Node nxt = apply_outcome(sc, n, o);
      total += o.p * path_prob_rec(sc, nxt, z2, path, i + 1, memo);
    }
  }
  // inadmissible edge: the executor gives up, which counts as failure
  memo[key] = total;
  return total;
}

}  // namespace

double path_success_prob(const Scenario& sc, const std::string& instruction,
                         const std::vector<Edge>& path) {
  Node root = initial_node(sc, instruction);
  std::map<std::string, double> memo;
  return path_prob_rec(sc, root, Context{}, path, 0, memo);
}

std::vector<CalibrationRow> calibration_report(const Scenario& sc) {
  std::vector<CalibrationRow> rows;
  for (const auto& cal : sc.calibration) {
    CalibrationRow row;
    row.instruction = cal.instruction;
    row.path = cal.path;
    row.lo = cal.lo;
    row.hi = cal.hi;
    row.note = cal.note;
    row.exact = path_success_prob(sc, cal.instruction, cal.path);
    if (cal.lo == cal.hi)
      row.pass = std::fabs(row.exact - cal.lo) <= 0.01;
    else
      row.pass = row.exact >= cal.lo - 1e-12 && row.exact <= cal.hi + 1e-12;
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace reachplan
