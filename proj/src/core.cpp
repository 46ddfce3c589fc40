#include "reachplan/core.hpp"

#include <algorithm>
#include <cmath>

namespace reachplan {

std::string label_name(Label l) {
  switch (l) {
    case Label::Interior: return "interior";
    case Label::Goal: return "goal";
    case Label::Fail: return "fail";
  }
  return "?";
}

Label parse_label(const std::string& s) {
  if (s == "interior") return Label::Interior;
  if (s == "goal") return Label::Goal;
  if (s == "fail") return Label::Fail;
  throw Error("unknown label: " + s);
}

void Node::canonicalize() {
  std::sort(facts.begin(), facts.end());
  facts.erase(std::unique(facts.begin(), facts.end()), facts.end());
}

bool Node::has_fact(const std::string& f) const {
  return std::binary_search(facts.begin(), facts.end(), f);
}

bool Edge::operator<(const Edge& o) const {
  return serialize_edge(*this) < serialize_edge(o);
}

namespace {

// Characters legal inside fact and edge text. The serialization separators
// ; | ~ # [ ] are deliberately excluded.
bool fact_char_ok(char c) {
  return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '(' ||
         c == ')' || c == ',' || c == '-' || c == '$';
}

bool instr_char_ok(char c) {
  return fact_char_ok(c) || c == ' ';
}

void check_gripper(const std::string& g) {
  if (g == "open" || g == "closed") return;
  if (g.rfind("holding(", 0) == 0 && g.back() == ')' && g.size() > 9) {
    for (std::size_t i = 8; i + 1 < g.size(); ++i)
      if (!fact_char_ok(g[i]) || g[i] == '(' || g[i] == ')')
        throw Error("bad gripper text: " + g);
    return;
  }
  throw Error("bad gripper text: " + g);
}

}  // namespace

void validate_fact_text(const std::string& fact) {
  if (fact.empty()) throw Error("empty fact");
  for (char c : fact)
    if (!fact_char_ok(c)) throw Error("illegal character in fact: " + fact);
}

void validate_instruction_text(const std::string& instr) {
  if (instr.empty()) throw Error("empty instruction");
  for (char c : instr)
    if (!instr_char_ok(c)) throw Error("illegal character in instruction: " + instr);
}

std::string serialize_node(const Node& n) {
  Node c = n;
  c.canonicalize();
  std::string out = "[";
  for (std::size_t i = 0; i < c.facts.size(); ++i) {
    if (i) out += ';';
    out += c.facts[i];
  }
  out += "]|";
  out += c.gripper;
  out += '|';
  out += c.instruction;
  return out;
}

Node parse_node(const std::string& s) {
  if (s.empty() || s[0] != '[') throw Error("node text must start with '[': " + s);
  auto close = s.find("]|");
  if (close == std::string::npos) throw Error("node text missing ']|': " + s);
  Node n;
  std::string facts = s.substr(1, close - 1);
  std::size_t pos = 0;
  while (pos < facts.size()) {
    auto semi = facts.find(';', pos);
    if (semi == std::string::npos) semi = facts.size();
    std::string f = facts.substr(pos, semi - pos);
    validate_fact_text(f);
    n.facts.push_back(f);
    pos = semi + 1;
  }
  std::size_t rest = close + 2;
  auto bar = s.find('|', rest);
  if (bar == std::string::npos) throw Error("node text missing gripper separator: " + s);
  n.gripper = s.substr(rest, bar - rest);
  check_gripper(n.gripper);
  n.instruction = s.substr(bar + 1);
  validate_instruction_text(n.instruction);
  n.canonicalize();
  return n;
}

std::string serialize_edge(const Edge& e) {
  std::string out = e.verb;
  out += '(';
  for (std::size_t i = 0; i < e.args.size(); ++i) {
    if (i) out += ',';
    out += e.args[i];
  }
  out += ')';
  return out;
}

Edge parse_edge(const std::string& s) {
  auto open = s.find('(');
  if (open == std::string::npos || s.back() != ')')
    throw Error("edge text must look like verb(args): " + s);
  Edge e;
  e.verb = s.substr(0, open);
  if (e.verb.empty()) throw Error("edge verb empty: " + s);
  for (char c : e.verb)
    if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_'))
      throw Error("illegal character in edge verb: " + s);
  std::string args = s.substr(open + 1, s.size() - open - 2);
  std::size_t pos = 0;
  while (pos < args.size()) {
    auto comma = args.find(',', pos);
    if (comma == std::string::npos) comma = args.size();
    std::string a = args.substr(pos, comma - pos);
    if (a.empty()) throw Error("empty edge argument: " + s);
    for (char c : a)
      if (!((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_' || c == '$'))
        throw Error("illegal character in edge argument: " + s);
    e.args.push_back(a);
    pos = comma + 1;
  }
  return e;
}

std::string serialize_context(const Context& z) {
  std::string out;
  for (std::size_t i = 0; i < z.steps.size(); ++i) {
    if (i) out += '~';
    out += serialize_edge(z.steps[i].first);
    out += '~';
    out += serialize_node(z.steps[i].second);
  }
  return out;
}

Context parse_context(const std::string& s) {
  Context z;
  if (s.empty()) return z;
  std::vector<std::string> parts;
  std::size_t pos = 0;
  while (true) {
    auto tilde = s.find('~', pos);
    if (tilde == std::string::npos) {
      parts.push_back(s.substr(pos));
      break;
    }
    parts.push_back(s.substr(pos, tilde - pos));
    pos = tilde + 1;
  }
  if (parts.size() % 2 != 0) throw Error("context text must alternate edge~node pairs");
  for (std::size_t i = 0; i < parts.size(); i += 2)
    z.steps.emplace_back(parse_edge(parts[i]), parse_node(parts[i + 1]));
  return z;
}

std::string serialize_plan(const std::vector<Edge>& plan) {
  std::string out;
  for (std::size_t i = 0; i < plan.size(); ++i) {
    if (i) out += '~';
    out += serialize_edge(plan[i]);
  }
  return out;
}

std::vector<Edge> parse_plan(const std::string& s) {
  std::vector<Edge> plan;
  if (s.empty()) return plan;
  std::size_t pos = 0;
  while (true) {
    auto tilde = s.find('~', pos);
    if (tilde == std::string::npos) {
      plan.push_back(parse_edge(s.substr(pos)));
      break;
    }
    plan.push_back(parse_edge(s.substr(pos, tilde - pos)));
    pos = tilde + 1;
  }
  return plan;
}

Context context_update(const Context& z, const Edge& e, const Node& n) {
  Context out = z;
  out.steps.emplace_back(e, n);
  return out;
}

std::string node_edge_key(const Node& n, const Context& z) {
  return serialize_node(n) + "##" + serialize_context(z);
}

std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

double episode_return(const EpisodeRecord& ep, double gamma) {
  if (ep.outcome == Label::Interior) throw Error("episode_return: episode not terminated");
  double g = 1.0;
  double total = 0.0;
  for (const auto& st : ep.steps) {
    total += g * st.reward;
    g *= gamma;
  }
  return total;
}

void validate_episode(const EpisodeRecord& ep) {
  std::size_t depth = 0;
  for (std::size_t i = 0; i < ep.steps.size(); ++i) {
    const auto& st = ep.steps[i];
    if (st.ctx.depth() != depth)
      throw Error("episode invariant: context depth must grow by one step per transition");
    depth++;
    bool is_term = st.to_label != Label::Interior;
    if (st.terminal != is_term)
      throw Error("episode invariant: terminal flag must match successor label");
    double want_r = st.to_label == Label::Goal ? 1.0 : 0.0;
    if (st.reward != want_r)
      throw Error("episode invariant: reward must be the goal-entrance indicator");
    if (is_term && i + 1 != ep.steps.size())
      throw Error("episode invariant: no transition may leave a goal or fail node");
    if (i + 1 < ep.steps.size() && !(ep.steps[i + 1].from == st.to))
      throw Error("episode invariant: steps must chain");
  }
  if (!ep.steps.empty()) {
    const auto& last = ep.steps.back();
    if (last.terminal) {
      if (last.to_label != ep.outcome)
        throw Error("episode invariant: outcome must match the terminal label");
    } else if (ep.outcome != Label::Fail || !(ep.horizon_fail || ep.dead_end || ep.gave_up)) {
      throw Error("episode invariant: an unterminated episode may only close as a horizon, dead-end, or give-up fail");
    }
  }
}

}  // namespace reachplan
