#include "reachplan/proposal.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"

using namespace reachplan;

namespace {

const char* kToyConfig = R"json({
  "name": "toy", "horizon": 8, "objects": ["x"], "instructions": ["toy run"],
  "initial": {"*": {"facts": ["base"]}},
  "goal": {"*": ["done"]}, "fail": {"any": ["broke"]},
  "edges": [
    {"edge": "a(x)", "requires": ["base"], "branches": [
      {"outcomes": [{"p": 1.0, "add": ["done"]}]}]},
    {"edge": "b(x)", "requires": ["base"], "branches": [
      {"outcomes": [{"p": 1.0, "add": ["done"]}]}]},
    {"edge": "c(x)", "requires": ["base"], "branches": [
      {"outcomes": [{"p": 1.0, "add": ["done"]}]}]},
    {"edge": "s(x)", "requires": ["base"], "branches": [
      {"outcomes": [{"p": 0.5, "add": ["done"]}, {"p": 0.5, "add": ["broke"]}]}]}
  ]})json";

// 80 takes of a(x), 20 of b(x), all from the toy root
Dataset toy_dataset(const Scenario& sc) {
  Dataset ds;
  ds.scenario = sc.name;
  ds.episodes = 100;
  ds.instructions = {"toy run"};
  Node root = initial_node(sc, "toy run");
  for (int i = 0; i < 100; ++i) {
    Sys2Sample s;
    s.n = root;
    s.e = parse_edge(i < 80 ? "a(x)" : "b(x)");
    s.next = root;
    s.next.facts.push_back("done");
    s.next.canonicalize();
    s.r = 1.0;
    s.term = true;
    s.episode_id = i;
    s.episode_outcome = Label::Goal;
    ds.samples.push_back(s);
  }
  return ds;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---- deltas -------------------------------------------------------------------

TEST_CASE("node deltas round-trip and apply set-wise") {
  Node from = parse_node("[at(box,table);closed(drawer)]|open|stow the box");
  Node to = parse_node("[closed(drawer);held]|holding(box)|stow the box");
  NodeDelta d = node_delta(from, to);
  CHECK(d.add == std::vector<std::string>{"held"});
  CHECK(d.remove == std::vector<std::string>{"at(box,table)"});
  CHECK(d.gripper == "holding(box)");
  CHECK(apply_delta(from, d) == to);
  CHECK(parse_delta(serialize_delta(d)) == d);
  CHECK(serialize_delta(d) == "+held;-at(box,table)|holding(box)");

  // removing an absent fact is a no-op, so one observed edit transfers
  Node other = parse_node("[closed(drawer);extra]|open|stow the box");
  Node moved = apply_delta(other, d);
  CHECK(moved.has_fact("extra"));
  CHECK(moved.has_fact("held"));
  CHECK(moved.gripper == "holding(box)");
}

// ---- smoothing ------------------------------------------------------------------

TEST_CASE("an 80/100 edge tally smooths to the textbook value") {
  Scenario sc = load_scenario(kToyConfig);
  Dataset ds = toy_dataset(sc);
  ProposalModel m = fit_proposal(ds, Conditioning::NodeLastEdge, 1.0);
  Node root = initial_node(sc, "toy run");
  Context z;
  // vocabulary is {a(x), b(x)}: (80+1)/(100+1*2) and (20+1)/(100+1*2)
  CHECK(edge_prob(m, sc, root, z, parse_edge("a(x)")) == 81.0 / 102.0);
  CHECK(edge_prob(m, sc, root, z, parse_edge("b(x)")) == 21.0 / 102.0);
  // an admissible edge outside the corpus vocabulary scores as a zero-count
  // entry of a one-larger vocabulary, so it still gets a real probability
  CHECK(edge_prob(m, sc, root, z, parse_edge("c(x)")) == 1.0 / 103.0);
}

TEST_CASE("vanishing smoothing recovers the empirical frequencies") {
  Scenario sc = load_scenario(kToyConfig);
  ProposalModel m = fit_proposal(toy_dataset(sc), Conditioning::NodeLastEdge, 1e-12);
  Node root = initial_node(sc, "toy run");
  CHECK(std::abs(edge_prob(m, sc, root, Context{}, parse_edge("a(x)")) - 0.8) < 1e-9);
  CHECK(std::abs(edge_prob(m, sc, root, Context{}, parse_edge("b(x)")) - 0.2) < 1e-9);
}

TEST_CASE("top-1 on a lopsided tally is its mode") {
  Scenario sc = load_scenario(kToyConfig);
  ProposalModel m = fit_proposal(toy_dataset(sc));
  auto top = propose_topk(m, sc, initial_node(sc, "toy run"), Context{}, 1);
  REQUIRE(top.size() == 1);
  CHECK(top[0].first == parse_edge("a(x)"));
  CHECK(top[0].second == 81.0 / 102.0);
}

TEST_CASE("an unseen condition backs off to uniform over the admissible set") {
  Scenario sc = load_scenario(kToyConfig);
  ProposalModel m = fit_proposal(toy_dataset(sc));
  Node off = initial_node(sc, "toy run");
  off.facts.push_back("extra");  // never demonstrated
  off.canonicalize();
  auto all = propose_topk(m, sc, off, Context{}, 9);
  REQUIRE(all.size() == 4);  // a, b, c, s stay admissible; k exhausts them
  for (const auto& [e, p] : all) CHECK(p == 0.25);
  CHECK(all[0].first == parse_edge("a(x)"));  // uniform ties fall back to lex order
  CHECK(all[3].first == parse_edge("s(x)"));
  // inadmissible edge under the unseen condition
  Node bare = off;
  bare.facts = {"extra"};
  CHECK(edge_prob(m, sc, bare, Context{}, parse_edge("a(x)")) == 0.0);
}

TEST_CASE("conditioning controls how much history the tallies key on") {
  Scenario sc = load_scenario(kToyConfig);
  Node root = initial_node(sc, "toy run");
  Node pr = root;
  pr.facts = {"warmup"};
  Context z1 = context_update(Context{}, parse_edge("u(x)"), pr);
  Context z2 = context_update(Context{}, parse_edge("v(x)"), pr);

  Dataset ds;
  ds.scenario = "toy";
  ds.episodes = 20;
  ds.instructions = {"toy run"};
  for (int i = 0; i < 20; ++i) {
    Sys2Sample s;
    s.n = root;
    s.z = i < 10 ? z1 : z2;  // after u: always a; after v: always b
    s.e = parse_edge(i < 10 ? "a(x)" : "b(x)");
    s.next = root;
    s.episode_id = i;
    ds.samples.push_back(s);
  }

  ProposalModel only = fit_proposal(ds, Conditioning::NodeOnly);
  CHECK(edge_prob(only, sc, root, z1, parse_edge("a(x)")) ==
        edge_prob(only, sc, root, z2, parse_edge("a(x)")));
  CHECK(edge_prob(only, sc, root, z1, parse_edge("a(x)")) == 11.0 / 22.0);

  for (Conditioning c : {Conditioning::NodeLastEdge, Conditioning::NodeFullContext}) {
    ProposalModel m = fit_proposal(ds, c);
    CHECK(edge_prob(m, sc, root, z1, parse_edge("a(x)")) == 11.0 / 12.0);
    CHECK(edge_prob(m, sc, root, z2, parse_edge("a(x)")) == 1.0 / 12.0);
  }
}

// ---- against real demonstrations -------------------------------------------------

TEST_CASE("proposals from demonstration data are admissible and normalized") {
  Scenario sc = load_builtin("drawer-can");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 300, {}, 31);
  ProposalModel m = fit_proposal(ds);
  for (const Sys2Sample& s : ds.samples) {
    auto adm = admissible_edges(sc, s.n, s.z);
    auto ranked = propose_topk(m, sc, s.n, s.z, 10);
    REQUIRE(ranked.size() <= adm.size());
    double prev = 1.0;
    for (const auto& [e, p] : ranked) {
      CHECK(std::find(adm.begin(), adm.end(), e) != adm.end());
      CHECK(p > 0.0);
      CHECK(p < 1.0);
      CHECK(p <= prev);
      prev = p;
    }
    // the smoothed distribution over the corpus vocabulary is exactly normalized
    double total = 0.0;
    for (const std::string& es : m.edge_vocab)
      total += edge_prob(m, sc, s.n, s.z, parse_edge(es));
    CHECK(std::abs(total - 1.0) <= 1e-12);
  }
}

TEST_CASE("successor prediction nails a deterministic chain") {
  Scenario sc = load_builtin("chain3");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 50, {}, 32);
  ProposalModel m = fit_proposal(ds);
  Node root = initial_node(sc, "advance the token");
  Rng rng = derive_stream(0, 0);
  Edge e = parse_edge("shift(a,b)");
  Node truth = step_option(sc, root, Context{}, e, rng).next;
  CHECK(greedy_successor(m, sc, root, Context{}, e) == truth);
  auto dist = predict_successor(m, sc, root, Context{}, e);
  REQUIRE(!dist.empty());
  // three deltas in the corpus vocabulary; all 50 counts sit on the true one
  CHECK(dist[0].second == 51.0 / 53.0);
  double total = 0.0;
  for (const auto& [node, p] : dist) total += p;
  CHECK(std::abs(total - 1.0) <= 1e-12);
}

TEST_CASE("the reliable drawer push predicts the pushed-in node") {
  Scenario sc = load_builtin("drawer-box");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 400, {}, 33);
  ProposalModel m = fit_proposal(ds);
  Node root = initial_node(sc, "stow the box");
  Rng rng = derive_stream(0, 1);
  Edge open = parse_edge("open(drawer)");
  Node n1 = step_option(sc, root, Context{}, open, rng).next;
  Context z1 = context_update(Context{}, open, root);
  Edge push = parse_edge("push(box)");
  Node pushed = step_option(sc, n1, z1, push, rng).next;  // p = 1.00 branch
  CHECK(greedy_successor(m, sc, n1, z1, push) == pushed);
}

TEST_CASE("an unseen state-edge pair falls back on the environment support") {
  Scenario sc = load_scenario(kToyConfig);
  ProposalModel m = fit_proposal(toy_dataset(sc));  // s(x) never demonstrated
  Node root = initial_node(sc, "toy run");
  auto dist = predict_successor(m, sc, root, Context{}, parse_edge("s(x)"));
  REQUIRE(dist.size() == 2);
  CHECK(dist[0].second == 0.5);
  CHECK(dist[1].second == 0.5);
  // uniform mass: the greedy pick is the serialization-minimal outcome
  CHECK(serialize_node(dist[0].first) < serialize_node(dist[1].first));
  CHECK(greedy_successor(m, sc, root, Context{}, parse_edge("s(x)")) == dist[0].first);
}

// ---- persistence ------------------------------------------------------------------

TEST_CASE("proposal models survive a save and load round trip") {
  Scenario sc = load_builtin("drawer-can");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 120, {}, 34);
  ProposalModel m = fit_proposal(ds, Conditioning::NodeLastEdge, 0.5);
  save_proposal(m, "prop_roundtrip.txt");
  ProposalModel back = load_proposal("prop_roundtrip.txt");
  CHECK(back.alpha == m.alpha);
  CHECK(back.conditioning == m.conditioning);
  CHECK(back.edge_counts == m.edge_counts);
  CHECK(back.successor_counts == m.successor_counts);
  CHECK(back.edge_vocab == m.edge_vocab);
  CHECK(back.delta_vocab == m.delta_vocab);
  save_proposal(back, "prop_roundtrip2.txt");
  CHECK(slurp("prop_roundtrip.txt") == slurp("prop_roundtrip2.txt"));
  std::remove("prop_roundtrip.txt");
  std::remove("prop_roundtrip2.txt");
}

TEST_CASE("fitting is deterministic given the dataset and config") {
  Scenario sc = load_builtin("plug3");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 60, {}, 35);
  save_proposal(fit_proposal(ds), "prop_det_a.txt");
  save_proposal(fit_proposal(ds), "prop_det_b.txt");
  CHECK(slurp("prop_det_a.txt") == slurp("prop_det_b.txt"));
  std::remove("prop_det_a.txt");
  std::remove("prop_det_b.txt");
}

TEST_CASE("degenerate fits and loads are rejected") {
  Scenario sc = load_scenario(kToyConfig);
  CHECK_THROWS_AS((void)fit_proposal(Dataset{}), const Error&);
  CHECK_THROWS_AS((void)fit_proposal(toy_dataset(sc), Conditioning::NodeOnly, 0.0),
                  const Error&);
  ProposalModel m = fit_proposal(toy_dataset(sc));
  CHECK_THROWS_AS(
      (void)propose_topk(m, sc, initial_node(sc, "toy run"), Context{}, 0),
      const Error&);
  CHECK_THROWS_AS((void)load_proposal("no_such_model.txt"), const Error&);
  {
    std::ofstream out("prop_bad.txt");
    out << "not json\n";
  }
  CHECK_THROWS_AS((void)load_proposal("prop_bad.txt"), const Error&);
  {
    std::ofstream out("prop_bad.txt");
    out << R"({"alpha": 1.0, "conditioning": "node+last-edge"})" << "\n"
        << "X\tweird\trow\n";
  }
  CHECK_THROWS_AS((void)load_proposal("prop_bad.txt"), const Error&);
  std::remove("prop_bad.txt");
}
