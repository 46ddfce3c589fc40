#include "reachplan/demo.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "reachplan/oracle.hpp"

using namespace reachplan;

namespace {

const char* kAllScenarios[] = {"cabinet",     "chain3",          "drawer-box",
                               "drawer-can",  "drawer-degraded", "plug2",
                               "plug3",       "simpler"};

// cyclic config with a win edge; uniform wandering can hit the step cap
const char* kLoopConfig = R"json({
  "name": "loop", "horizon": 6, "objects": ["lid"], "instructions": ["fiddle"],
  "initial": {"*": {"facts": ["up(lid)"]}},
  "goal": {"*": ["won"]}, "fail": {"any": ["broke"]},
  "edges": [
    {"edge": "flip(lid)", "requires": ["up(lid)"], "branches": [
      {"outcomes": [{"p": 1.0, "remove": ["up(lid)"], "add": ["down(lid)"]}]}
    ]},
    {"edge": "unflip(lid)", "requires": ["down(lid)"], "branches": [
      {"outcomes": [{"p": 1.0, "remove": ["down(lid)"], "add": ["up(lid)"]}]}
    ]},
    {"edge": "win(lid)", "requires": ["down(lid)"], "branches": [
      {"outcomes": [{"p": 1.0, "add": ["won"]}]}
    ]}
  ]})json";

std::string slurp(const std::string& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

// ---- rollouts ---------------------------------------------------------------

TEST_CASE("scripted plug3 demos succeed at the calibrated rate") {
  Scenario sc = load_builtin("plug3");
  BehaviorPolicy pol = BehaviorPolicy::path_balanced({parse_plan(
      "grasp(small)~insert(small)~grasp(round)~insert(round)~grasp(rect)~insert(rect)")});
  const int kRuns = 5000;
  int wins = 0;
  for (int e = 0; e < kRuns; ++e) {
    Rng rng = derive_stream(11, e);
    EpisodeRecord ep = rollout(sc, pol, "plug all three", rng, e);
    validate_episode(ep);
    wins += ep.outcome == Label::Goal;
  }
  double sigma = std::sqrt(0.96 * 0.04 / kRuns);
  CHECK(std::abs(double(wins) / kRuns - 0.96) <= 3.0 * sigma);
}

TEST_CASE("the leave script on drawer-can almost always ends in a mess") {
  Scenario sc = load_builtin("drawer-can");
  BehaviorPolicy pol =
      BehaviorPolicy::path_balanced({parse_plan("grasp(spam)~place(spam)")});
  const int kRuns = 4000;
  int wins = 0;
  for (int e = 0; e < kRuns; ++e) {
    Rng rng = derive_stream(12, e);
    wins += rollout(sc, pol, "pack spam", rng, e).outcome == Label::Goal;
  }
  double rate = double(wins) / kRuns;
  CHECK(rate <= 0.05);
  double sigma = std::sqrt(0.02 * 0.98 / kRuns);
  CHECK(std::abs(rate - 0.02) <= 3.0 * sigma);
}

TEST_CASE("uniform rollouts always terminate and satisfy the pathwise identity") {
  int budget = 0;
  for (const char* name : kAllScenarios) {
    CAPTURE(name);
    Scenario sc = load_builtin(name);
    BehaviorPolicy pol = BehaviorPolicy::uniform();
    for (int e = 0; e < 1250; ++e) {
      const std::string& instr = sc.instructions[e % sc.instructions.size()];
      Rng rng = derive_stream(13, budget + e);
      EpisodeRecord ep = rollout(sc, pol, instr, rng, e);
      validate_episode(ep);
      REQUIRE(ep.outcome != Label::Interior);
      REQUIRE(ep.steps.size() <= static_cast<std::size_t>(sc.horizon));
      // pathwise identity: the return is exactly the goal indicator
      double want = ep.outcome == Label::Goal ? 1.0 : 0.0;
      REQUIRE(episode_return(ep) == want);
      double sum_r = 0.0;
      for (const Sys2Sample& s : segment(ep)) sum_r += s.r;
      REQUIRE(sum_r == want);
    }
    budget += 1250;
  }
}

TEST_CASE("wandering in a loop hits the horizon cap and is recorded as such") {
  Scenario sc = load_scenario(kLoopConfig);
  BehaviorPolicy pol = BehaviorPolicy::uniform();
  int capped = 0, won = 0;
  for (int e = 0; e < 200; ++e) {
    Rng rng = derive_stream(14, e);
    EpisodeRecord ep = rollout(sc, pol, "fiddle", rng, e);
    validate_episode(ep);
    if (ep.horizon_fail) {
      ++capped;
      CHECK(ep.outcome == Label::Fail);
      CHECK(ep.steps.size() == 6);
      CHECK_FALSE(ep.steps.back().terminal);
    }
    won += ep.outcome == Label::Goal;
  }
  CHECK(capped > 0);
  CHECK(won > 0);
}

TEST_CASE("a stranded demonstrator is recorded as a dead end") {
  Scenario sc = load_builtin("drawer-box");
  // grasping before opening wedges the episode: nothing is admissible after
  BehaviorPolicy pol = BehaviorPolicy::path_balanced({parse_plan("grasp(box)")});
  Rng rng = derive_stream(15, 0);
  EpisodeRecord ep = rollout(sc, pol, "stow the box", rng, 0);
  validate_episode(ep);
  CHECK(ep.dead_end);
  CHECK(ep.outcome == Label::Fail);
  CHECK(ep.steps.size() == 1);
  CHECK_FALSE(ep.steps.back().terminal);
}

// ---- policies ---------------------------------------------------------------

TEST_CASE("the weighted policy biases the first pick as configured") {
  Scenario sc = load_builtin("drawer-can");
  // 3-vs-1-vs-1 over {grasp(salmon), grasp(spam), push(spam)} puts 60% on the
  // spam grab
  BehaviorPolicy pol = BehaviorPolicy::weighted({{"grasp(spam)", 3.0}});
  const int kRuns = 3000;
  int spam_first = 0;
  for (int e = 0; e < kRuns; ++e) {
    Rng rng = derive_stream(16, e);
    EpisodeRecord ep = rollout(sc, pol, "pack spam", rng, e);
    REQUIRE_FALSE(ep.steps.empty());
    spam_first += ep.steps.front().edge == parse_edge("grasp(spam)");
  }
  double rate = double(spam_first) / kRuns;
  double sigma = std::sqrt(0.6 * 0.4 / kRuns);
  CHECK(std::abs(rate - 0.6) <= 3.0 * sigma);
}

TEST_CASE("verb-level weights cover every grounding of the verb") {
  Scenario sc = load_builtin("plug3");
  BehaviorPolicy pol = BehaviorPolicy::weighted({{"grasp", 2.0}});
  Node root = initial_node(sc, "plug all three");
  auto adm = admissible_edges(sc, root, Context{});
  REQUIRE(adm.size() == 3);  // three grasps, equal weights again
  Rng rng = derive_stream(17, 0);
  Edge e = choose_edge(pol, adm, 0, 0, rng);
  CHECK(std::find(adm.begin(), adm.end(), e) != adm.end());
}

TEST_CASE("scripts are followed while admissible and improvised after") {
  Scenario sc = load_builtin("chain3");
  BehaviorPolicy pol = BehaviorPolicy::path_balanced({parse_plan("shift(a,b)")});
  Rng rng = derive_stream(18, 0);
  EpisodeRecord ep = rollout(sc, pol, "advance the token", rng, 0);
  // script covers one step; the chain only ever offers one edge, so the
  // improvised tail still walks to the goal
  CHECK(ep.outcome == Label::Goal);
  CHECK(ep.steps.size() == 3);
  CHECK(ep.steps[0].edge == parse_edge("shift(a,b)"));
  CHECK(ep.steps[1].edge == parse_edge("shift(b,c)"));
}

// ---- segmentation -----------------------------------------------------------

TEST_CASE("segment cuts one sample per edge with the right flags") {
  Scenario sc = load_builtin("plug3");
  BehaviorPolicy pol = BehaviorPolicy::path_balanced({parse_plan(
      "grasp(small)~insert(small)~grasp(round)~insert(round)~grasp(rect)~insert(rect)")});

  // scan for one success and one failure; both exist in short order
  bool saw_win = false, saw_loss = false;
  for (int e = 0; e < 200 && !(saw_win && saw_loss); ++e) {
    Rng rng = derive_stream(19, e);
    EpisodeRecord ep = rollout(sc, pol, "plug all three", rng, e);
    auto samples = segment(ep);
    REQUIRE(samples.size() == ep.steps.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
      CHECK(samples[i].z.depth() == i);  // strictly growing context
      CHECK(samples[i].episode_id == static_cast<std::uint64_t>(e));
      CHECK(samples[i].episode_outcome == ep.outcome);
      if (samples[i].r == 1.0) CHECK(samples[i].term);
    }
    if (ep.outcome == Label::Goal && !saw_win) {
      saw_win = true;
      CHECK(samples.size() == 6);
      CHECK(samples.back().r == 1.0);
      CHECK(samples.back().term);
    }
    if (ep.outcome == Label::Fail && !saw_loss) {
      saw_loss = true;
      CHECK(samples.back().r == 0.0);
      CHECK(samples.back().term);
    }
  }
  CHECK(saw_win);
  CHECK(saw_loss);
}

TEST_CASE("a one-edge failure segments to a single terminal sample") {
  Scenario sc = load_builtin("drawer-box");
  BehaviorPolicy pol = BehaviorPolicy::path_balanced({parse_plan("force(drawer)")});
  for (int e = 0; e < 100; ++e) {
    Rng rng = derive_stream(20, e);
    EpisodeRecord ep = rollout(sc, pol, "stow the box", rng, e);
    if (ep.steps.size() == 1 && ep.steps[0].terminal) {
      auto samples = segment(ep);
      REQUIRE(samples.size() == 1);
      CHECK(samples[0].r == 0.0);
      CHECK(samples[0].term);
      CHECK(samples[0].episode_outcome == Label::Fail);
      return;
    }
  }
  FAIL("the jam branch never fired in 100 tries");
}

TEST_CASE("segment refuses an unterminated episode") {
  EpisodeRecord ep;
  ep.outcome = Label::Interior;
  CHECK_THROWS_AS((void)segment(ep), const Error&);
}

// ---- dataset assembly ---------------------------------------------------------

TEST_CASE("datasets are deterministic per seed, down to the file bytes") {
  Scenario sc = load_builtin("drawer-can");
  BehaviorPolicy pol = BehaviorPolicy::uniform();
  Dataset a = build_dataset(sc, pol, 120, {}, 21);
  Dataset b = build_dataset(sc, pol, 120, {}, 21);
  REQUIRE(a.samples.size() == b.samples.size());
  save_dataset(a, "demo_det_a.tsv");
  save_dataset(b, "demo_det_b.tsv");
  CHECK(slurp("demo_det_a.tsv") == slurp("demo_det_b.tsv"));

  Dataset c = build_dataset(sc, pol, 120, {}, 22);
  save_dataset(c, "demo_det_c.tsv");
  CHECK(slurp("demo_det_a.tsv") != slurp("demo_det_c.tsv"));
  std::remove("demo_det_a.tsv");
  std::remove("demo_det_b.tsv");
  std::remove("demo_det_c.tsv");
}

TEST_CASE("the instruction mix cycles by episode id") {
  Scenario sc = load_builtin("drawer-can");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 10, {}, 23);
  CHECK(ds.instructions == sc.instructions);
  for (const Sys2Sample& s : ds.samples) {
    const std::string& want = sc.instructions[s.episode_id % 2];
    CHECK(s.n.instruction == want);
  }
}

TEST_CASE("dataset assembly rejects degenerate requests") {
  Scenario sc = load_builtin("plug3");
  CHECK_THROWS_AS((void)build_dataset(sc, BehaviorPolicy::uniform(), 0, {}, 1),
                  const Error&);
  CHECK_THROWS_AS(
      (void)build_dataset(sc, BehaviorPolicy::uniform(), 5, {"wash the cat"}, 1),
      const Error&);
  // scripts that cannot run on their intended line are caller bugs
  BehaviorPolicy bad = BehaviorPolicy::path_balanced({parse_plan("insert(small)")});
  CHECK_THROWS_AS((void)build_dataset(sc, bad, 5, {}, 1), const Error&);
}

TEST_CASE("a 450-episode mixed corpus covers successes and failures of both rigs") {
  for (const char* name : {"plug3", "plug2"}) {
    CAPTURE(name);
    Scenario sc = load_builtin(name);
    Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 450, {}, 24);
    std::uint64_t wins = 0;
    std::map<std::uint64_t, Label> outcomes;
    for (const Sys2Sample& s : ds.samples) outcomes[s.episode_id] = s.episode_outcome;
    REQUIRE(outcomes.size() == 450);
    for (const auto& [id, lab] : outcomes) wins += lab == Label::Goal;
    CHECK(wins > 0);
    CHECK(wins < 450);
    // the uniform success rate is the oracle's behavior-mode root value
    Scenario fresh = load_builtin(name);
    double p = root_value(fresh, exact_reach_avoid(fresh, OracleMode::Behavior),
                          fresh.instructions[0]);
    double sigma = std::sqrt(p * (1.0 - p) / 450.0);
    CHECK(std::abs(double(wins) / 450.0 - p) <= 3.0 * sigma);
  }
}

// ---- statistics ---------------------------------------------------------------

TEST_CASE("a 21-trial scripted run reproduces the push-clock tally") {
  Scenario sc = load_builtin("cabinet");
  BehaviorPolicy pol = BehaviorPolicy::path_balanced(
      {parse_plan("open(cabinet)~shift(jar)~take(mug)")});
  Dataset ds = build_dataset(sc, pol, 21, {"fetch the mug"}, 25);
  auto stats = dataset_stats(ds);
  REQUIRE(stats.size() == 1);
  CHECK(stats[0].instruction == "fetch the mug");
  CHECK(stats[0].path == "open(cabinet)~shift(jar)~take(mug)");
  CHECK(stats[0].trials == 21);
  CHECK(stats[0].p_hat == double(stats[0].successes) / 21.0);
  CHECK(stats[0].p_hat >= 0.80);  // 3-sigma floor around 0.95 at n=21
}

TEST_CASE("per-path tallies converge to the exact calibration values") {
  Scenario sc = load_builtin("cabinet");
  BehaviorPolicy pol =
      BehaviorPolicy::path_balanced({parse_plan("open(cabinet)~shift(jar)~take(mug)"),
                                     parse_plan("open(cabinet)~take(mug)")});
  Dataset ds = build_dataset(sc, pol, 5000, {"fetch the mug"}, 26);
  auto stats = dataset_stats(ds);
  REQUIRE(stats.size() == 2);
  for (const PathStat& row : stats) {
    CAPTURE(row.path);
    CHECK(row.p_hat >= 0.0);
    CHECK(row.p_hat <= 1.0);
    double exact =
        path_success_prob(sc, "fetch the mug", parse_plan(row.path));
    double sigma = std::sqrt(exact * (1.0 - exact) / double(row.trials));
    CHECK(std::abs(row.p_hat - exact) <= 3.0 * sigma);
    CHECK(row.trials == 2500);
  }
}

TEST_CASE("stats on an empty dataset are empty") {
  CHECK(dataset_stats(Dataset{}).empty());
}

// ---- persistence ----------------------------------------------------------------

TEST_CASE("datasets survive a save and load round trip") {
  Scenario sc = load_builtin("simpler");
  Dataset ds = build_dataset(sc, BehaviorPolicy::uniform(), 40, {}, 27);
  save_dataset(ds, "demo_roundtrip.tsv");
  Dataset back = load_dataset("demo_roundtrip.tsv");
  CHECK(back.scenario == ds.scenario);
  CHECK(back.variant == ds.variant);
  CHECK(back.seed == ds.seed);
  CHECK(back.episodes == ds.episodes);
  CHECK(back.instructions == ds.instructions);
  REQUIRE(back.samples.size() == ds.samples.size());
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].n == ds.samples[i].n);
    CHECK(back.samples[i].z == ds.samples[i].z);
    CHECK(back.samples[i].e == ds.samples[i].e);
    CHECK(back.samples[i].next == ds.samples[i].next);
    CHECK(back.samples[i].r == ds.samples[i].r);
    CHECK(back.samples[i].term == ds.samples[i].term);
    CHECK(back.samples[i].episode_id == ds.samples[i].episode_id);
    CHECK(back.samples[i].episode_outcome == ds.samples[i].episode_outcome);
  }
  // and the reserialization is byte-identical
  save_dataset(back, "demo_roundtrip2.tsv");
  CHECK(slurp("demo_roundtrip.tsv") == slurp("demo_roundtrip2.tsv"));
  std::remove("demo_roundtrip.tsv");
  std::remove("demo_roundtrip2.tsv");
}

TEST_CASE("the loader rejects files that are not datasets") {
  CHECK_THROWS_AS((void)load_dataset("no_such_file.tsv"), const Error&);
  {
    std::ofstream out("demo_bad.tsv");
    out << "not json\n";
  }
  CHECK_THROWS_AS((void)load_dataset("demo_bad.tsv"), const Error&);
  {
    std::ofstream out("demo_bad.tsv");
    out << R"({"scenario":"x","variant":"","seed":1,"episodes":1,"instructions":[]})"
        << "\n"
        << "only\tthree\tcols\n";
  }
  CHECK_THROWS_AS((void)load_dataset("demo_bad.tsv"), const Error&);
  std::remove("demo_bad.tsv");
}
