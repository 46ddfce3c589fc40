// Benchmark CLI: dataset generation, model fitting, planning, and the
// reporting commands (bench tables, scaling sweeps, replanning ablation,
// search comparison, calibration). Every record embeds the config hash and
// the content hashes of the artifacts it was derived from; result lines are
// deterministic per seed, so re-running a command reproduces its .jsonl
// byte for byte (wall-clock timings live only in the .md tables).

#include <boost/math/distributions/beta.hpp>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "reachplan/demo.hpp"
#include "reachplan/eval.hpp"
#include "reachplan/executor.hpp"
#include "reachplan/oracle.hpp"
#include "reachplan/proposal.hpp"
#include "reachplan/search.hpp"
#include "reachplan/value.hpp"

using json = nlohmann::json;
using namespace reachplan;

namespace {

// ---- small utilities -----------------------------------------------------

std::uint64_t fnv64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t x) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(x));
  return buf;
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("missing artifact: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return hex64(fnv64(ss.str()));
}

std::string fmt(double x, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, x);
  return buf;
}

std::pair<double, double> clopper_pearson(int s, int n, double conf = 0.95) {
  double a = (1.0 - conf) / 2.0;
  double lo = s == 0 ? 0.0
                     : boost::math::quantile(
                           boost::math::beta_distribution<double>(s, n - s + 1), a);
  double hi = s == n ? 1.0
                     : boost::math::quantile(
                           boost::math::beta_distribution<double>(s + 1, n - s), 1.0 - a);
  return {lo, hi};
}

double ms_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
      .count();
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<int> parse_int_list(const std::string& s) {
  std::vector<int> out;
  for (const auto& tok : split(s, ','))
    if (!tok.empty()) out.push_back(std::stoi(tok));
  if (out.empty()) throw Error("empty integer list: " + s);
  return out;
}

std::vector<Edge> parse_plan_string(const std::string& s) {
  std::vector<Edge> out;
  for (const auto& tok : split(s, '~'))
    if (!tok.empty()) out.push_back(parse_edge(tok));
  return out;
}

std::map<std::string, double> parse_bias(const std::string& s) {
  std::map<std::string, double> w;
  for (const auto& tok : split(s, ',')) {
    if (tok.empty()) continue;
    auto eq = tok.find('=');
    if (eq == std::string::npos) throw Error("bias entries look like edge=weight: " + tok);
    w[tok.substr(0, eq)] = std::stod(tok.substr(eq + 1));
  }
  if (w.empty()) throw Error("empty bias spec: " + s);
  return w;
}

// scenario[:variant]
std::pair<Scenario, Scenario> load_pair(const std::string& spec) {
  auto colon = spec.find(':');
  std::string base_name = colon == std::string::npos ? spec : spec.substr(0, colon);
  Scenario base = load_builtin(base_name);
  if (colon == std::string::npos) return {base, base};
  return {base, apply_variant(base, spec.substr(colon + 1))};
}

struct OutFiles {
  std::ofstream jsonl;
  std::ofstream md;
  OutFiles(const std::string& dir, const std::string& cmd) {
    std::filesystem::create_directories(dir);
    jsonl.open(dir + "/" + cmd + ".jsonl", std::ios::trunc);
    md.open(dir + "/" + cmd + ".md", std::ios::trunc);
    if (!jsonl || !md) throw Error("cannot write under " + dir);
  }
  void record(const json& j) { jsonl << j.dump() << "\n"; }
};

std::string md_table(const std::vector<std::string>& head,
                     const std::vector<std::vector<std::string>>& rows) {
  std::string out = "|";
  for (const auto& h : head) out += " " + h + " |";
  out += "\n|";
  for (std::size_t i = 0; i < head.size(); ++i) out += " --- |";
  out += "\n";
  for (const auto& row : rows) {
    out += "|";
    for (const auto& cell : row) out += " " + cell + " |";
    out += "\n";
  }
  return out;
}

// ---- shared option bundles -------------------------------------------------

struct DataOpts {
  std::string scenario;
  std::uint64_t episodes = 2000;
  std::uint64_t seed = 1;
  std::string bias;       // edge=weight,... -> weighted policy
  std::string paths;      // plan~strings;separated -> path-balanced policy
  std::string instructions;  // comma list; empty = all
};

void add_data_opts(CLI::App* cmd, DataOpts* d) {
  cmd->add_option("--scenario", d->scenario, "scenario name[:variant]")->required();
  cmd->add_option("--episodes", d->episodes, "episodes to roll out");
  cmd->add_option("--seed", d->seed, "dataset seed");
  cmd->add_option("--bias", d->bias, "weighted policy, edge=weight[,...]");
  cmd->add_option("--paths", d->paths, "path-balanced policy, plan[;plan...]");
  cmd->add_option("--instructions", d->instructions, "instruction mix (comma list)");
}

BehaviorPolicy policy_from(const DataOpts& d) {
  if (!d.bias.empty() && !d.paths.empty())
    throw Error("--bias and --paths are mutually exclusive");
  if (!d.bias.empty()) return BehaviorPolicy::weighted(parse_bias(d.bias));
  if (!d.paths.empty()) {
    std::vector<std::vector<Edge>> paths;
    for (const auto& p : split(d.paths, ';'))
      if (!p.empty()) paths.push_back(parse_plan_string(p));
    return BehaviorPolicy::path_balanced(std::move(paths));
  }
  return BehaviorPolicy::uniform();
}

Dataset build_from(const Scenario& sc, const DataOpts& d) {
  std::vector<std::string> mix;
  for (const auto& tok : split(d.instructions, ','))
    if (!tok.empty()) mix.push_back(tok);
  return build_dataset(sc, policy_from(d), d.episodes, mix, d.seed);
}

struct SearchOpts {
  int B = 4;
  int k = 3;
  int keep = -1;
  double alpha = 0.6;
  int M = 64;
  bool stop_on_goal = false;
  int depth_cap = 6;  // chain and dfs
};

void add_search_opts(CLI::App* cmd, SearchOpts* s) {
  cmd->add_option("--B", s->B, "expansion batch width");
  cmd->add_option("--k", s->k, "proposals ranked per expansion");
  cmd->add_option("--keep", s->keep, "children kept per expansion (-1 = k)");
  cmd->add_option("--alpha", s->alpha, "value/proposal score mix");
  cmd->add_option("--M", s->M, "search iteration budget");
  cmd->add_flag("--stop-on-goal", s->stop_on_goal, "stop searching once a goal leaf exists");
  cmd->add_option("--depth-cap", s->depth_cap, "chain/dfs depth cap");
}

SearchConfig search_config(const SearchOpts& s) {
  SearchConfig cfg;
  cfg.B = s.B;
  cfg.k = s.k;
  cfg.keep = s.keep;
  cfg.alpha = s.alpha;
  cfg.M = s.M;
  cfg.stop_on_goal = s.stop_on_goal;
  return cfg;
}

struct TrainOpts {
  std::string kind = "tabular";
  double tau_e = 0.7;
  double gamma = 1.0;
  double lr = 0.05;
  double rho_ema = 0.9;
  int epochs = 120;
  std::uint64_t train_seed = 0;
};

void add_train_opts(CLI::App* cmd, TrainOpts* t) {
  cmd->add_option("--kind", t->kind, "tabular | linear");
  cmd->add_option("--tau-e", t->tau_e, "expectile level");
  cmd->add_option("--gamma", t->gamma, "discount");
  cmd->add_option("--lr", t->lr, "linear step size");
  cmd->add_option("--rho-ema", t->rho_ema, "target retention per epoch");
  cmd->add_option("--epochs", t->epochs, "training epochs");
  cmd->add_option("--train-seed", t->train_seed, "shuffle seed (linear)");
}

TrainConfig train_config(const TrainOpts& t) {
  TrainConfig cfg;
  if (t.kind == "tabular")
    cfg.kind = ValueKind::Tabular;
  else if (t.kind == "linear")
    cfg.kind = ValueKind::Linear;
  else
    throw Error("unknown value kind: " + t.kind);
  cfg.tau_e = t.tau_e;
  cfg.gamma = t.gamma;
  cfg.lr = t.lr;
  cfg.rho_ema = t.rho_ema;
  cfg.epochs = t.epochs;
  cfg.seed = t.train_seed;
  return cfg;
}

// ---- method runners --------------------------------------------------------

struct MethodOut {
  std::string method;
  Plan plan;
  SearchTree tree;
  bool has_tree = false;
  long long expansions = 0;
  double wall_ms = 0.0;
};

MethodOut run_method(const Scenario& psc, const std::string& instr, const std::string& method,
                     const ProposalModel& prop, const ValueFn& vf, const SearchConfig& cfg,
                     int depth_cap) {
  MethodOut mo;
  mo.method = method;
  Node root = initial_node(psc, instr);
  auto t0 = std::chrono::steady_clock::now();
  if (method == "chain") {
    mo.plan = chain_rollout(psc, root, {}, prop, depth_cap);
    mo.expansions = static_cast<long long>(mo.plan.edges.size());
  } else if (method == "dfs") {
    DfsResult r = dfs_search(psc, root, {}, prop, vf, depth_cap);
    mo.plan = std::move(r.plan);
    mo.expansions = r.expansions;
  } else if (method == "full" || method == "tree-no-fail") {
    SearchConfig c = cfg;
    c.confidence_mode = method == "tree-no-fail";
    SearchResult r = search(psc, root, {}, prop, vf, c);
    mo.expansions = r.tree.expansions;
    mo.plan = std::move(r.plan);
    mo.tree = std::move(r.tree);
    mo.has_tree = true;
  } else if (method == "external") {
    throw Error("method tag 'external' is reserved for a user-pluggable proposer; none ships");
  } else {
    throw Error("unknown method tag: " + method);
  }
  mo.wall_ms = ms_since(t0);
  return mo;
}

double safe_plan_prob(const Scenario& sc, const std::string& instr,
                      const std::vector<Edge>& edges, std::string* note) {
  try {
    return plan_success_prob(sc, instr, edges);
  } catch (const Error& e) {
    if (note) *note = e.what();
    return 0.0;
  }
}

// ---- --config expansion ----------------------------------------------------

// A JSON object of long-option values, spliced in right after the subcommand
// so explicit command-line flags still win.
std::vector<std::string> expand_config(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  std::string path;
  for (std::size_t i = 1; i + 1 < args.size(); ++i) {
    if (args[i] == "--config") {
      path = args[i + 1];
      args.erase(args.begin() + i, args.begin() + i + 2);
      break;
    }
  }
  if (path.empty()) return args;
  std::ifstream in(path);
  if (!in) throw Error("cannot read config file: " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw Error("invalid config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw Error("invalid config file " + path + ": expected an object");
  if (args.size() < 2) throw Error("--config needs a subcommand");
  std::vector<std::string> spliced(args.begin(), args.begin() + 2);
  for (const auto& [key, val] : j.items()) {
    bool overridden = false;  // an explicit flag beats the config file
    for (std::size_t i = 2; i < args.size(); ++i)
      if (args[i] == "--" + key || args[i].rfind("--" + key + "=", 0) == 0) overridden = true;
    if (overridden) continue;
    if (val.is_boolean()) {
      spliced.push_back("--" + key + "=" + (val.get<bool>() ? "true" : "false"));
    } else if (val.is_array()) {
      std::string csv;
      for (const auto& x : val) {
        if (!csv.empty()) csv += ",";
        csv += x.is_string() ? x.get<std::string>() : x.dump();
      }
      spliced.push_back("--" + key + "=" + csv);
    } else {
      spliced.push_back("--" + key + "=" +
                        (val.is_string() ? val.get<std::string>() : val.dump()));
    }
  }
  spliced.insert(spliced.end(), args.begin() + 2, args.end());
  return spliced;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"failure-aware subgoal planning toolkit"};
  app.require_subcommand(1);

  // ---- gen-data ------------------------------------------------------------
  auto* cmd_gen = app.add_subcommand("gen-data", "roll out a behavior policy into a dataset");
  DataOpts gen_d;
  std::string gen_out = "dataset.txt";
  add_data_opts(cmd_gen, &gen_d);
  cmd_gen->add_option("--out", gen_out, "dataset file");

  // ---- fit-proposal ----------------------------------------------------------
  auto* cmd_fit = app.add_subcommand("fit-proposal", "fit the proposal model from a dataset");
  std::string fit_data, fit_out = "proposal.txt";
  cmd_fit->add_option("--data", fit_data, "dataset file")->required();
  cmd_fit->add_option("--out", fit_out, "proposal model file");

  // ---- train-value -----------------------------------------------------------
  auto* cmd_train = app.add_subcommand("train-value", "train the reach-avoid value model");
  std::string train_data, train_out = "value.txt";
  TrainOpts train_t;
  cmd_train->add_option("--data", train_data, "dataset file")->required();
  cmd_train->add_option("--out", train_out, "value model file");
  add_train_opts(cmd_train, &train_t);

  // ---- plan ------------------------------------------------------------------
  auto* cmd_plan = app.add_subcommand("plan", "plan once and dump the tree and plan");
  std::string plan_scn, plan_prop_file, plan_value_file, plan_instr, plan_method = "full";
  std::string plan_out = "out";
  bool plan_oracle_value = false;
  SearchOpts plan_s;
  cmd_plan->add_option("--scenario", plan_scn, "scenario name[:variant]")->required();
  cmd_plan->add_option("--proposal", plan_prop_file, "proposal model file")->required();
  cmd_plan->add_option("--value", plan_value_file, "value model file");
  cmd_plan->add_flag("--oracle-value", plan_oracle_value, "use the exact solution as the value head");
  cmd_plan->add_option("--instruction", plan_instr, "defaults to the scenario's first");
  cmd_plan->add_option("--method", plan_method, "full | tree-no-fail | chain | dfs");
  cmd_plan->add_option("--out", plan_out, "output directory");
  add_search_opts(cmd_plan, &plan_s);

  // ---- run-bench -------------------------------------------------------------
  auto* cmd_bench = app.add_subcommand("run-bench", "plan + evaluate a set of methods");
  DataOpts bench_d;
  TrainOpts bench_t;
  SearchOpts bench_s;
  std::string bench_methods = "chain,tree-no-fail,full,dfs";
  std::string bench_out = "out";
  std::string bench_instr;
  int bench_neval = 500;
  bool bench_oracle_value = false;
  add_data_opts(cmd_bench, &bench_d);
  add_train_opts(cmd_bench, &bench_t);
  add_search_opts(cmd_bench, &bench_s);
  cmd_bench->add_option("--methods", bench_methods, "comma list of method tags");
  cmd_bench->add_option("--instruction", bench_instr, "defaults to the scenario's first");
  cmd_bench->add_option("--n-eval", bench_neval, "evaluation episodes per method");
  cmd_bench->add_flag("--oracle-value", bench_oracle_value, "use the exact solution as the value head");
  cmd_bench->add_option("--out", bench_out, "output directory");

  // ---- scaling-sweep -----------------------------------------------------------
  auto* cmd_sweep = app.add_subcommand("scaling-sweep", "success vs proposal width k");
  DataOpts sweep_d;
  TrainOpts sweep_t;
  SearchOpts sweep_s;
  std::string sweep_K = "1,2,3,4,5";
  std::string sweep_seeds = "1,2,3,4,5";
  std::string sweep_out = "out";
  std::string sweep_instr;
  int sweep_neval = 500;
  add_data_opts(cmd_sweep, &sweep_d);
  add_train_opts(cmd_sweep, &sweep_t);
  add_search_opts(cmd_sweep, &sweep_s);
  cmd_sweep->add_option("--K", sweep_K, "comma list of proposal widths");
  cmd_sweep->add_option("--seeds", sweep_seeds, "comma list of dataset seeds");
  cmd_sweep->add_option("--instruction", sweep_instr, "defaults to the scenario's first");
  cmd_sweep->add_option("--n-eval", sweep_neval, "evaluation episodes per (k, seed)");
  cmd_sweep->add_option("--out", sweep_out, "output directory");

  // ---- replan-ablation ----------------------------------------------------------
  auto* cmd_replan = app.add_subcommand("replan-ablation", "replanning on vs off");
  DataOpts replan_d;
  SearchOpts replan_s;
  std::string replan_out = "out";
  std::string replan_instr;
  int replan_neval = 2000;
  int replan_w = 4;
  double replan_kappa = 0.5;
  double replan_lambda = 0.5;
  int replan_max_switches = 2;
  bool replan_oracle_value = true;
  add_data_opts(cmd_replan, &replan_d);
  add_search_opts(cmd_replan, &replan_s);
  cmd_replan->add_option("--instruction", replan_instr, "defaults to the scenario's first");
  cmd_replan->add_option("--n-eval", replan_neval, "evaluation episodes per arm");
  cmd_replan->add_option("--w", replan_w, "monitor window");
  cmd_replan->add_option("--kappa-u", replan_kappa, "monitor variance threshold");
  cmd_replan->add_option("--lambda-down", replan_lambda, "committed-branch W penalty");
  cmd_replan->add_option("--max-switches", replan_max_switches, "switch budget per episode");
  cmd_replan->add_flag("--oracle-value,!--trained-value", replan_oracle_value,
                       "value head: exact solution (default) or trained model");
  cmd_replan->add_option("--out", replan_out, "output directory");
  TrainOpts replan_t;
  add_train_opts(cmd_replan, &replan_t);

  // ---- compare-search -------------------------------------------------------------
  auto* cmd_cmp = app.add_subcommand("compare-search", "value-guided search vs fixed-order dfs");
  DataOpts cmp_d;
  SearchOpts cmp_s;
  std::string cmp_seeds = "1,2,3,4,5,6,7,8,9,10";
  std::string cmp_out = "out";
  std::string cmp_instr;
  bool cmp_oracle_value = true;
  add_data_opts(cmd_cmp, &cmp_d);
  add_search_opts(cmd_cmp, &cmp_s);
  cmd_cmp->add_option("--seeds", cmp_seeds, "comma list of dataset seeds");
  cmd_cmp->add_option("--instruction", cmp_instr, "defaults to the scenario's first");
  cmd_cmp->add_flag("--oracle-value,!--trained-value", cmp_oracle_value,
                    "value head: exact solution (default) or trained model");
  cmd_cmp->add_option("--out", cmp_out, "output directory");
  TrainOpts cmp_t;
  add_train_opts(cmd_cmp, &cmp_t);

  // ---- calibrate --------------------------------------------------------------------
  auto* cmd_cal = app.add_subcommand("calibrate", "check configured calibration targets");
  std::string cal_scn = "all";
  std::string cal_out = "out";
  bool cal_strict = false;
  cmd_cal->add_option("--scenario", cal_scn, "scenario name, or 'all' for the shipped five");
  cmd_cal->add_flag("--strict", cal_strict, "exit nonzero when any target misses");
  cmd_cal->add_option("--out", cal_out, "output directory");

  std::vector<std::string> args;
  try {
    args = expand_config(argc, argv);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  std::vector<const char*> cargs;
  cargs.reserve(args.size());
  for (const auto& a : args) cargs.push_back(a.c_str());
  CLI11_PARSE(app, static_cast<int>(cargs.size()), cargs.data());

  try {
    // ---- gen-data --------------------------------------------------------
    if (*cmd_gen) {
      auto [base, sc] = load_pair(gen_d.scenario);
      Dataset ds = build_from(sc, gen_d);
      save_dataset(ds, gen_out);
      json cfg = {{"cmd", "gen-data"},     {"scenario", gen_d.scenario},
                  {"episodes", gen_d.episodes}, {"seed", gen_d.seed},
                  {"bias", gen_d.bias},    {"paths", gen_d.paths},
                  {"instructions", gen_d.instructions}};
      std::cout << "wrote " << ds.samples.size() << " samples from " << ds.episodes
                << " episodes to " << gen_out << " (config " << hex64(fnv64(cfg.dump()))
                << ")\n";
      auto stats = dataset_stats(ds);
      for (std::size_t i = 0; i < stats.size() && i < 8; ++i)
        std::cout << "  " << stats[i].instruction << " | " << stats[i].path << " | "
                  << stats[i].successes << "/" << stats[i].trials << "\n";
      return 0;
    }

    // ---- fit-proposal ----------------------------------------------------
    if (*cmd_fit) {
      ProposalModel m = fit_proposal(load_dataset(fit_data));
      save_proposal(m, fit_out);
      std::cout << "fit proposal from " << fit_data << " (" << file_hash(fit_data)
                << ") -> " << fit_out << "\n";
      return 0;
    }

    // ---- train-value -----------------------------------------------------
    if (*cmd_train) {
      TrainResult r = train_value(load_dataset(train_data), train_config(train_t));
      save_value(r.model, train_out);
      std::cout << "trained " << train_t.kind << " value from " << train_data << " ("
                << file_hash(train_data) << ") -> " << train_out
                << ", final loss " << fmt(r.losses.back(), 6) << "\n";
      return 0;
    }

    // ---- plan --------------------------------------------------------------
    if (*cmd_plan) {
      auto [base, psc] = load_pair(plan_scn);
      std::string instr = plan_instr.empty() ? psc.instructions.front() : plan_instr;
      ProposalModel prop = load_proposal(plan_prop_file);
      ValueFn vf;
      json artifacts = {{"proposal", file_hash(plan_prop_file)}};
      if (plan_oracle_value) {
        vf = oracle_value_fn(exact_reach_avoid(base, OracleMode::Optimal), base);
        artifacts["value"] = "oracle";
      } else {
        if (plan_value_file.empty()) throw Error("plan needs --value FILE or --oracle-value");
        vf = make_value_fn(load_value(plan_value_file), psc);
        artifacts["value"] = file_hash(plan_value_file);
      }
      MethodOut mo =
          run_method(psc, instr, plan_method, prop, vf, search_config(plan_s), plan_s.depth_cap);
      std::string prob_note;
      double prob = safe_plan_prob(psc, instr, mo.plan.edges, &prob_note);

      json cfg = {{"cmd", "plan"},       {"scenario", plan_scn}, {"instruction", instr},
                  {"method", plan_method}, {"B", plan_s.B},       {"k", plan_s.k},
                  {"keep", plan_s.keep},  {"alpha", plan_s.alpha}, {"M", plan_s.M},
                  {"depth_cap", plan_s.depth_cap}};
      OutFiles out(plan_out, "plan");
      json rec = {{"cmd", "plan"},
                  {"config_hash", hex64(fnv64(cfg.dump()))},
                  {"scenario", psc.name},
                  {"variant", psc.variant},
                  {"instruction", instr},
                  {"method", plan_method},
                  {"plan", serialize_plan(mo.plan.edges)},
                  {"predicted", label_name(mo.plan.predicted)},
                  {"plan_prob", prob},
                  {"expansions", mo.expansions},
                  {"plan_len", mo.plan.edges.size()},
                  {"note", prob_note.empty() ? mo.plan.note : prob_note},
                  {"artifacts", artifacts}};
      out.record(rec);
      {
        std::ofstream pf(plan_out + "/plan.txt");
        pf << plan_dump(mo.plan);
        if (mo.has_tree) {
          std::ofstream tf(plan_out + "/tree.txt");
          tf << tree_dump(mo.tree);
        }
      }
      out.md << "# plan\n\n" << md_table({"method", "plan", "predicted", "exact prob",
                                          "expansions", "wall ms"},
                                         {{plan_method, serialize_plan(mo.plan.edges),
                                           label_name(mo.plan.predicted), fmt(prob),
                                           std::to_string(mo.expansions), fmt(mo.wall_ms, 1)}});
      std::cout << plan_method << ": " << serialize_plan(mo.plan.edges) << "  (predicted "
                << label_name(mo.plan.predicted) << ", exact prob " << fmt(prob)
                << ", expansions " << mo.expansions << ")\n";
      return 0;
    }

    // ---- run-bench -----------------------------------------------------------
    if (*cmd_bench) {
      auto [base, esc] = load_pair(bench_d.scenario);
      std::string instr = bench_instr.empty() ? base.instructions.front() : bench_instr;
      std::string split_tag = esc.variant.empty() ? "seen" : "unseen";

      // models come from the base kernel; planning sees the variant's structure
      Dataset ds = build_from(base, bench_d);
      ProposalModel prop = fit_proposal(ds);
      TrainResult tr = train_value(ds, train_config(bench_t));
      ValueFn vf = bench_oracle_value
                       ? oracle_value_fn(exact_reach_avoid(base, OracleMode::Optimal), esc)
                       : make_value_fn(tr.model, esc);

      json cfg = {{"cmd", "run-bench"},   {"scenario", bench_d.scenario},
                  {"episodes", bench_d.episodes}, {"seed", bench_d.seed},
                  {"bias", bench_d.bias}, {"methods", bench_methods},
                  {"n_eval", bench_neval}, {"B", bench_s.B},
                  {"k", bench_s.k},       {"alpha", bench_s.alpha},
                  {"M", bench_s.M},       {"depth_cap", bench_s.depth_cap},
                  {"tau_e", bench_t.tau_e}, {"gamma", bench_t.gamma},
                  {"oracle_value", bench_oracle_value}};
      std::string chash = hex64(fnv64(cfg.dump()));

      OutFiles out(bench_out, "run-bench");
      std::vector<std::vector<std::string>> rows;
      for (const auto& method : split(bench_methods, ',')) {
        if (method.empty()) continue;
        MethodOut mo =
            run_method(esc, instr, method, prop, vf, search_config(bench_s), bench_s.depth_cap);
        std::string prob_note;
        double prob = safe_plan_prob(esc, instr, mo.plan.edges, &prob_note);

        auto t0 = std::chrono::steady_clock::now();
        EvalSummary ev = summarize(evaluate_plan_parallel(esc, mo.plan, bench_neval, bench_d.seed));
        double eval_ms = ms_since(t0);
        auto [lo, hi] = clopper_pearson(ev.successes, ev.n);

        json rec = {{"cmd", "run-bench"},
                    {"config_hash", chash},
                    {"seed", bench_d.seed},
                    {"scenario", base.name},
                    {"variant", esc.variant},
                    {"split", split_tag},
                    {"method", method},
                    {"instruction", instr},
                    {"plan", serialize_plan(mo.plan.edges)},
                    {"predicted", label_name(mo.plan.predicted)},
                    {"plan_prob", prob},
                    {"n_eval", ev.n},
                    {"successes", ev.successes},
                    {"success_rate", ev.success_rate()},
                    {"ci_lo", lo},
                    {"ci_hi", hi},
                    {"mean_expansions", static_cast<double>(mo.expansions)},
                    {"mean_plan_len", static_cast<double>(mo.plan.edges.size())},
                    {"note", prob_note}};
        out.record(rec);
        rows.push_back({method, split_tag, fmt(ev.success_rate()),
                        "[" + fmt(lo) + ", " + fmt(hi) + "]", fmt(prob),
                        std::to_string(mo.expansions), std::to_string(mo.plan.edges.size()),
                        fmt(mo.wall_ms + eval_ms, 1)});
        std::cout << method << ": " << serialize_plan(mo.plan.edges) << "  success "
                  << ev.successes << "/" << ev.n << "  exact " << fmt(prob) << "\n";
      }
      out.md << "# run-bench " << bench_d.scenario << " (config " << chash << ", seed "
             << bench_d.seed << ")\n\n"
             << md_table({"method", "split", "success", "95% CI", "exact prob", "expansions",
                          "plan len", "wall ms"},
                         rows);
      return 0;
    }

    // ---- scaling-sweep ---------------------------------------------------------
    if (*cmd_sweep) {
      auto [base, esc] = load_pair(sweep_d.scenario);
      std::string instr = sweep_instr.empty() ? base.instructions.front() : sweep_instr;
      std::string split_tag = esc.variant.empty() ? "seen" : "unseen";
      std::vector<int> Ks = parse_int_list(sweep_K);
      std::vector<int> seeds = parse_int_list(sweep_seeds);

      json cfg = {{"cmd", "scaling-sweep"}, {"scenario", sweep_d.scenario},
                  {"episodes", sweep_d.episodes}, {"bias", sweep_d.bias},
                  {"K", sweep_K},           {"seeds", sweep_seeds},
                  {"n_eval", sweep_neval},  {"B", sweep_s.B},
                  {"alpha", sweep_s.alpha}, {"M", sweep_s.M},
                  {"tau_e", sweep_t.tau_e}, {"gamma", sweep_t.gamma}};
      std::string chash = hex64(fnv64(cfg.dump()));

      OutFiles out(sweep_out, "scaling-sweep");
      std::vector<std::vector<std::string>> rows;
      for (int K : Ks) {
        int pooled_s = 0, pooled_n = 0;
        for (int seed : seeds) {
          DataOpts d = sweep_d;
          d.seed = static_cast<std::uint64_t>(seed);
          Dataset ds = build_from(base, d);
          ProposalModel prop = fit_proposal(ds);
          TrainResult tr = train_value(ds, train_config(sweep_t));
          ValueFn vf = make_value_fn(tr.model, esc);

          SearchConfig c = search_config(sweep_s);
          c.k = K;
          c.keep = -1;
          MethodOut mo = run_method(esc, instr, "full", prop, vf, c, sweep_s.depth_cap);
          EvalSummary ev =
              summarize(evaluate_plan_parallel(esc, mo.plan, sweep_neval, d.seed));
          pooled_s += ev.successes;
          pooled_n += ev.n;
          json rec = {{"cmd", "scaling-sweep"},
                      {"config_hash", chash},
                      {"seed", seed},
                      {"scenario", base.name},
                      {"variant", esc.variant},
                      {"split", split_tag},
                      {"method", "full"},
                      {"k", K},
                      {"plan", serialize_plan(mo.plan.edges)},
                      {"n_eval", ev.n},
                      {"successes", ev.successes},
                      {"success_rate", ev.success_rate()},
                      {"mean_expansions", static_cast<double>(mo.expansions)},
                      {"mean_plan_len", static_cast<double>(mo.plan.edges.size())}};
          out.record(rec);
        }
        auto [lo, hi] = clopper_pearson(pooled_s, pooled_n);
        double rate = pooled_n ? static_cast<double>(pooled_s) / pooled_n : 0.0;
        json agg = {{"cmd", "scaling-sweep"}, {"config_hash", chash}, {"k", K},
                    {"split", split_tag},     {"pooled", true},       {"n_eval", pooled_n},
                    {"successes", pooled_s},  {"success_rate", rate}, {"ci_lo", lo},
                    {"ci_hi", hi}};
        out.record(agg);
        rows.push_back({std::to_string(K), fmt(rate), "[" + fmt(lo) + ", " + fmt(hi) + "]",
                        std::to_string(pooled_s) + "/" + std::to_string(pooled_n)});
        std::cout << "k=" << K << ": " << fmt(rate) << " [" << fmt(lo) << ", " << fmt(hi)
                  << "]\n";
      }
      out.md << "# scaling-sweep " << sweep_d.scenario << " (config " << chash << ")\n\n"
             << md_table({"k", "success", "95% CI", "pooled"}, rows);
      return 0;
    }

    // ---- replan-ablation ---------------------------------------------------------
    if (*cmd_replan) {
      auto [base, esc] = load_pair(replan_d.scenario);
      std::string instr = replan_instr.empty() ? base.instructions.front() : replan_instr;

      Dataset ds = build_from(base, replan_d);
      ProposalModel prop = fit_proposal(ds);
      ValueFn vf;
      if (replan_oracle_value) {
        vf = oracle_value_fn(exact_reach_avoid(base, OracleMode::Optimal), esc);
      } else {
        vf = make_value_fn(train_value(ds, train_config(replan_t)).model, esc);
      }
      SearchResult sr =
          search(esc, initial_node(esc, instr), {}, prop, vf, search_config(replan_s));

      UncertaintyMonitor mon;
      mon.w = replan_w;
      mon.kappa_u = replan_kappa;
      ReplanConfig on;
      on.lambda_down = replan_lambda;
      on.max_switches = replan_max_switches;
      ReplanConfig off = on;
      off.enabled = false;

      json cfg = {{"cmd", "replan-ablation"}, {"scenario", replan_d.scenario},
                  {"episodes", replan_d.episodes}, {"seed", replan_d.seed},
                  {"n_eval", replan_neval},   {"w", replan_w},
                  {"kappa_u", replan_kappa},  {"lambda_down", replan_lambda},
                  {"max_switches", replan_max_switches},
                  {"oracle_value", replan_oracle_value}};
      std::string chash = hex64(fnv64(cfg.dump()));

      OutFiles out(replan_out, "replan-ablation");
      std::vector<std::vector<std::string>> rows;
      double rate_on = 0.0, rate_off = 0.0;
      for (bool enabled : {false, true}) {
        auto t0 = std::chrono::steady_clock::now();
        EvalSummary ev = summarize(
            evaluate_replan_parallel(esc, sr.tree, sr.plan, prop, vf, mon,
                                     enabled ? on : off, replan_neval, replan_d.seed));
        double wall = ms_since(t0);
        auto [lo, hi] = clopper_pearson(ev.successes, ev.n);
        (enabled ? rate_on : rate_off) = ev.success_rate();
        std::string tag = enabled ? "replan-on" : "replan-off";
        json rec = {{"cmd", "replan-ablation"},
                    {"config_hash", chash},
                    {"seed", replan_d.seed},
                    {"scenario", base.name},
                    {"variant", esc.variant},
                    {"split", esc.variant.empty() ? "seen" : "unseen"},
                    {"method", tag},
                    {"plan", serialize_plan(sr.plan.edges)},
                    {"n_eval", ev.n},
                    {"successes", ev.successes},
                    {"success_rate", ev.success_rate()},
                    {"ci_lo", lo},
                    {"ci_hi", hi},
                    {"mean_switches",
                     ev.n ? static_cast<double>(ev.total_switches) / ev.n : 0.0},
                    {"mean_plan_len", ev.mean_steps()}};
        out.record(rec);
        rows.push_back({tag, fmt(ev.success_rate()), "[" + fmt(lo) + ", " + fmt(hi) + "]",
                        fmt(ev.n ? static_cast<double>(ev.total_switches) / ev.n : 0.0, 3),
                        fmt(wall, 1)});
        std::cout << tag << ": " << ev.successes << "/" << ev.n << "\n";
      }
      out.md << "# replan-ablation " << replan_d.scenario << " (config " << chash
             << ", committed " << serialize_plan(sr.plan.edges) << ")\n\n"
             << md_table({"method", "success", "95% CI", "mean switches", "wall ms"}, rows)
             << "\nreplanning gain: " << fmt(rate_on - rate_off) << "\n";
      return 0;
    }

    // ---- compare-search -------------------------------------------------------------
    if (*cmd_cmp) {
      auto [base, psc] = load_pair(cmp_d.scenario);
      std::string instr = cmp_instr.empty() ? psc.instructions.front() : cmp_instr;
      std::vector<int> seeds = parse_int_list(cmp_seeds);
      ArgmaxResult am = argmax_plan(psc, instr, cmp_s.depth_cap);

      json cfg = {{"cmd", "compare-search"}, {"scenario", cmp_d.scenario},
                  {"episodes", cmp_d.episodes}, {"seeds", cmp_seeds},
                  {"B", cmp_s.B},            {"k", cmp_s.k},
                  {"M", cmp_s.M},            {"depth_cap", cmp_s.depth_cap},
                  {"oracle_value", cmp_oracle_value}};
      std::string chash = hex64(fnv64(cfg.dump()));

      OutFiles out(cmp_out, "compare-search");
      std::vector<std::vector<std::string>> rows;
      int wins = 0;
      for (int seed : seeds) {
        DataOpts d = cmp_d;
        d.seed = static_cast<std::uint64_t>(seed);
        Dataset ds = build_from(psc, d);
        ProposalModel prop = fit_proposal(ds);
        ValueFn vf;
        if (cmp_oracle_value) {
          vf = oracle_value_fn(exact_reach_avoid(psc, OracleMode::Optimal), psc);
        } else {
          TrainOpts t = cmp_t;
          vf = make_value_fn(train_value(ds, train_config(t)).model, psc);
        }
        MethodOut guided =
            run_method(psc, instr, "full", prop, vf, search_config(cmp_s), cmp_s.depth_cap);
        MethodOut sweep =
            run_method(psc, instr, "dfs", prop, vf, search_config(cmp_s), cmp_s.depth_cap);
        bool agree = serialize_plan(guided.plan.edges) == serialize_plan(sweep.plan.edges);
        bool at_argmax = serialize_plan(guided.plan.edges) == serialize_plan(am.plan);
        if (guided.expansions < sweep.expansions) ++wins;
        json rec = {{"cmd", "compare-search"},
                    {"config_hash", chash},
                    {"seed", seed},
                    {"scenario", psc.name},
                    {"variant", psc.variant},
                    {"guided_plan", serialize_plan(guided.plan.edges)},
                    {"guided_expansions", guided.expansions},
                    {"dfs_plan", serialize_plan(sweep.plan.edges)},
                    {"dfs_expansions", sweep.expansions},
                    {"agree", agree},
                    {"enum_argmax", serialize_plan(am.plan)},
                    {"guided_at_argmax", at_argmax}};
        out.record(rec);
        rows.push_back({std::to_string(seed), std::to_string(guided.expansions),
                        std::to_string(sweep.expansions), agree ? "yes" : "no",
                        at_argmax ? "yes" : "no"});
        std::cout << "seed " << seed << ": guided " << guided.expansions << " vs dfs "
                  << sweep.expansions << (at_argmax ? " (argmax)" : "") << "\n";
      }
      out.md << "# compare-search " << cmp_d.scenario << " (config " << chash
             << ", enumeration argmax " << serialize_plan(am.plan) << " at "
             << fmt(am.prob) << ")\n\n"
             << md_table({"seed", "guided expansions", "dfs expansions", "plans agree",
                          "guided at argmax"},
                         rows)
             << "\nguided cheaper on " << wins << "/" << seeds.size() << " seeds\n";
      return 0;
    }

    // ---- calibrate --------------------------------------------------------------------
    if (*cmd_cal) {
      std::vector<std::string> names;
      if (cal_scn == "all") {
        names = {"cabinet", "drawer-box", "drawer-can", "plug2", "plug3"};
      } else {
        names = {cal_scn};
      }
      json cfg = {{"cmd", "calibrate"}, {"scenario", cal_scn}};
      std::string chash = hex64(fnv64(cfg.dump()));
      OutFiles out(cal_out, "calibrate");
      std::vector<std::vector<std::string>> rows;
      int misses = 0;
      for (const auto& name : names) {
        Scenario sc = load_builtin(name);
        for (const auto& row : calibration_report(sc)) {
          if (!row.pass) ++misses;
          json rec = {{"cmd", "calibrate"},   {"config_hash", chash},
                      {"scenario", name},     {"instruction", row.instruction},
                      {"path", serialize_plan(row.path)}, {"exact", row.exact},
                      {"lo", row.lo},         {"hi", row.hi},
                      {"pass", row.pass},     {"note", row.note}};
          out.record(rec);
          rows.push_back({name, row.instruction, serialize_plan(row.path), fmt(row.exact),
                          "[" + fmt(row.lo) + ", " + fmt(row.hi) + "]",
                          row.pass ? "yes" : "NO"});
        }
      }
      out.md << "# calibrate (config " << chash << ")\n\n"
             << md_table({"scenario", "instruction", "path", "exact", "target", "pass"}, rows);
      std::cout << rows.size() << " calibration paths, " << misses << " misses\n";
      if (cal_strict && misses > 0) return 1;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
