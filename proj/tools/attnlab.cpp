// attnlab command-line front end.
//
// Every setting is a `key` that can come from a `--config` INI file (under its
// section) or from a `--key value` flag; flags win. Instances come either from
// `--instance <fixture>` or are generated from the [data] keys.

#include "attnlab/cli_io.hpp"
#include "attnlab/counterexample.hpp"
#include "attnlab/data_gen.hpp"
#include "attnlab/errors.hpp"
#include "attnlab/landscape.hpp"
#include "attnlab/trainer.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

using namespace attnlab;
using nlohmann::json;

namespace {

struct KeyInfo {
  const char* section;
  const char* key;
  const char* help;
};

// clang-format off
const KeyInfo kKeys[] = {
    {"data", "instance", "read the instance from this fixture instead of generating it"},
    {"data", "kernel", "softmax | gaussian"},
    {"data", "N", "samples"},
    {"data", "n", "tokens per sample"},
    {"data", "D", "embedding dimension"},
    {"data", "d", "head dimension"},
    {"data", "H", "heads"},
    {"data", "seed", "generator seed"},
    {"data", "scale_x", "std of X entries"},
    {"data", "scale_q", "std of W^Q entries"},
    {"data", "scale_k", "std of W^K entries"},
    {"data", "scale_v", "std of W^V entries"},
    {"data", "scale_wo", "std of W^O entries"},
    {"data", "noise", "label noise std"},
    {"data", "labels", "noise | far"},
    {"data", "target", "unconstrained | thm1 | thm2 | thm3"},
    {"data", "calibrate_lhs", "thm2/thm3: rescale label noise to this inequality value (<= 0 disables)"},
    {"train", "vars", "trained groups, any of Q K V (e.g. QKV, V, none)"},
    {"train", "eta", "step size or 'auto'"},
    {"train", "step_rule", "auto step rule: sampled | analytic"},
    {"train", "max_steps", "step cap"},
    {"train", "stop_loss", "stop once loss <= this"},
    {"train", "monitor_every", "SVD monitor interval"},
    {"train", "train_seed", "seed of the Lipschitz estimate"},
    {"scan", "r_steps", "grid rows"},
    {"scan", "s_steps", "grid columns"},
    {"scan", "step", "grid spacing"},
    {"scan", "dir1", "groups perturbed along the first axis"},
    {"scan", "dir2", "groups perturbed along the second axis"},
    {"scan", "dir_seed", "direction seed"},
    {"scan", "threads", "worker threads (0: ATTNLAB_THREADS or hardware)"},
    {"counterexample", "a", "scale parameter a > 0"},
    {"counterexample", "y1", "first label"},
    {"counterexample", "y2", "second label"},
    {"counterexample", "ce_seed", "seed of the random W^Q, W^K"},
    {"counterexample", "ce_scale", "std of the random W^Q, W^K"},
    {"counterexample", "gd_steps", "GD steps on {Q,K} for the futility check"},
    {"output", "out", "primary output path (stdout when absent)"},
    {"output", "trace", "train: trace CSV path"},
    {"output", "summary", "train: summary JSON path"},
    {"output", "params_out", "train: fixture with the final parameters"},
    {"output", "require", "exit 3 unless this target holds (thm1 | thm2 | thm3)"},
    {"output", "tol", "grad-check: relative error tolerance"},
};

const std::map<std::string, std::string> kDefaults = {
    {"N", "1"}, {"n", "2"}, {"D", "4"}, {"d", "2"}, {"H", "1"}, {"seed", "0"},
    {"scale_x", "1"}, {"scale_q", "1"}, {"scale_k", "1"}, {"scale_v", "1"}, {"scale_wo", "1"},
    {"noise", "1"}, {"labels", "noise"}, {"target", "unconstrained"}, {"calibrate_lhs", "0.5"},
    {"vars", "V"}, {"eta", "auto"}, {"step_rule", "sampled"}, {"max_steps", "10000"},
    {"stop_loss", "1e-10"}, {"monitor_every", "1"}, {"train_seed", "0"},
    {"r_steps", "50"}, {"s_steps", "50"}, {"step", "0.02"}, {"dir1", "Q"}, {"dir2", "K"},
    {"dir_seed", "0"}, {"threads", "0"},
    {"a", "1"}, {"y1", "0"}, {"y2", "0"}, {"ce_seed", "0"}, {"ce_scale", "0.1"},
    {"gd_steps", "1000"}, {"tol", "1e-6"},
};
// clang-format on

IniSchema schema() {
  IniSchema s;
  for (const auto& k : kKeys) s[k.section].insert(k.key);
  return s;
}

class Settings {
public:
  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string str(const std::string& key) const {
    if (auto it = values_.find(key); it != values_.end()) return it->second;
    if (auto it = kDefaults.find(key); it != kDefaults.end()) return it->second;
    return {};
  }

  double real(const std::string& key) const {
    const std::string s = str(key);
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (s.empty() || *end != '\0') throw ConfigError("key '" + key + "': not a number: '" + s + "'");
    return v;
  }

  long long integer(const std::string& key) const {
    const std::string s = str(key);
    char* end = nullptr;
    const long long v = std::strtoll(s.c_str(), &end, 10);
    if (s.empty() || *end != '\0') throw ConfigError("key '" + key + "': not an integer: '" + s + "'");
    return v;
  }

  std::uint64_t seed(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0) throw ConfigError("key '" + key + "': must be >= 0");
    return static_cast<std::uint64_t>(v);
  }

  int count(const std::string& key) const {
    const long long v = integer(key);
    if (v < 0 || v > 1'000'000'000) throw ConfigError("key '" + key + "': out of range");
    return static_cast<int>(v);
  }

private:
  std::map<std::string, std::string> values_;
};

struct Command {
  CLI::App* app = nullptr;
  std::string config_path;
  std::map<std::string, std::string> flags;
  std::vector<std::string> keys;
};

void add_keys(Command& cmd, std::initializer_list<const char*> sections) {
  for (const auto& k : kKeys) {
    for (const char* s : sections) {
      if (std::string(k.section) == s) {
        cmd.app->add_option(std::string("--") + k.key, cmd.flags[k.key], k.help);
        cmd.keys.push_back(k.key);
      }
    }
  }
  cmd.app->add_option("--config", cmd.config_path, "INI file; flags override its values");
}

Settings resolve(Command& cmd) {
  Settings st;
  if (!cmd.config_path.empty()) {
    const IniConfig ini = parse_ini_file(cmd.config_path, schema());
    for (const auto& [section, kv] : ini.sections) {
      for (const auto& [k, v] : kv) st.set(k, v);
    }
  }
  for (const auto& key : cmd.keys) {
    if (cmd.app->count("--" + key) > 0) st.set(key, cmd.flags[key]);
  }
  return st;
}

GenSpec gen_spec(const Settings& st) {
  GenSpec g;
  g.dims = {st.count("N"), st.count("n"), st.count("D"), st.count("d"), st.count("H")};
  g.seed = st.seed("seed");
  g.kind = parse_kernel(st.has("kernel") ? st.str("kernel") : "softmax");
  g.scale_x = st.real("scale_x");
  g.scale_q = st.real("scale_q");
  g.scale_k = st.real("scale_k");
  g.scale_v = st.real("scale_v");
  g.scale_wo = st.real("scale_wo");
  g.noise = st.real("noise");
  g.labels = parse_label_mode(st.str("labels"));
  g.target = parse_target(st.str("target"));
  g.calibrate_lhs = st.real("calibrate_lhs");
  return g;
}

Fixture load_instance(const Settings& st) {
  Fixture fx;
  if (st.has("instance")) {
    fx = read_fixture_file(st.str("instance"));
  } else {
    Instance inst = generate(gen_spec(st));
    fx = {inst.kind, std::move(inst.params), std::move(inst.batch)};
  }
  if (st.has("kernel")) fx.kind = parse_kernel(st.str("kernel"));
  return fx;
}

// Writes to the file named by `key`, or to stdout when it is unset.
void emit(const Settings& st, const std::string& key, const std::string& text) {
  if (!st.has(key)) {
    std::cout << text;
    return;
  }
  std::ofstream out(st.str(key));
  if (!out) throw ConfigError("cannot write '" + st.str(key) + "'");
  out << text;
}

int run_gen_data(const Settings& st) {
  const Instance inst = generate(gen_spec(st));
  std::ostringstream os;
  write_fixture(os, {inst.kind, inst.params, inst.batch});
  emit(st, "out", os.str());
  std::cerr << "attnlab: generated after " << inst.attempts << " attempt(s); loss0 "
            << fmt17(inst.report.loss0) << ", sigma_min(B) " << fmt17(inst.report.sigma_min_b)
            << '\n';
  return 0;
}

int require_target(const Settings& st, const ConditionReport& rep) {
  if (!st.has("require")) return 0;
  const Target t = parse_target(st.str("require"));
  if (target_holds(t, rep)) return 0;
  std::cerr << "attnlab: hypothesis " << to_string(t) << " does not hold";
  if (t == Target::Thm2 && !rep.thm2_reason.empty()) std::cerr << " (" << rep.thm2_reason << ")";
  if (t == Target::Thm3 && !rep.thm3_reason.empty()) std::cerr << " (" << rep.thm3_reason << ")";
  std::cerr << '\n';
  return 3;
}

int run_check_conditions(const Settings& st) {
  const Fixture fx = load_instance(st);
  const ConditionReport rep = spectral_report(fx.kind, fx.params, fx.batch);
  emit(st, "out", to_json(rep).dump(2) + "\n");
  return require_target(st, rep);
}

int run_grad_check(const Settings& st) {
  const Fixture fx = load_instance(st);
  const VariableSet vars = VariableSet::parse(st.has("vars") ? st.str("vars") : "QKV");
  const double tol = st.real("tol");
  json j = to_json(grad_check(fx.kind, fx.params, fx.batch, vars), tol);
  j["kernel"] = std::string(to_string(fx.kind));
  emit(st, "out", j.dump(2) + "\n");
  if (!j["pass"].get<bool>()) {
    std::cerr << "attnlab: closed-form gradient disagrees with finite differences\n";
    return 2;
  }
  return 0;
}

TrainConfig train_config(const Settings& st, KernelKind kind) {
  TrainConfig c;
  c.kind = kind;
  c.vars = VariableSet::parse(st.str("vars"));
  if (st.str("eta") != "auto") c.eta = st.real("eta");
  const std::string rule = st.str("step_rule");
  if (rule == "sampled") {
    c.step_rule = StepRule::Sampled;
  } else if (rule == "analytic") {
    c.step_rule = StepRule::Analytic;
  } else {
    throw ConfigError("key 'step_rule': expected sampled|analytic, got '" + rule + "'");
  }
  c.max_steps = st.count("max_steps");
  c.stop_loss = st.real("stop_loss");
  c.monitor_every = st.count("monitor_every");
  c.seed = st.seed("train_seed");
  return c;
}

int run_train(const Settings& st) {
  const Fixture fx = load_instance(st);
  const TrainConfig cfg = train_config(st, fx.kind);
  const TrainResult res = gd_train(cfg, fx.params, fx.batch);
  const TrainVerdicts v = evaluate_trace(res.trace);

  std::ostringstream csv;
  write_trace_csv(csv, res.trace);
  emit(st, "trace", csv.str());
  const json summary = train_summary(cfg, res.trace, v);
  if (st.has("summary")) {
    emit(st, "summary", summary.dump(2) + "\n");
  } else {
    std::cerr << "attnlab: final loss " << fmt17(res.trace.final_loss()) << " after "
              << res.trace.rows.back().step << " steps (" << res.trace.stop_reason << ")\n";
  }
  if (st.has("params_out")) {
    write_fixture_file(st.str("params_out"), {fx.kind, res.params, fx.batch});
  }
  return require_target(st, res.trace.initial);
}

int run_counterexample(const Settings& st) {
  const double scale = st.real("ce_scale");
  std::mt19937_64 rng(st.seed("ce_seed"));
  std::normal_distribution<double> normal(0.0, 1.0);
  Mat wq(2, 2), wk(2, 2);
  for (Mat* m : {&wq, &wk}) {
    for (Eigen::Index i = 0; i < 4; ++i) m->data()[i] = scale * normal(rng);
  }
  Vec y(2);
  y << st.real("y1"), st.real("y2");
  const CounterexampleInstance inst = build_counterexample(st.real("a"), y, wq, wk);
  const CounterexampleReport rep = verify_counterexample(inst);
  json j = to_json(rep);

  const int steps = st.count("gd_steps");
  if (steps > 0) {
    TrainConfig cfg;
    cfg.kind = KernelKind::Softmax;
    cfg.vars = VariableSet{true, true, false};
    cfg.max_steps = steps;
    cfg.stop_loss = 0.0;
    cfg.monitor_every = steps;
    if (st.str("eta") != "auto" && st.has("eta")) cfg.eta = st.real("eta");
    const TrainResult res = gd_train(cfg, inst.params, inst.batch);
    double drift = 0.0;
    for (const auto& row : res.trace.rows) {
      drift = std::max(drift, std::abs(row.loss - res.trace.initial_loss()));
    }
    j["gd"] = {{"steps", steps}, {"eta", res.trace.eta}, {"max_loss_change", drift}};
  }
  emit(st, "out", j.dump(2) + "\n");
  return rep.pass ? 0 : 2;
}

int run_landscape(const Settings& st) {
  const Fixture fx = load_instance(st);
  const std::uint64_t seed = st.seed("dir_seed");
  const Direction d1 = random_direction(fx.params.dims, VariableSet::parse(st.str("dir1")), seed);
  const Direction d2 =
      random_direction(fx.params.dims, VariableSet::parse(st.str("dir2")), seed + 1);
  ScanOptions opts;
  opts.r_steps = st.count("r_steps");
  opts.s_steps = st.count("s_steps");
  opts.step = st.real("step");
  opts.threads = st.count("threads");
  const LandscapeGrid grid = scan(fx.kind, fx.params, fx.batch, d1, d2, opts);
  std::ostringstream os;
  write_landscape_csv(os, grid);
  emit(st, "out", os.str());
  if (grid.flagged > 0) std::cerr << "attnlab: " << grid.flagged << " non-finite cell(s)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Numerical lab for one-layer multi-head attention trained by gradient descent"};
  app.require_subcommand(1);

  struct Entry {
    const char* name;
    const char* help;
    std::initializer_list<const char*> sections;
    int (*run)(const Settings&);
  };
  const Entry entries[] = {
      {"gen-data", "generate an instance fixture", {"data", "output"}, run_gen_data},
      {"check-conditions", "spectral report and initialization inequalities as JSON",
       {"data", "output"}, run_check_conditions},
      {"grad-check", "closed-form gradients against central differences",
       {"data", "train", "output"}, run_grad_check},
      {"train", "gradient descent with a CSV trace and a JSON summary",
       {"data", "train", "output"}, run_train},
      {"counterexample", "zero-gradient Softmax instance", {"counterexample", "train", "output"},
       run_counterexample},
      {"landscape", "two-direction loss grid as CSV", {"data", "scan", "output"}, run_landscape},
  };

  std::vector<std::unique_ptr<Command>> cmds;
  for (const auto& e : entries) {
    auto cmd = std::make_unique<Command>();
    cmd->app = app.add_subcommand(e.name, e.help);
    add_keys(*cmd, e.sections);
    cmds.push_back(std::move(cmd));
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    for (std::size_t i = 0; i < cmds.size(); ++i) {
      if (cmds[i]->app->parsed()) return entries[i].run(resolve(*cmds[i]));
    }
  } catch (const Error& e) {
    std::cerr << "attnlab: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "attnlab: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
