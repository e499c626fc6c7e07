#include "attnlab/cli_io.hpp"

#include "attnlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

namespace attnlab {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- fixtures --------------------------------------------------------------

namespace {

void write_matrix(std::ostream& os, const Mat& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      os << (c ? " " : "") << fmt17(m(r, c));
    }
    os << '\n';
  }
}

class Tokens {
public:
  explicit Tokens(std::istream& is) : is_(is) {}

  std::string word() {
    std::string w;
    if (!(is_ >> w)) throw ConfigError("fixture: unexpected end of input");
    return w;
  }

  void expect(const std::string& want) {
    const std::string got = word();
    if (got != want) throw ConfigError("fixture: expected '" + want + "', got '" + got + "'");
  }

  double number() {
    const std::string w = word();
    char* end = nullptr;
    const double v = std::strtod(w.c_str(), &end);
    if (end == w.c_str() || *end != '\0') throw ConfigError("fixture: bad number '" + w + "'");
    return v;
  }

  int integer() {
    const std::string w = word();
    char* end = nullptr;
    const long v = std::strtol(w.c_str(), &end, 10);
    if (end == w.c_str() || *end != '\0') throw ConfigError("fixture: bad integer '" + w + "'");
    return static_cast<int>(v);
  }

  void matrix(Mat& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = number();
    }
  }

private:
  std::istream& is_;
};

}  // namespace

void write_fixture(std::ostream& os, const Fixture& fx) {
  fx.params.validate();
  fx.batch.validate();
  const Dims& dm = fx.params.dims;
  os << "attnlab-instance 1\n";
  os << "kernel " << to_string(fx.kind) << '\n';
  os << "dims " << dm.N << ' ' << dm.n << ' ' << dm.D << ' ' << dm.d << ' ' << dm.H << '\n';
  for (int h = 0; h < dm.H; ++h) {
    os << "wq " << h << '\n';
    write_matrix(os, fx.params.wq[h]);
    os << "wk " << h << '\n';
    write_matrix(os, fx.params.wk[h]);
    os << "wv " << h << '\n';
    write_matrix(os, fx.params.wv[h]);
  }
  os << "wo\n";
  write_matrix(os, fx.params.wo.transpose());
  os << "x\n";
  write_matrix(os, fx.batch.x);
  os << "y\n";
  write_matrix(os, fx.batch.y.transpose());
  os << "end\n";
}

Fixture read_fixture(std::istream& is) {
  Tokens tk(is);
  tk.expect("attnlab-instance");
  if (tk.integer() != 1) throw ConfigError("fixture: unsupported version");
  Fixture fx;
  tk.expect("kernel");
  fx.kind = parse_kernel(tk.word());
  tk.expect("dims");
  Dims dm;
  dm.N = tk.integer();
  dm.n = tk.integer();
  dm.D = tk.integer();
  dm.d = tk.integer();
  dm.H = tk.integer();
  fx.params = ModelParams::zeros(dm);
  for (int h = 0; h < dm.H; ++h) {
    for (const char* name : {"wq", "wk", "wv"}) {
      tk.expect(name);
      if (tk.integer() != h) throw ConfigError(std::string("fixture: head index out of order in ") + name);
      const Group g = name[1] == 'q' ? Group::Q : name[1] == 'k' ? Group::K : Group::V;
      tk.matrix(weight(fx.params, g, h));
    }
  }
  tk.expect("wo");
  tk.matrix(fx.params.wo);
  fx.batch.dims = dm;
  fx.batch.x.resize(dm.rows(), dm.D);
  fx.batch.y.resize(dm.rows());
  tk.expect("x");
  tk.matrix(fx.batch.x);
  tk.expect("y");
  for (Eigen::Index i = 0; i < fx.batch.y.size(); ++i) fx.batch.y(i) = tk.number();
  tk.expect("end");
  return fx;
}

Fixture read_fixture_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open fixture '" + path + "'");
  return read_fixture(in);
}

void write_fixture_file(const std::string& path, const Fixture& fx) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write '" + path + "'");
  write_fixture(out, fx);
  if (!out) throw ConfigError("write failed for '" + path + "'");
}

// ---- config ----------------------------------------------------------------

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

IniConfig parse_ini(std::istream& is, const IniSchema& schema, const std::string& origin) {
  IniConfig cfg;
  std::string line, section;
  int lineno = 0;
  auto where = [&] { return origin + ":" + std::to_string(lineno) + ": "; };
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where() + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!schema.count(section)) throw ConfigError(where() + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where() + "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) throw ConfigError(where() + "key '" + key + "' outside any section");
    if (!schema.at(section).count(key)) {
      throw ConfigError(where() + "unknown key '" + key + "' in section [" + section + "]");
    }
    cfg.sections[section][key] = value;
  }
  return cfg;
}

IniConfig parse_ini_file(const std::string& path, const IniSchema& schema) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  return parse_ini(in, schema, path);
}

// ---- JSON ------------------------------------------------------------------

namespace {

// JSON has no NaN or infinity; those become null.
json jnum(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(jnum(x));
  return a;
}

json verdict(double lhs, bool ok, const std::string& reason) {
  json j{{"lhs", jnum(lhs)}, {"ok", ok}};
  if (!reason.empty()) j["reason"] = reason;
  return j;
}

}  // namespace

json to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(jnum(m(r, c)));
    rows.push_back(row);
  }
  return rows;
}

json to_json(const ConditionReport& rep) {
  const Dims& dm = rep.dims;
  json j;
  j["kernel"] = std::string(to_string(rep.kind));
  j["dims"] = {{"N", dm.N}, {"n", dm.n}, {"D", dm.D}, {"d", dm.d}, {"H", dm.H}};
  j["loss0"] = jnum(rep.loss0);
  j["sigma_min_b"] = jnum(rep.sigma_min_b);
  j["sigma_max_b"] = jnum(rep.sigma_max_b);
  j["rank_b"] = rep.rank_b;
  j["sigma_max_wq"] = nums(rep.sigma_max_wq);
  j["sigma_max_wk"] = nums(rep.sigma_max_wk);
  j["sigma_max_wv"] = jnum(rep.sigma_max_wv);
  j["lambda_v_bar"] = jnum(rep.lambda_v_bar);
  j["delta"] = nums(rep.delta);
  j["jacobian_rank"] = rep.jacobian_rank;
  j["kappa"] = jnum(rep.kappa);
  j["min_s"] = jnum(rep.min_s);
  j["min_abs_vwo"] = jnum(rep.min_abs_vwo);
  j["wo_norm"] = jnum(rep.wo_norm);
  j["x_norm"] = jnum(rep.x_norm);
  j["alpha"] = jnum(rep.alpha);
  j["mu"] = jnum(rep.mu);
  j["gamma"] = jnum(rep.gamma);
  j["gamma_half"] = jnum(rep.gamma_half);
  j["thm2"] = verdict(rep.thm2_lhs, rep.thm2_ok, rep.thm2_reason);
  j["thm2"]["sum_q_sq_gt1"] = rep.sum_q_sq_gt1;
  j["thm2"]["sum_k_sq_gt1"] = rep.sum_k_sq_gt1;
  j["thm3"] = verdict(rep.thm3_lhs, rep.thm3_ok, rep.thm3_reason);
  return j;
}

json to_json(const CounterexampleReport& rep) {
  json j;
  j["a"] = rep.a;
  j["y"] = {rep.y(0), rep.y(1)};
  j["prediction"] = {jnum(rep.prediction(0)), jnum(rep.prediction(1))};
  j["loss"] = jnum(rep.loss);
  j["grad_wq_norm"] = jnum(rep.grad_wq_norm);
  j["grad_wk_norm"] = jnum(rep.grad_wk_norm);
  j["fd_wq_norm"] = jnum(rep.fd_wq_norm);
  j["fd_wk_norm"] = jnum(rep.fd_wk_norm);
  j["l_row_gap"] = jnum(rep.l_row_gap);
  j["gaussian_grad_wq_norm"] = jnum(rep.gaussian_grad_wq_norm);
  j["thm3_init"] = verdict(rep.conditions.thm3_lhs, rep.conditions.thm3_ok,
                           rep.conditions.thm3_reason);
  j["pass"] = rep.pass;
  return j;
}

// ---- gradient check --------------------------------------------------------

double relative_error(const Mat& closed, const Mat& fd) {
  const double diff = (closed - fd).norm();
  const double scale = std::max(closed.norm(), fd.norm());
  return scale < 1e-8 ? diff : diff / scale;
}

std::vector<GradCheckRow> grad_check(KernelKind kind, const ModelParams& params,
                                     const DatasetBatch& batch, VariableSet vars) {
  const GradientBundle g = assemble_bundle(kind, params, batch, vars);
  std::vector<GradCheckRow> rows;
  for (Group grp : {Group::Q, Group::K, Group::V}) {
    if (!vars.contains(grp)) continue;
    for (int h = 0; h < params.dims.H; ++h) {
      const Mat fd = fd_gradient(kind, params, batch, grp, h);
      const Mat& cf = g.group(grp)[h];
      rows.push_back({grp, h, cf.norm(), fd.norm(), relative_error(cf, fd)});
    }
  }
  return rows;
}

json to_json(const std::vector<GradCheckRow>& rows, double tol) {
  json arr = json::array();
  double worst = 0.0;
  for (const auto& r : rows) {
    arr.push_back({{"group", std::string(to_string(r.group))},
                   {"head", r.head},
                   {"closed_norm", jnum(r.closed_norm)},
                   {"fd_norm", jnum(r.fd_norm)},
                   {"rel_err", jnum(r.rel_err)}});
    worst = std::isfinite(r.rel_err) ? std::max(worst, r.rel_err)
                                     : std::numeric_limits<double>::infinity();
  }
  return {{"rows", arr}, {"max_rel_err", jnum(worst)}, {"tol", tol}, {"pass", worst <= tol}};
}

// ---- traces ----------------------------------------------------------------

namespace {

double max_or_nan(const std::vector<double>& v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  return *std::max_element(v.begin(), v.end());
}

}  // namespace

void write_trace_csv(std::ostream& os, const TrainTrace& trace) {
  os << "step,loss,grad_q,grad_k,grad_v,sigma_min_b,sigma_max_wq,sigma_max_wk,sigma_max_wv,"
        "rate_factor\n";
  for (const auto& r : trace.rows) {
    os << r.step << ',' << fmt17(r.loss) << ',' << fmt17(r.grad_q) << ',' << fmt17(r.grad_k)
       << ',' << fmt17(r.grad_v) << ',' << fmt17(r.sigma_min_b) << ','
       << fmt17(max_or_nan(r.sigma_max_wq)) << ',' << fmt17(max_or_nan(r.sigma_max_wk)) << ','
       << fmt17(r.sigma_max_wv) << ',' << fmt17(r.rate_factor) << '\n';
  }
}

NumericCsv read_numeric_csv(std::istream& is) {
  NumericCsv csv;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("csv: missing header");
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) csv.header.push_back(trim(cell));
  }
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      cell = trim(cell);
      char* end = nullptr;
      const double v = std::strtod(cell.c_str(), &end);
      if (end == cell.c_str() || *end != '\0') {
        throw ConfigError("csv line " + std::to_string(lineno) + ": bad value '" + cell + "'");
      }
      row.push_back(v);
    }
    if (row.size() != csv.header.size()) {
      throw ConfigError("csv line " + std::to_string(lineno) + ": expected " +
                        std::to_string(csv.header.size()) + " columns");
    }
    csv.rows.push_back(std::move(row));
  }
  return csv;
}

TrainVerdicts evaluate_trace(const TrainTrace& trace) {
  TrainVerdicts v;
  v.monotone = verify_monotone(trace);
  const double prod = trace.eta * trace.rate_constant;
  if (trace.rate_kind == RateKind::None) {
    v.rate_skip_reason = "no rate claim for this variable set";
  } else if (!(prod > 0.0 && prod < 1.0)) {
    v.rate_skip_reason = "eta*rate = " + fmt17(prod) + " outside (0, 1)";
  } else {
    v.rate_checked = true;
    v.rate = verify_geometric_rate(trace, trace.rate_constant, trace.eta);
  }
  v.eta_prime = 0.5 * trace.eta;
  v.descent = verify_descent(trace, v.eta_prime);
  v.envelope = verify_envelope(trace);
  return v;
}

json train_summary(const TrainConfig& config, const TrainTrace& trace,
                   const TrainVerdicts& v) {
  json j;
  j["kernel"] = std::string(to_string(config.kind));
  j["vars"] = config.vars.str();
  j["eta"] = jnum(trace.eta);
  j["eta_auto"] = trace.eta_auto;
  j["eta_fallback"] = trace.eta_fallback;
  j["lipschitz_estimate"] = jnum(trace.lipschitz_estimate);
  j["steps"] = trace.rows.empty() ? 0 : trace.rows.back().step;
  j["stop_reason"] = trace.stop_reason;
  j["initial_loss"] = jnum(trace.initial_loss());
  j["final_loss"] = jnum(trace.final_loss());
  const char* kind = trace.rate_kind == RateKind::Mu      ? "mu"
                     : trace.rate_kind == RateKind::Gamma ? "gamma"
                                                          : "none";
  j["rate"] = {{"kind", kind},
               {"constant", jnum(trace.rate_constant)},
               {"headline", jnum(trace.headline_rate)},
               {"checked", v.rate_checked}};
  if (v.rate_checked) {
    j["rate"]["ok"] = v.rate.ok;
    j["rate"]["worst_ratio"] = jnum(v.rate.worst_ratio);
    j["rate"]["worst_step"] = v.rate.worst_step;
    j["rate"]["bound"] = jnum(v.rate.bound);
  } else {
    j["rate"]["skip_reason"] = v.rate_skip_reason;
  }
  j["monotone"] = v.monotone;
  j["descent"] = {{"ok", v.descent.ok},
                  {"eta_prime", jnum(v.eta_prime)},
                  {"worst_slack", jnum(v.descent.worst_slack)}};
  j["envelope"] = {{"ok", v.envelope.ok()},
                   {"wv_ok", v.envelope.wv_ok},
                   {"wq_ok", v.envelope.wq_ok},
                   {"wk_ok", v.envelope.wk_ok},
                   {"b_ok", v.envelope.b_ok},
                   {"monitored_steps", v.envelope.monitored_steps}};
  j["initial_conditions"] = to_json(trace.initial);
  return j;
}

}  // namespace attnlab
