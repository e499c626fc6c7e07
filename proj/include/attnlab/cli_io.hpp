#pragma once

// Serialization formats and configuration parsing shared by the CLI and the
// tests.
//
// Instance fixture (plain text, whitespace separated, 17 significant digits):
//
//   attnlab-instance 1
//   kernel softmax
//   dims N n D d H
//   wq 0            D rows of d numbers, one block per head
//   wk 0
//   wv 0
//   ...
//   wo              Hd numbers
//   x               Nn rows of D numbers
//   y               Nn numbers
//   end

#include "attnlab/conditions.hpp"
#include "attnlab/counterexample.hpp"
#include "attnlab/gradients.hpp"
#include "attnlab/model.hpp"
#include "attnlab/trainer.hpp"

#include <json.hpp>

#include <iosfwd>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace attnlab {

/// %.17g rendering; round-trips every finite double exactly.
std::string fmt17(double v);

struct Fixture {
  KernelKind kind = KernelKind::Softmax;
  ModelParams params;
  DatasetBatch batch;
};

void write_fixture(std::ostream& os, const Fixture& fx);
/// Throws ConfigError with the offending token on malformed input.
Fixture read_fixture(std::istream& is);
Fixture read_fixture_file(const std::string& path);
void write_fixture_file(const std::string& path, const Fixture& fx);

/// `key = value` lines under `[section]` headers; `#` and `;` start comments.
struct IniConfig {
  std::map<std::string, std::map<std::string, std::string>> sections;
};

/// Section name → permitted keys.
using IniSchema = std::map<std::string, std::set<std::string>>;

/// Parses and checks every section and key against the schema. Throws
/// ConfigError naming the file, line and offending key.
IniConfig parse_ini(std::istream& is, const IniSchema& schema, const std::string& origin);
IniConfig parse_ini_file(const std::string& path, const IniSchema& schema);

nlohmann::json to_json(const ConditionReport& rep);
nlohmann::json to_json(const CounterexampleReport& rep);
nlohmann::json to_json(const Mat& m);

struct GradCheckRow {
  Group group = Group::Q;
  int head = 0;
  double closed_norm = 0.0;
  double fd_norm = 0.0;
  double rel_err = 0.0;
};

/// ‖G − F‖_F / max(‖G‖_F, ‖F‖_F), or the absolute difference when both norms
/// fall below 1e-8.
double relative_error(const Mat& closed, const Mat& fd);

std::vector<GradCheckRow> grad_check(KernelKind kind, const ModelParams& params,
                                     const DatasetBatch& batch, VariableSet vars);
nlohmann::json to_json(const std::vector<GradCheckRow>& rows, double tol);

/// Columns step,loss,grad_q,grad_k,grad_v,sigma_min_b,sigma_max_wq,sigma_max_wk,sigma_max_wv,rate_factor.
/// sigma_max_wq/wk are maxima over heads; unmonitored or absent fields are nan.
void write_trace_csv(std::ostream& os, const TrainTrace& trace);

/// Reads a numeric CSV with a header line. `nan`/`inf` are accepted.
struct NumericCsv {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
};
NumericCsv read_numeric_csv(std::istream& is);

struct TrainVerdicts {
  bool monotone = false;
  bool rate_checked = false;
  std::string rate_skip_reason;
  RateVerdict rate;
  DescentVerdict descent;
  double eta_prime = 0.0;
  EnvelopeVerdict envelope;
};

TrainVerdicts evaluate_trace(const TrainTrace& trace);
nlohmann::json train_summary(const TrainConfig& config, const TrainTrace& trace,
                             const TrainVerdicts& verdicts);

}  // namespace attnlab
