#include "attnlab/data_gen.hpp"

#include "attnlab/errors.hpp"

#include <cmath>
#include <random>
#include <string>

namespace attnlab {

namespace {

constexpr int kMaxReseeds = 20;
constexpr double kRankFloor = 1e-6;

void fill_normal(Mat& m, double scale, std::mt19937_64& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = scale * normal(rng);
  }
}

void check_dims(const GenSpec& spec) {
  const Dims& dm = spec.dims;
  const long nn = static_cast<long>(dm.N) * dm.n;
  if (spec.target == Target::Thm1 || spec.target == Target::Thm2) {
    if (static_cast<long>(dm.H) * dm.D < nn) {
      throw HypothesisError("target " + std::string(to_string(spec.target)) +
                            " needs H*D >= N*n for a full-row-rank B (H*D = " +
                            std::to_string(dm.H * dm.D) + ", N*n = " + std::to_string(nn) + ")");
    }
  }
  if (spec.target == Target::Thm3) {
    if (static_cast<long>(dm.D) * dm.d < nn * dm.n) {
      throw HypothesisError("target thm3 needs D*d >= N*n^2 for a positive delta (D*d = " +
                            std::to_string(dm.D * dm.d) +
                            ", N*n^2 = " + std::to_string(nn * dm.n) + ")");
    }
  }
}

}  // namespace

std::string_view to_string(Target t) {
  switch (t) {
    case Target::Unconstrained: return "unconstrained";
    case Target::Thm1: return "thm1";
    case Target::Thm2: return "thm2";
    case Target::Thm3: return "thm3";
  }
  return "?";
}

Target parse_target(std::string_view s) {
  if (s == "unconstrained") return Target::Unconstrained;
  if (s == "thm1") return Target::Thm1;
  if (s == "thm2") return Target::Thm2;
  if (s == "thm3") return Target::Thm3;
  throw ConfigError("unknown target '" + std::string(s) +
                    "' (expected unconstrained|thm1|thm2|thm3)");
}

std::string_view to_string(LabelMode m) { return m == LabelMode::Noise ? "noise" : "far"; }

LabelMode parse_label_mode(std::string_view s) {
  if (s == "noise") return LabelMode::Noise;
  if (s == "far") return LabelMode::Far;
  throw ConfigError("unknown label mode '" + std::string(s) + "' (expected noise|far)");
}

void GenSpec::validate() const {
  dims.validate();
  for (double s : {scale_x, scale_q, scale_k, scale_v, scale_wo}) {
    if (!(s > 0.0) || !std::isfinite(s)) throw ConfigError("weight scales must be positive");
  }
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be >= 0");
}

bool target_holds(Target target, const ConditionReport& rep) {
  switch (target) {
    case Target::Unconstrained: return true;
    case Target::Thm1: return rep.sigma_min_b > kRankFloor;
    case Target::Thm2: return rep.sigma_min_b > kRankFloor && rep.thm2_ok;
    case Target::Thm3:
      for (double d : rep.delta) {
        if (!(d > kRankFloor)) return false;
      }
      return rep.thm3_ok;
  }
  return false;
}

Instance generate(const GenSpec& spec) {
  spec.validate();
  check_dims(spec);
  const Dims& dm = spec.dims;
  std::mt19937_64 rng(spec.seed);

  for (int attempt = 1; attempt <= kMaxReseeds + 1; ++attempt) {
    Instance inst;
    inst.kind = spec.kind;
    inst.attempts = attempt;
    inst.params = ModelParams::zeros(dm);
    inst.batch.dims = dm;
    inst.batch.x.resize(dm.rows(), dm.D);
    fill_normal(inst.batch.x, spec.scale_x, rng);
    for (int h = 0; h < dm.H; ++h) {
      fill_normal(inst.params.wq[h], spec.scale_q, rng);
      fill_normal(inst.params.wk[h], spec.scale_k, rng);
      fill_normal(inst.params.wv[h], spec.scale_v, rng);
    }
    fill_normal(inst.params.wo, spec.scale_wo, rng);
    inst.batch.y = Vec::Zero(dm.rows());

    const Vec clean = forward(spec.kind, inst.params, inst.batch);
    Mat xi(dm.rows(), 1);
    fill_normal(xi, 1.0, rng);
    Vec residual = xi.col(0);
    if (spec.labels == LabelMode::Far) residual = 10.0 * residual.array().sign().matrix();
    residual *= spec.noise;
    inst.batch.y = clean + residual;
    inst.report = spectral_report(spec.kind, inst.params, inst.batch);

    const bool calibrate = spec.calibrate_lhs > 0.0 &&
                           (spec.target == Target::Thm2 || spec.target == Target::Thm3);
    if (calibrate) {
      // Both inequalities are linear in ‖r₀‖, so one rescale hits the target.
      const double lhs =
          spec.target == Target::Thm2 ? inst.report.thm2_lhs : inst.report.thm3_lhs;
      if (std::isfinite(lhs) && lhs > 0.0) {
        inst.residual_scale = spec.calibrate_lhs / lhs;
        inst.batch.y = clean + inst.residual_scale * residual;
        inst.report = spectral_report(spec.kind, inst.params, inst.batch);
      }
    }
    if (target_holds(spec.target, inst.report)) return inst;
  }
  throw HypothesisError("no instance satisfying target " + std::string(to_string(spec.target)) +
                        " after " + std::to_string(kMaxReseeds) + " reseeds");
}

}  // namespace attnlab
