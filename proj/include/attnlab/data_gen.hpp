#pragma once

// Seeded synthetic instances, optionally filtered so that a theorem's
// hypotheses hold at the returned point.

#include "attnlab/conditions.hpp"
#include "attnlab/model.hpp"

#include <cstdint>
#include <string_view>

namespace attnlab {

enum class Target { Unconstrained, Thm1, Thm2, Thm3 };

std::string_view to_string(Target t);
/// "unconstrained", "thm1", "thm2", "thm3"; throws ConfigError otherwise.
Target parse_target(std::string_view s);

enum class LabelMode {
  Noise,  // y = MH(M₀; X) + noise·ξ, ξ standard normal
  Far,    // y = MH(M₀; X) + 10·noise·sign(ξ)
};

std::string_view to_string(LabelMode m);
LabelMode parse_label_mode(std::string_view s);

struct GenSpec {
  Dims dims;
  std::uint64_t seed = 0;
  KernelKind kind = KernelKind::Softmax;
  double scale_x = 1.0;
  double scale_q = 1.0;
  double scale_k = 1.0;
  double scale_v = 1.0;
  double scale_wo = 1.0;
  double noise = 1.0;
  LabelMode labels = LabelMode::Noise;
  Target target = Target::Unconstrained;
  /// For thm2/thm3: rescale the label residual so the initialization
  /// inequality's left-hand side equals calibrate_lhs. Ignored when ≤ 0.
  double calibrate_lhs = 0.5;

  /// Scales must be > 0 (noise ≥ 0). Throws ConfigError.
  void validate() const;
};

struct Instance {
  ModelParams params;
  DatasetBatch batch;
  KernelKind kind = KernelKind::Softmax;
  ConditionReport report;
  int attempts = 0;
  double residual_scale = 1.0;  // factor applied by calibration
};

/// Throws HypothesisError when the target's dimension precondition fails
/// (HD ≥ Nn for thm1/thm2, Dd ≥ Nn² for thm3) or when 20 reseeds do not
/// produce a passing instance.
Instance generate(const GenSpec& spec);

/// True when the report satisfies the target's hypotheses.
bool target_holds(Target target, const ConditionReport& report);

}  // namespace attnlab
