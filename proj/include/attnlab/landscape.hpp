#pragma once

// Two-direction loss scan around a parameter point:
//
//   values(r, s) = f(M + step·(r − R/2)·d₁ + step·(s − S/2)·d₂)
//
// with 0-based r < R, s < S and integer division for the offsets, so the
// cell (R/2, S/2) is the centre itself.

#include "attnlab/gradients.hpp"
#include "attnlab/model.hpp"

#include <cstdint>
#include <iosfwd>
#include <vector>

namespace attnlab {

/// A perturbation of some weight groups. Groups outside `groups` hold no
/// matrices and are left untouched.
struct Direction {
  VariableSet groups;
  std::vector<Mat> wq;
  std::vector<Mat> wk;
  std::vector<Mat> wv;

  const std::vector<Mat>& group(Group g) const;
};

/// Standard-normal draw for every matrix in `groups`, each divided by its own
/// Frobenius norm. Deterministic in seed.
Direction random_direction(const Dims& dims, VariableSet groups, std::uint64_t seed);

/// All-zero direction over `groups`.
Direction zero_direction(const Dims& dims, VariableSet groups);

/// center + t·dir
ModelParams displace(const ModelParams& center, const Direction& dir, double t);

struct LandscapeGrid {
  int r_steps = 0;
  int s_steps = 0;
  double step = 0.0;
  Mat values;                       // r_steps×s_steps
  std::vector<std::uint8_t> flags;  // row-major; 1 where the loss was non-finite
  int flagged = 0;

  double at(int r, int s) const { return values(r, s); }
};

struct ScanOptions {
  int r_steps = 50;
  int s_steps = 50;
  double step = 0.02;
  int threads = 0;  // 0: ATTNLAB_THREADS, else hardware concurrency
};

/// Throws ConfigError on extents < 1, a non-finite step, or a direction whose
/// shapes disagree with center.
LandscapeGrid scan(KernelKind kind, const ModelParams& center, const DatasetBatch& batch,
                   const Direction& d1, const Direction& d2, const ScanOptions& opts = {});

/// Worker count: `requested` if positive, else ATTNLAB_THREADS if set and
/// positive, else hardware concurrency (at least 1).
int resolve_threads(int requested);

/// Header `r,s,loss`, one line per cell in row-major order, 17 significant digits.
void write_landscape_csv(std::ostream& os, const LandscapeGrid& grid);

}  // namespace attnlab
