#include "attnlab/landscape.hpp"

#include "attnlab/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <limits>
#include <ostream>
#include <random>
#include <thread>

namespace attnlab {

const std::vector<Mat>& Direction::group(Group g) const {
  switch (g) {
    case Group::Q: return wq;
    case Group::K: return wk;
    case Group::V: return wv;
  }
  throw InternalError("Direction::group: bad group");
}

namespace {

std::vector<Mat>& group_mut(Direction& d, Group g) {
  return g == Group::Q ? d.wq : g == Group::K ? d.wk : d.wv;
}

void check_direction(const Direction& dir, const Dims& dims) {
  for (Group g : {Group::Q, Group::K, Group::V}) {
    const auto& mats = dir.group(g);
    const std::size_t want = dir.groups.contains(g) ? static_cast<std::size_t>(dims.H) : 0;
    if (mats.size() != want) {
      throw ConfigError("direction: group " + std::string(to_string(g)) + " has " +
                        std::to_string(mats.size()) + " matrices, expected " +
                        std::to_string(want));
    }
    for (const auto& m : mats) {
      if (m.rows() != dims.D || m.cols() != dims.d) {
        throw ConfigError("direction: matrix shape disagrees with D×d");
      }
    }
  }
}

}  // namespace

Direction zero_direction(const Dims& dims, VariableSet groups) {
  Direction dir;
  dir.groups = groups;
  for (Group g : {Group::Q, Group::K, Group::V}) {
    if (!groups.contains(g)) continue;
    group_mut(dir, g).assign(dims.H, Mat::Zero(dims.D, dims.d));
  }
  return dir;
}

Direction random_direction(const Dims& dims, VariableSet groups, std::uint64_t seed) {
  dims.validate();
  Direction dir = zero_direction(dims, groups);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (Group g : {Group::Q, Group::K, Group::V}) {
    for (Mat& m : group_mut(dir, g)) {
      for (Eigen::Index c = 0; c < m.cols(); ++c) {
        for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = normal(rng);
      }
      const double fro = m.norm();
      if (fro > 0.0) m /= fro;
    }
  }
  return dir;
}

ModelParams displace(const ModelParams& center, const Direction& dir, double t) {
  ModelParams out = center;
  for (Group g : {Group::Q, Group::K, Group::V}) {
    const auto& mats = dir.group(g);
    for (std::size_t h = 0; h < mats.size(); ++h) {
      weight(out, g, static_cast<int>(h)) += t * mats[h];
    }
  }
  return out;
}

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("ATTNLAB_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

LandscapeGrid scan(KernelKind kind, const ModelParams& center, const DatasetBatch& batch,
                   const Direction& d1, const Direction& d2, const ScanOptions& opts) {
  if (opts.r_steps < 1 || opts.s_steps < 1) throw ConfigError("landscape extents must be >= 1");
  if (!std::isfinite(opts.step)) throw ConfigError("landscape step must be finite");
  center.validate();
  check_direction(d1, center.dims);
  check_direction(d2, center.dims);

  LandscapeGrid grid;
  grid.r_steps = opts.r_steps;
  grid.s_steps = opts.s_steps;
  grid.step = opts.step;
  grid.values.resize(opts.r_steps, opts.s_steps);
  grid.flags.assign(static_cast<std::size_t>(opts.r_steps) * opts.s_steps, 0);

  const int r_off = opts.r_steps / 2;
  const int s_off = opts.s_steps / 2;
  auto eval_row = [&](int r) {
    const ModelParams row_base = displace(center, d1, opts.step * (r - r_off));
    for (int s = 0; s < opts.s_steps; ++s) {
      const ModelParams p = displace(row_base, d2, opts.step * (s - s_off));
      double f;
      try {
        f = loss(kind, p, batch);
      } catch (const NumericalError&) {
        f = std::numeric_limits<double>::quiet_NaN();
      }
      grid.values(r, s) = f;
      if (!std::isfinite(f)) grid.flags[static_cast<std::size_t>(r) * opts.s_steps + s] = 1;
    }
  };

  // Rows are dealt round-robin; every cell is a pure evaluation written to its
  // own slot, so the result does not depend on the worker count.
  const int workers = std::min(resolve_threads(opts.threads), opts.r_steps);
  if (workers <= 1) {
    for (int r = 0; r < opts.r_steps; ++r) eval_row(r);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (int r = w; r < opts.r_steps; r += workers) eval_row(r);
      });
    }
    for (auto& t : pool) t.join();
  }
  grid.flagged = static_cast<int>(std::count(grid.flags.begin(), grid.flags.end(), 1));
  return grid;
}

void write_landscape_csv(std::ostream& os, const LandscapeGrid& grid) {
  os << "r,s,loss\n";
  char buf[64];
  for (int r = 0; r < grid.r_steps; ++r) {
    for (int s = 0; s < grid.s_steps; ++s) {
      std::snprintf(buf, sizeof buf, "%.17g", grid.values(r, s));
      os << r << ',' << s << ',' << buf << '\n';
    }
  }
}

}  // namespace attnlab
