#include "bml/core.hpp"

#include <cmath>
#if defined(__GLIBC__)
#include <malloc.h>
#endif
#include <sstream>

namespace bml {

TimeGrid make_grid(double horizon, int intervals) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw ConfigError("time grid: horizon must be positive");
  if (intervals < 1) throw ConfigError("time grid: need at least one interval");
  TimeGrid g;
  g.horizon = horizon;
  g.intervals = intervals;
  g.dt = horizon / intervals;
  g.nodes.resize(intervals + 1);
  for (int i = 0; i < intervals; ++i) g.nodes[i] = (static_cast<double>(i) * horizon) / intervals;
  g.nodes[intervals] = horizon;
  return g;
}

Var apply_diffusion(const FbsdeProblem& p, const Var& t, const Var& x, const Var& y, const Var& z,
                    const Var& dw) {
  if (p.diffusion_times) return p.diffusion_times(t, x, y, z, dw);
  return ad::batched_matvec(p.diffusion(t, x, y, z), dw, p.dim_x, p.dim_w);
}

namespace {

void expect_shape(const char* name, const Var& v, Index rows, Index cols) {
  if (v.empty()) throw ShapeError(name, "returned no value");
  if (v.rows() != rows || v.cols() != cols) {
    std::ostringstream os;
    os << "expected " << rows << "x" << cols << " output, got " << v.rows() << "x" << v.cols();
    throw ShapeError(name, os.str());
  }
}

}  // namespace

void validate_problem(const FbsdeProblem& p) {
  if (p.dim_x < 1 || p.dim_y < 1 || p.dim_w < 1) throw ConfigError("problem dimensions must be positive");
  if (p.x0.size() != p.dim_x) throw ShapeError("x0", "expected length " + std::to_string(p.dim_x));
  if (!(p.horizon > 0.0)) throw ConfigError("problem horizon must be positive");
  if (!p.drift) throw ShapeError("drift (b)", "missing");
  if (!p.diffusion) throw ShapeError("diffusion (sigma)", "missing");
  if (!p.driver) throw ShapeError("driver (f)", "missing");
  if (!p.terminal) throw ShapeError("terminal (g)", "missing");

  const Var t = Var::scalar(0.0);
  const Var x(p.x0.transpose().array());
  const Var y = Var::zeros(1, p.dim_y);
  const Var z = Var::zeros(1, p.dim_y * p.dim_w);
  expect_shape("drift (b)", p.drift(t, x, y, z), 1, p.dim_x);
  expect_shape("diffusion (sigma)", p.diffusion(t, x, y, z), 1, p.dim_x * p.dim_w);
  if (p.diffusion_times)
    expect_shape("diffusion (sigma)", p.diffusion_times(t, x, y, z, Var::zeros(1, p.dim_w)), 1, p.dim_x);
  expect_shape("driver (f)", p.driver(t, x, y, z), 1, p.dim_y);
  expect_shape("terminal (g)", p.terminal(x), 1, p.dim_y);
}

void tune_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace bml
