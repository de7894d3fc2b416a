#pragma once
// Central-difference gradient verification for scalar-valued functions of one
// tensor. Used by the test suites to validate every backward rule.

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "gega/tensor.hpp"

namespace gega {

struct GradCheckCoord {
  std::size_t index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  double rel_error = 0.0;
};

struct GradCheckReport {
  bool pass = true;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  std::vector<GradCheckCoord> coords;
};

// f builds a scalar output from x on the given tape. The analytic gradient
// comes from one backward pass; the numeric one from (f(x+h)-f(x-h))/(2h) per
// coordinate. Relative error uses a small denominator floor so coordinates
// with near-zero gradient compare against absolute noise instead of blowing
// up.
inline GradCheckReport finite_difference_check(
    const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x,
    double h = 1e-6, double tol = 1e-4) {
  constexpr double kDenomFloor = 1e-2;

  Tensor probe = Tensor::param(x.shape(), x.values());
  Tape tape;
  Tensor y = f(tape, probe);
  if (!y.defined() || y.size() != 1)
    throw TensorError(
        "finite_difference_check: function output must be scalar");
  tape.backward(y);
  std::vector<double> analytic = probe.grad();

  auto eval = [&](const std::vector<double>& vals, std::size_t coord,
                  const char* side) {
    Tensor xv = Tensor::constant(x.shape(), vals);
    Tape t(false);
    const double v = f(t, xv).item();
    if (!std::isfinite(v))
      throw TensorError(
          "finite_difference_check: non-finite value at coordinate " +
          std::to_string(coord) + " (" + side + ")");
    return v;
  };

  GradCheckReport report;
  report.coords.reserve(x.size());
  std::vector<double> vals = x.values();
  for (std::size_t i = 0; i < vals.size(); ++i) {
    const double saved = vals[i];
    vals[i] = saved + h;
    const double fp = eval(vals, i, "+h");
    vals[i] = saved - h;
    const double fm = eval(vals, i, "-h");
    vals[i] = saved;

    GradCheckCoord c;
    c.index = i;
    c.analytic = analytic[i];
    c.numeric = (fp - fm) / (2.0 * h);
    const double denom = std::max(
        {std::fabs(c.analytic), std::fabs(c.numeric), kDenomFloor});
    c.rel_error = std::fabs(c.analytic - c.numeric) / denom;
    if (c.rel_error > report.max_rel_error) {
      report.max_rel_error = c.rel_error;
      report.worst_index = i;
    }
    report.coords.push_back(c);
  }
  report.pass = report.max_rel_error < tol;
  return report;
}

}  // namespace gega
