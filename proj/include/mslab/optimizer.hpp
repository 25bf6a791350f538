#pragma once

#include "mslab/types.hpp"

#include <functional>
#include <limits>

namespace mslab {

struct SimplexSettings {
  double initial_step = 0.5;
  Vector initial_steps;  // per-coordinate; overrides initial_step when non-empty
  double x_tol = 1e-4;   // max distance of simplex vertices from the best one
  double f_tol = 1e-8;   // relative spread of function values
  int max_evaluations = 2000;
  double target = -std::numeric_limits<double>::infinity();  // stop once the best value reaches it
};

struct SimplexResult {
  Vector x;
  double value = 0.0;
  int evaluations = 0;
  bool converged = false;
};

// Nelder-Mead downhill simplex (standard coefficients 1, 2, 1/2, 1/2).
// Non-finite objective values are treated as +infinity.
SimplexResult nelder_mead(const std::function<double(const Vector&)>& objective, const Vector& start,
                          const SimplexSettings& settings = {});

// Brent's root finder on [a, b]; f(a) and f(b) must differ in sign.
double brent_root(const std::function<double(double)>& f, double a, double b, double tol,
                  int max_iterations = 200);

}  // namespace mslab
