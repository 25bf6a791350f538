#include "mslab/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace mslab {

namespace {

double sanitize(double v) { return std::isfinite(v) ? v : std::numeric_limits<double>::infinity(); }

}  // namespace

SimplexResult nelder_mead(const std::function<double(const Vector&)>& objective, const Vector& start,
                          const SimplexSettings& settings) {
  const int p = static_cast<int>(start.size());
  if (p == 0) throw std::invalid_argument("nelder_mead: empty parameter vector");
  SimplexResult out;
  auto eval = [&](const Vector& x) {
    ++out.evaluations;
    return sanitize(objective(x));
  };

  std::vector<Vector> vertex(p + 1, start);
  std::vector<double> value(p + 1);
  if (settings.initial_steps.size() != 0 && settings.initial_steps.size() != p) {
    throw std::invalid_argument("nelder_mead: initial_steps has the wrong length");
  }
  for (int k = 0; k < p; ++k) {
    vertex[k + 1](k) += settings.initial_steps.size() ? settings.initial_steps(k) : settings.initial_step;
  }
  for (int k = 0; k <= p; ++k) value[k] = eval(vertex[k]);

  std::vector<int> order(p + 1);
  for (;;) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return value[a] < value[b]; });
    const int best = order.front();
    const int worst = order.back();
    const int second = order[p - 1];

    double spread_x = 0.0;
    for (int k = 0; k <= p; ++k) spread_x = std::max(spread_x, (vertex[k] - vertex[best]).cwiseAbs().maxCoeff());
    const double spread_f = std::abs(value[worst] - value[best]);
    if (value[best] <= settings.target) {
      out.converged = true;
      break;
    }
    if (std::isfinite(value[best]) && spread_x <= settings.x_tol &&
        spread_f <= settings.f_tol * (std::abs(value[best]) + 1e-300)) {
      out.converged = true;
      break;
    }
    if (out.evaluations >= settings.max_evaluations) break;

    Vector centroid = Vector::Zero(p);
    for (int k = 0; k <= p; ++k) {
      if (k != worst) centroid += vertex[k];
    }
    centroid /= p;

    const Vector reflected = centroid + (centroid - vertex[worst]);
    const double f_reflected = eval(reflected);
    if (f_reflected < value[best]) {
      const Vector expanded = centroid + 2.0 * (centroid - vertex[worst]);
      const double f_expanded = eval(expanded);
      if (f_expanded < f_reflected) {
        vertex[worst] = expanded;
        value[worst] = f_expanded;
      } else {
        vertex[worst] = reflected;
        value[worst] = f_reflected;
      }
      continue;
    }
    if (f_reflected < value[second]) {
      vertex[worst] = reflected;
      value[worst] = f_reflected;
      continue;
    }
    const bool outside = f_reflected < value[worst];
    const Vector contracted = outside ? Vector(centroid + 0.5 * (reflected - centroid))
                                      : Vector(centroid + 0.5 * (vertex[worst] - centroid));
    const double f_contracted = eval(contracted);
    if (f_contracted < std::min(f_reflected, value[worst])) {
      vertex[worst] = contracted;
      value[worst] = f_contracted;
      continue;
    }
    for (int k = 0; k <= p; ++k) {
      if (k == best) continue;
      vertex[k] = vertex[best] + 0.5 * (vertex[k] - vertex[best]);
      value[k] = eval(vertex[k]);
    }
  }

  const int best = static_cast<int>(std::min_element(value.begin(), value.end()) - value.begin());
  out.x = vertex[best];
  out.value = value[best];
  return out;
}

double brent_root(const std::function<double(double)>& f, double a, double b, double tol,
                  int max_iterations) {
  double fa = f(a), fb = f(b);
  if (!(std::isfinite(fa) && std::isfinite(fb)) || fa * fb > 0.0) {
    throw NumericalError("brent_root: interval does not bracket a root");
  }
  if (fa == 0.0) return a;
  if (fb == 0.0) return b;
  double c = a, fc = fa, d = b - a, e = d;
  for (int it = 0; it < max_iterations; ++it) {
    if (fb * fc > 0.0) {
      c = a;
      fc = fa;
      d = e = b - a;
    }
    if (std::abs(fc) < std::abs(fb)) {
      a = b;
      b = c;
      c = a;
      fa = fb;
      fb = fc;
      fc = fa;
    }
    const double tol1 = 2.0 * std::numeric_limits<double>::epsilon() * std::abs(b) + 0.5 * tol;
    const double xm = 0.5 * (c - b);
    if (std::abs(xm) <= tol1 || fb == 0.0) return b;
    if (std::abs(e) >= tol1 && std::abs(fa) > std::abs(fb)) {
      double p, q, r;
      const double s = fb / fa;
      if (a == c) {
        p = 2.0 * xm * s;
        q = 1.0 - s;
      } else {
        q = fa / fc;
        r = fb / fc;
        p = s * (2.0 * xm * q * (q - r) - (b - a) * (r - 1.0));
        q = (q - 1.0) * (r - 1.0) * (s - 1.0);
      }
      if (p > 0.0) q = -q;
      p = std::abs(p);
      if (2.0 * p < std::min(3.0 * xm * q - std::abs(tol1 * q), std::abs(e * q))) {
        e = d;
        d = p / q;
      } else {
        d = xm;
        e = d;
      }
    } else {
      d = xm;
      e = d;
    }
    a = b;
    fa = fb;
    b += std::abs(d) > tol1 ? d : (xm > 0.0 ? tol1 : -tol1);
    fb = f(b);
  }
  return b;
}

}  // namespace mslab
