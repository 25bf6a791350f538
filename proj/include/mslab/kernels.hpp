#pragma once

// Gaussian kernel layer: profile, rescaled density K_H, Mahalanobis distance,
// derivative tensors and the gradient roughness constant R(DK).

#include "mslab/types.hpp"

#include <vector>

namespace mslab {

enum class BandwidthClass { Unconstrained, Diagonal, Scalar };

const char* to_string(BandwidthClass c);

// Symmetric positive definite smoothing matrix. The constructor is the single
// place where symmetry and definiteness are checked, so everything downstream
// can take SPD for granted.
class BandwidthMatrix {
 public:
  explicit BandwidthMatrix(const Matrix& entries,
                           BandwidthClass cls = BandwidthClass::Unconstrained);

  static BandwidthMatrix scalar(int d, double h2);
  static BandwidthMatrix diagonal(const Vector& variances);

  int dim() const { return static_cast<int>(entries_.rows()); }
  BandwidthClass cls() const { return cls_; }

  const Matrix& matrix() const { return entries_; }
  const Matrix& inverse() const { return inverse_; }
  // Lower Cholesky factor L with H = L L^T.
  const Matrix& cholesky() const { return lower_; }
  double determinant() const { return det_; }
  double log_determinant() const { return log_det_; }

  // x^T H^{-1} x
  double quadratic_form(const Vector& x) const;

  BandwidthMatrix scaled(double factor) const;

  double operator()(int i, int j) const { return entries_(i, j); }

 private:
  Matrix entries_;
  Matrix inverse_;
  Matrix lower_;
  double det_ = 0.0;
  double log_det_ = 0.0;
  BandwidthClass cls_;
};

namespace gaussian {

// Profile k with K(x) = k(x^T x) / 2, and g = -k'.
double profile(double u, int d);
double profile_derivative_neg(double u, int d);

// Standard d-variate normal density.
double kernel(const Vector& x);

}  // namespace gaussian

// |H|^{-1/2} K(H^{-1/2} x), i.e. the N(0, H) density at x.
double rescaled_kernel(const Vector& x, const BandwidthMatrix& H);

// (x - y)^T H^{-1} (x - y)
double mahalanobis(const Vector& x, const Vector& y, const BandwidthMatrix& H);

// Trace of the Hessian of K_Sigma at x.
double kernel_laplacian(const Vector& x, const BandwidthMatrix& sigma);

// Gradient of K_Sigma at x.
Vector kernel_gradient(const Vector& x, const BandwidthMatrix& sigma);

inline constexpr int kMaxDerivativeOrder = 6;

// Index tables for the Hermite recursion in d dimensions up to a given order.
// Entry idx of an order-m tensor encodes the differentiation sequence
// (s_1, ..., s_m) in base d with s_1 most significant.
class HermiteTable {
 public:
  HermiteTable(int d, int max_order);

  int dim() const { return d_; }
  int max_order() const { return max_order_; }

  // Fills levels[m] (m = 0..order) with the order-m Hermite factors h_S so that
  // D^S K_G(x) = K_G(x) * h_S, given z = G^{-1} x and P = G^{-1}.
  void evaluate(const Vector& z, const Matrix& P, int order,
                std::vector<std::vector<double>>& levels) const;

 private:
  struct Removal {
    int digit;
    int reduced;  // index of the sequence with that position removed
  };
  int d_;
  int max_order_;
  // removals_[m][idx * m + k]: position k of order-m index idx.
  std::vector<std::vector<Removal>> removals_;
};

// All order-th partial derivatives of K_G at x, length d^order, in the
// recursive Kronecker ordering. Supports order 0..6.
Vector gaussian_derivative_tensor(const Vector& x, const BandwidthMatrix& G, int order);

// R(DK) = \int DK DK^T for the standard Gaussian; equals c_d I_d.
Matrix grad_kernel_constant(int d);
double grad_kernel_constant_scalar(int d);

}  // namespace mslab
