#include "mslab/kernels.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace mslab {

const char* to_string(BandwidthClass c) {
  switch (c) {
    case BandwidthClass::Unconstrained: return "unconstrained";
    case BandwidthClass::Diagonal: return "diagonal";
    case BandwidthClass::Scalar: return "scalar";
  }
  return "?";
}

BandwidthMatrix::BandwidthMatrix(const Matrix& entries, BandwidthClass cls) : cls_(cls) {
  const auto d = entries.rows();
  if (d == 0 || entries.cols() != d) {
    throw std::invalid_argument("bandwidth matrix must be square and non-empty");
  }
  if (!entries.allFinite()) {
    throw std::invalid_argument("bandwidth matrix has non-finite entries");
  }
  const double scale = entries.cwiseAbs().maxCoeff();
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = 0; j < i; ++j) {
      if (std::abs(entries(i, j) - entries(j, i)) > 1e-12 * scale) {
        throw std::invalid_argument("bandwidth matrix is not symmetric");
      }
    }
  }
  entries_ = entries.triangularView<Eigen::Lower>();
  entries_.triangularView<Eigen::StrictlyUpper>() = entries_.transpose();

  if (cls != BandwidthClass::Unconstrained) {
    for (Eigen::Index i = 0; i < d; ++i) {
      for (Eigen::Index j = 0; j < d; ++j) {
        if (i != j && entries_(i, j) != 0.0) {
          throw std::invalid_argument("diagonal bandwidth has non-zero off-diagonal entries");
        }
      }
    }
    if (cls == BandwidthClass::Scalar) {
      for (Eigen::Index i = 1; i < d; ++i) {
        if (entries_(i, i) != entries_(0, 0)) {
          throw std::invalid_argument("scalar bandwidth must be a multiple of the identity");
        }
      }
    }
  }

  Eigen::LLT<Matrix> llt(entries_);
  if (llt.info() != Eigen::Success) {
    throw std::invalid_argument("bandwidth matrix is not positive definite");
  }
  lower_ = llt.matrixL();
  const Vector diag = lower_.diagonal();
  if ((diag.array() <= 0.0).any()) {
    throw std::invalid_argument("bandwidth matrix is not positive definite");
  }
  log_det_ = 2.0 * diag.array().log().sum();
  det_ = std::exp(log_det_);
  inverse_ = llt.solve(Matrix::Identity(d, d));
  inverse_ = 0.5 * (inverse_ + inverse_.transpose()).eval();
}

BandwidthMatrix BandwidthMatrix::scalar(int d, double h2) {
  return BandwidthMatrix(h2 * Matrix::Identity(d, d), BandwidthClass::Scalar);
}

BandwidthMatrix BandwidthMatrix::diagonal(const Vector& variances) {
  return BandwidthMatrix(variances.asDiagonal().toDenseMatrix(), BandwidthClass::Diagonal);
}

double BandwidthMatrix::quadratic_form(const Vector& x) const {
  require_dim(x, dim(), "quadratic_form");
  const Vector w = lower_.triangularView<Eigen::Lower>().solve(x);
  return w.squaredNorm();
}

BandwidthMatrix BandwidthMatrix::scaled(double factor) const {
  return BandwidthMatrix(factor * entries_, cls_);
}

namespace gaussian {

namespace {
double normalizer(int d) { return std::pow(2.0 * std::numbers::pi, -0.5 * d); }
}  // namespace

double profile(double u, int d) { return 2.0 * normalizer(d) * std::exp(-0.5 * u); }

double profile_derivative_neg(double u, int d) { return normalizer(d) * std::exp(-0.5 * u); }

double kernel(const Vector& x) {
  const int d = static_cast<int>(x.size());
  return normalizer(d) * std::exp(-0.5 * x.squaredNorm());
}

}  // namespace gaussian

double rescaled_kernel(const Vector& x, const BandwidthMatrix& H) {
  require_dim(x, H.dim(), "rescaled_kernel");
  const int d = H.dim();
  const double q = H.quadratic_form(x);
  return std::exp(-0.5 * (q + H.log_determinant() + d * std::log(2.0 * std::numbers::pi)));
}

double mahalanobis(const Vector& x, const Vector& y, const BandwidthMatrix& H) {
  require_dim(x, H.dim(), "mahalanobis");
  require_dim(y, H.dim(), "mahalanobis");
  return H.quadratic_form(x - y);
}

double kernel_laplacian(const Vector& x, const BandwidthMatrix& sigma) {
  require_dim(x, sigma.dim(), "kernel_laplacian");
  const Vector z = sigma.inverse() * x;
  return rescaled_kernel(x, sigma) * (z.squaredNorm() - sigma.inverse().trace());
}

Vector kernel_gradient(const Vector& x, const BandwidthMatrix& sigma) {
  require_dim(x, sigma.dim(), "kernel_gradient");
  return -rescaled_kernel(x, sigma) * (sigma.inverse() * x);
}

HermiteTable::HermiteTable(int d, int max_order) : d_(d), max_order_(max_order) {
  if (d < 1) throw std::invalid_argument("HermiteTable: dimension must be positive");
  if (max_order < 0 || max_order > kMaxDerivativeOrder) {
    throw std::invalid_argument("derivative order " + std::to_string(max_order) +
                                " unsupported (max " + std::to_string(kMaxDerivativeOrder) + ")");
  }
  removals_.resize(max_order + 1);
  int size = 1;
  for (int m = 1; m <= max_order; ++m) {
    size *= d;
    auto& table = removals_[m];
    table.resize(static_cast<std::size_t>(size) * m);
    std::vector<int> digits(m);
    for (int idx = 0; idx < size; ++idx) {
      int rest = idx;
      for (int k = m - 1; k >= 0; --k) {
        digits[k] = rest % d;
        rest /= d;
      }
      for (int k = 0; k < m; ++k) {
        int reduced = 0;
        for (int q = 0; q < m; ++q) {
          if (q != k) reduced = reduced * d + digits[q];
        }
        table[static_cast<std::size_t>(idx) * m + k] = {digits[k], reduced};
      }
    }
  }
}

void HermiteTable::evaluate(const Vector& z, const Matrix& P, int order,
                            std::vector<std::vector<double>>& levels) const {
  if (order > max_order_) throw std::invalid_argument("HermiteTable: order exceeds table");
  levels.resize(order + 1);
  levels[0].assign(1, 1.0);
  int size = 1;
  for (int m = 1; m <= order; ++m) {
    size *= d_;
    auto& cur = levels[m];
    cur.resize(size);
    const auto& prev = levels[m - 1];
    const auto& table = removals_[m];
    // Sequence idx = (S, j) with j the last coordinate:
    //   h_{S,j} = -z_j h_S - sum_{k in S} P_{j, s_k} h_{S \ s_k}
    for (int idx = 0; idx < size; ++idx) {
      const auto* rem = &table[static_cast<std::size_t>(idx) * m];
      const int j = rem[m - 1].digit;
      const int parent = rem[m - 1].reduced;
      double value = -z(j) * prev[parent];
      if (m >= 2) {
        const auto& prev2 = levels[m - 2];
        const auto* rem_parent = &removals_[m - 1][static_cast<std::size_t>(parent) * (m - 1)];
        for (int k = 0; k < m - 1; ++k) {
          value -= P(j, rem_parent[k].digit) * prev2[rem_parent[k].reduced];
        }
      }
      cur[idx] = value;
    }
  }
}

Vector gaussian_derivative_tensor(const Vector& x, const BandwidthMatrix& G, int order) {
  require_dim(x, G.dim(), "gaussian_derivative_tensor");
  if (order < 0 || order > kMaxDerivativeOrder) {
    throw std::invalid_argument("derivative order " + std::to_string(order) +
                                " unsupported (max " + std::to_string(kMaxDerivativeOrder) + ")");
  }
  const HermiteTable table(G.dim(), order);
  const Vector z = G.inverse() * x;
  std::vector<std::vector<double>> levels;
  table.evaluate(z, G.inverse(), order, levels);
  const double base = rescaled_kernel(x, G);
  const auto& top = levels[order];
  Vector out(static_cast<Eigen::Index>(top.size()));
  for (std::size_t i = 0; i < top.size(); ++i) out(static_cast<Eigen::Index>(i)) = base * top[i];
  return out;
}

double grad_kernel_constant_scalar(int d) {
  if (d < 1) throw std::invalid_argument("grad_kernel_constant: dimension must be positive");
  // \int x_1^2 phi(x)^2 dx = (2 pi)^{-d} pi^{d/2} / 2
  static const auto cache = [] {
    std::array<double, 33> values{};
    for (int k = 1; k < static_cast<int>(values.size()); ++k) {
      values[k] = 1.0 / (std::pow(2.0, k + 1) * std::pow(std::numbers::pi, 0.5 * k));
    }
    return values;
  }();
  if (d < static_cast<int>(cache.size())) return cache[d];
  return 1.0 / (std::pow(2.0, d + 1) * std::pow(std::numbers::pi, 0.5 * d));
}

Matrix grad_kernel_constant(int d) {
  return grad_kernel_constant_scalar(d) * Matrix::Identity(d, d);
}

}  // namespace mslab
