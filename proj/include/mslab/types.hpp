#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace mslab {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Raised when a computation cannot produce a usable number (underflowed
// density, failed factorization of a derived matrix, unreachable mass bound).
// Input validation failures use std::invalid_argument instead.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// n observations in R^d, one per row.
class DataSet {
 public:
  DataSet() = default;
  explicit DataSet(Matrix points);

  int size() const { return static_cast<int>(points_.rows()); }
  int dim() const { return static_cast<int>(points_.cols()); }
  bool empty() const { return points_.rows() == 0; }

  Vector point(int i) const { return points_.row(i).transpose(); }
  const Matrix& points() const { return points_; }

  Vector mean() const;
  // Unbiased sample covariance (divisor n - 1).
  Matrix covariance() const;

  DataSet transformed(const Matrix& linear, const Vector& shift) const;

  bool operator==(const DataSet& other) const { return points_ == other.points_; }

 private:
  Matrix points_;
};

inline void require_dim(const Vector& x, int d, const char* what) {
  if (x.size() != d) {
    throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " +
                                std::to_string(x.size()) + ", expected " + std::to_string(d) + ")");
  }
}

}  // namespace mslab
