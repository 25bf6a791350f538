#pragma once

// Shared machinery for modal clustering: run an ascent from every start point,
// merge the limit points into modes and label the starts. Used both for the
// data-based mean shift and for the ideal clustering of a known density.

#include "mslab/types.hpp"

#include <functional>
#include <optional>
#include <vector>

namespace mslab {

struct AscentOutcome {
  Vector end;
  double log_density = 0.0;  // at `end`
  int iterations = 0;
  bool converged = false;
  bool ascent = true;        // density sequence was non-decreasing
  bool below_floor = false;  // start point had density under the floor
};

struct ModalProblem {
  std::function<AscentOutcome(const Vector& start)> ascend;
  // Distances between limit points are measured as ||whitening * (a - b)||.
  Matrix whitening;
  double merge_tol = 1e-2;

  // Returns an ascent direction (original coordinates, unit length in the
  // whitened metric) when `point` is a saddle rather than a maximum.
  std::function<std::optional<Vector>(const Vector& point)> unstable_direction;
  // Whitened length of the nudge applied before re-ascending off a saddle.
  double escape_step = 1e-3;

  // Extra linkage for limit points closer than connect_radius that belong to
  // different groups: joined when connected(a, b) holds.
  std::function<bool(const Vector&, const Vector&)> connected;
  double connect_radius = 0.0;
};

struct ModalResult {
  std::vector<AscentOutcome> outcomes;
  Matrix modes;  // m x d, one per cluster, ordered by first occurrence
  std::vector<int> labels;
  int saddle_restarts = 0;
};

ModalResult modal_cluster(const Matrix& starts, const ModalProblem& problem, int threads);

// Single-linkage groups of the rows of `points` at whitened distance < tol.
// Group ids are canonical: numbered by first occurrence in row order.
std::vector<int> single_linkage(const Matrix& points, const Matrix& whitening, double tol);

}  // namespace mslab
