#pragma once

// Whole-space clusterings represented on a regular grid, and the distance in
// measure between two of them.

#include "mslab/kernels.hpp"
#include "mslab/meanshift.hpp"
#include "mslab/models.hpp"
#include "mslab/types.hpp"

#include <vector>

namespace mslab {

// Regular grid of `resolution` points per coordinate spanning [lo, hi]. Each
// grid point owns the box reaching half-way to its neighbours, so the boxes
// tile the rectangle and boundary boxes are half-width.
struct GridSpec {
  Vector lo;
  Vector hi;
  int resolution = 0;

  GridSpec() = default;
  GridSpec(Vector lo, Vector hi, int resolution);

  int dim() const { return static_cast<int>(lo.size()); }
  long cell_count() const;
  double spacing(int axis) const { return (hi(axis) - lo(axis)) / (resolution - 1); }

  // Grid point of a flat index; the first coordinate varies fastest.
  Vector point(long index) const;
  double cell_volume(long index) const;
  // All grid points, one per row, in flat-index order.
  Matrix points() const;

  GridSpec refined(int factor) const;  // same rectangle, (resolution - 1) * factor + 1 points

  bool operator==(const GridSpec& other) const;
};

struct SpacePartition {
  GridSpec grid;
  std::vector<int> labels;
  std::vector<double> masses;

  SpacePartition() = default;
  // Validates shapes and non-negative masses; relabels to contiguous ids in
  // first-occurrence order.
  SpacePartition(GridSpec grid, std::vector<int> labels, std::vector<double> masses);

  int cluster_count() const;
  double total_mass() const;
  std::vector<double> cluster_masses() const;
};

// Rectangle = extent of the model widened by 5 standard deviations, grown by
// 25% per side until midpoint quadrature shows >= 0.999 mass (at most three
// expansions).
GridSpec build_grid(const DensityModel& model, int resolution);

// density(cell centre) * cell volume, no renormalization.
std::vector<double> cell_masses(const DensityModel& model, const GridSpec& grid, int threads = 1);
std::vector<double> cell_masses(const KdeEvaluator& kde, const GridSpec& grid, int threads = 1);

struct LabelingInfo {
  int nonconverged = 0;
  int below_floor = 0;
  int saddle_restarts = 0;
  int ascent_violations = 0;
  Matrix modes;
};

// Mean shift labels for every grid point. With `masses` empty the cell masses
// come from the kernel density estimate itself.
SpacePartition label_grid(const GridSpec& grid, const DataSet& data, const BandwidthMatrix& H,
                          const MeanShiftConfig& cfg, std::vector<double> masses = {},
                          int threads = 1, LabelingInfo* info = nullptr);

struct DistanceReport {
  double distance = 0.0;
  std::vector<int> matching;  // cluster i of A (padded) -> cluster matching[i] of B (padded)
  Matrix overlap;             // P(A_i and B_j), r x s
  Matrix symmetric_difference;  // P(A_i symdiff B_j), padded to s x s
  double total_mass = 0.0;
};

// The measure P is the cell masses of `a`.
DistanceReport distance_in_measure(const SpacePartition& a, const SpacePartition& b);

}  // namespace mslab
