#pragma once

// Ideal population clustering: the whole-space partition induced by the modes
// of a known density, computed by normalized gradient ascent from every grid
// point.

#include "mslab/models.hpp"
#include "mslab/partition.hpp"

#include <string>

namespace mslab {

struct IdealConfig {
  // Base ascent matrix A = step_factor * s^2 * I, s = model.length_scale().
  double step_factor = 0.5;
  double step_tol = 1e-4;   // in units of sqrt(step_factor) * s
  double merge_tol = 5e-2;  // same units
  int max_iterations = 2000;
  // Limit points closer than this (same units) are joined when the density
  // along the segment between them never dips below (1 - ridge_dip) of the
  // smaller endpoint value. Handles flat ridges along ring segments.
  double connect_radius = 1.0;
  double ridge_dip = 1e-3;
};

struct IdealClustering {
  SpacePartition partition;
  Matrix modes;
  std::string model_name;
  int nonconverged = 0;
  int saddle_restarts = 0;
  bool matches_declared = false;
};

// Normalized gradient ascent y <- y + t A Df(y) / f(y). The multiplier t
// adapts (doubling after clean steps, halving on any density decrease) and
// moves are capped at one unit. Stops once |A Df / f| < step_tol.
AscentOutcome ideal_ascent(const DensityModel& model, const Vector& start, const IdealConfig& cfg);

IdealClustering ideal_clustering(const DensityModel& model, const GridSpec& grid,
                                 const IdealConfig& cfg = {}, int threads = 1);

}  // namespace mslab
