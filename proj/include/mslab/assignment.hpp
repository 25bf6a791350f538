#pragma once

#include "mslab/types.hpp"

#include <vector>

namespace mslab {

struct Assignment {
  std::vector<int> column_of_row;  // permutation: row i -> column column_of_row[i]
  double cost = 0.0;
};

// Minimum-cost perfect matching on a square cost matrix (Hungarian method with
// row/column potentials, O(s^3)).
Assignment solve_assignment(const Matrix& cost);

}  // namespace mslab
