#pragma once

#include <cstddef>
#include <vector>

namespace crysi {

struct Assignment {
  // row i is assigned to column col_of_row[i]
  std::vector<std::size_t> col_of_row;
  double cost = 0.0;
};

// Exact minimum-cost perfect matching on a dense n x n cost matrix
// (row-major), Kuhn-Munkres with potentials, O(n^3).
Assignment solve_assignment(const std::vector<double>& cost, std::size_t n);

}  // namespace crysi
