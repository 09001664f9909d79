#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace percmap {

// Minimum-cost one-to-one assignment on a dense rows x cols cost matrix
// (row-major). Returns, for every row, the assigned column or -1; exactly
// min(rows, cols) rows are assigned. O(n^2 m) shortest augmenting paths with
// potentials.
std::vector<int> solve_assignment(std::span<const double> cost, std::size_t rows, std::size_t cols);

}  // namespace percmap
