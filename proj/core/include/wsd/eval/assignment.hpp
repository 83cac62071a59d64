#pragma once

#include <vector>

namespace wsd::eval {

/// Minimum-cost perfect assignment on an n x n row-major cost matrix
/// (Hungarian method with potentials, O(n^3)). Returns the column of each row.
std::vector<int> solve_assignment(const std::vector<double>& cost, int n);

}  // namespace wsd::eval
