#pragma once

#include <Eigen/Dense>
#include <vector>

namespace scriptcl {

// Minimum-cost assignment for a rectangular cost matrix (Kuhn-Munkres with
// potentials, O(n^2 m)). Returns, for every row, the assigned column or -1
// when there are more rows than columns and the row is left out.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

// Same, maximising total weight.
std::vector<int> solve_max_assignment(const Eigen::MatrixXd& weight);

}  // namespace scriptcl
