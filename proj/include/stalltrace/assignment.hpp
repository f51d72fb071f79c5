#pragma once

#include <vector>

#include <Eigen/Core>

namespace stalltrace {

/// Minimum-cost assignment (Hungarian / Kuhn-Munkres) on a dense rows x cols cost matrix.
/// Returns, per row, the assigned column or -1 when rows outnumber columns.
std::vector<int> solve_assignment(const Eigen::MatrixXd& cost);

}  // namespace stalltrace
