#pragma once

#include <Eigen/Dense>

namespace fedsamp {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using IntVector = Eigen::VectorXi;
using Index = Eigen::Index;

}  // namespace fedsamp
