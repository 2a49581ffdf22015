#pragma once

#include <Eigen/Dense>

namespace optima {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

}  // namespace optima
