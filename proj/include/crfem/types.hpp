#pragma once

#include <complex>

#include <Eigen/Core>
#include <Eigen/SparseCore>

namespace crfem {

using Complex = std::complex<double>;

using Vec2 = Eigen::Vector2d;
using CVec2 = Eigen::Vector2cd;

using Vector = Eigen::VectorXd;
using CVector = Eigen::VectorXcd;
using CMatrix = Eigen::MatrixXcd;
using SparseMatrix = Eigen::SparseMatrix<Complex>;

} // namespace crfem
