#pragma once

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "fracsim/core.hpp"

namespace fracsim {

using SpMat = Eigen::SparseMatrix<double>;
using Triplet = Eigen::Triplet<double>;

// Direct sparse solve with a residual guarantee.
inline Eigen::VectorXd solve_linear_system(const SpMat& A, const Eigen::VectorXd& b) {
    FRACSIM_REQUIRE(A.rows() == A.cols(), "solve_linear_system: matrix must be square");
    FRACSIM_REQUIRE(A.rows() == b.size(), "solve_linear_system: size mismatch");
    Eigen::SparseLU<SpMat> lu;
    lu.analyzePattern(A);
    lu.factorize(A);
    FRACSIM_REQUIRE(lu.info() == Eigen::Success,
                    "solve_linear_system: structural or numerical singularity");
    Eigen::VectorXd x = lu.solve(b);
    const double bn = b.norm();
    const double rel = (A * x - b).norm() / (bn > 0.0 ? bn : 1.0);
    FRACSIM_REQUIRE(std::isfinite(rel) && rel <= 1e-10,
                    "solve_linear_system: residual beyond 1e-10 (singular system?)");
    return x;
}

// Row/column max-abs equilibration (Ruiz sweeps).
inline void equilibrate(const SpMat& A, Eigen::VectorXd& dr, Eigen::VectorXd& dc,
                        int sweeps = 3) {
    const int n = static_cast<int>(A.rows());
    dr = Eigen::VectorXd::Ones(n);
    dc = Eigen::VectorXd::Ones(A.cols());
    for (int s = 0; s < sweeps; ++s) {
        Eigen::VectorXd rmax = Eigen::VectorXd::Zero(n);
        Eigen::VectorXd cmax = Eigen::VectorXd::Zero(A.cols());
        for (int k = 0; k < A.outerSize(); ++k)
            for (SpMat::InnerIterator it(A, k); it; ++it) {
                const double v = std::abs(it.value()) * dr(it.row()) * dc(it.col());
                rmax(it.row()) = std::max(rmax(it.row()), v);
                cmax(it.col()) = std::max(cmax(it.col()), v);
            }
        for (int i = 0; i < n; ++i)
            if (rmax(i) > 0.0) dr(i) /= std::sqrt(rmax(i));
        for (int j = 0; j < A.cols(); ++j)
            if (cmax(j) > 0.0) dc(j) /= std::sqrt(cmax(j));
    }
}

} // namespace fracsim
