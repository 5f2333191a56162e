#pragma once

#include <cstdint>
#include <string>

#include <Eigen/Core>

namespace ikdr {

/**
 * Weights and controls of the relaxed I-KDR objective
 *
 *   sum_i (u_i s_i - 1)^2 + lambda Tr(A'K H'bar H K A) + mu Tr(A' L A)
 *     + tau ||S - A X||^2 + zeta ||X - A'K||^2
 *
 * plus the iteration controls of the outer loop, the ADMM A-step and the
 * simplex QP for the kernel weights.
 */
struct Hyperparams {
    double lambda = 0.1;  ///< class dissimilarity weight
    double mu = 0.1;      ///< locality (Laplacian) weight
    double tau = 10.0;    ///< S = A X coupling
    double zeta = 10.0;   ///< X = A'K coupling
    double rho = 1.0;     ///< ADMM penalty (relative to the problem scale unless rho_scaled is false)
    /// Scale rho to the smooth A-Hessian at the initial kernel (see effective_rho).
    bool rho_scaled = true;
    int k = 2;            ///< embedding dimension
    int max_outer = 50;
    double outer_tol = 1e-5;
    int admm_iters = 100;
    double admm_tol = 1e-6;
    int qp_iters = 500;
    double qp_tol = 1e-10;
    std::uint64_t seed = 0;
    bool exact_x_update = false;

    /// Throws InputError unless 1 <= k <= n and every penalty is usable.
    void validate(Eigen::Index n) const;
};

}  // namespace ikdr
