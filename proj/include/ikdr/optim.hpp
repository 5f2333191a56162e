#pragma once

#include <vector>

#include <Eigen/Dense>

#include "ikdr/hyperparams.hpp"

namespace ikdr {

/// Euclidean projection onto {z >= 0, sum z = 1} (sort-and-threshold).
Eigen::VectorXd project_simplex(const Eigen::VectorXd& x);

/// minimize 0.5 x'Qx + v'x. Q is symmetrized on construction.
struct QpProblem {
    Eigen::MatrixXd Q;
    Eigen::VectorXd v;

    QpProblem() = default;
    QpProblem(const Eigen::MatrixXd& q, Eigen::VectorXd lin);

    double objective(const Eigen::VectorXd& x) const { return 0.5 * x.dot(Q * x) + v.dot(x); }
    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const { return Q * x + v; }
};

struct QpResult {
    Eigen::VectorXd x;
    int iterations = 0;
    double projected_gradient_norm = 0.0;
    bool converged = false;
    /// Objective at x0 and after every accepted step.
    std::vector<double> objective_trace;
};

/// Projected gradient with Armijo backtracking along the projection arc.
/// Never increases the objective; x0 must be feasible.
QpResult solve_simplex_qp(const QpProblem& problem, const Eigen::VectorXd& x0, int max_iter, double tol);

/**
 * Solver for P A + A Q = R with P symmetric (N x N) and Q symmetric PSD
 * (k x k). P is eigendecomposed once; Q can be replaced cheaply. The
 * transformed system decouples into (p_i + q_j) a_ij = r_ij.
 */
class SylvesterSolver {
public:
    explicit SylvesterSolver(const Eigen::MatrixXd& P);
    SylvesterSolver(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q);

    /// Throws NumericalError if P + q_j I is not positive definite for some j.
    void set_right(const Eigen::MatrixXd& Q);
    Eigen::MatrixXd solve(const Eigen::MatrixXd& R) const;

    /// R already rotated into the eigenbases (U' R V); returns U' A V.
    Eigen::MatrixXd solve_rotated(const Eigen::MatrixXd& rotated_rhs) const;

    const Eigen::MatrixXd& left_vectors() const { return U_; }
    const Eigen::MatrixXd& right_vectors() const { return V_; }
    const Eigen::VectorXd& left_values() const { return p_; }
    const Eigen::VectorXd& right_values() const { return q_; }

private:
    Eigen::MatrixXd U_;
    Eigen::VectorXd p_;
    Eigen::MatrixXd V_;
    Eigen::VectorXd q_;
    Eigen::MatrixXd inv_denominator_;
};

Eigen::MatrixXd solve_sylvester(const Eigen::MatrixXd& P, const Eigen::MatrixXd& Q, const Eigen::MatrixXd& R);

/// ADMM iterate of the A-subproblem. Delta pairs with A = A_plus, delta with A'1 = 1.
struct AdmmState {
    Eigen::MatrixXd A;
    Eigen::MatrixXd A_plus;
    Eigen::MatrixXd Delta;
    Eigen::VectorXd delta;
    double rho = 1.0;

    /// A = A_plus = A0, zero multipliers.
    static AdmmState start(const Eigen::MatrixXd& A0, double rho);
};

struct AdmmTraceRow {
    int iteration;
    double residual_eq;   ///< ||A'1 - 1||_inf
    double residual_pos;  ///< ||A - A_plus||_inf
    double objective;     ///< smooth part J_A at A
};

struct AdmmReport {
    int iterations = 0;
    double residual_eq = 0.0;
    double residual_pos = 0.0;
    bool converged = false;
};

/**
 * The smooth A-subproblem
 *
 *   J_A(A) = lambda/2 Tr(A'K M K A) + mu Tr(A' L A) + tau ||S - A X||^2 + zeta ||X - A'K||^2
 *
 * with M = H'bar H + H' Hbar, L the Laplacian of K, and its augmented
 * Lagrangian. Stationarity of L_rho in A is the Sylvester equation
 * P A + A Qr = R with
 *   P  = lambda K M K + 2 mu L + 2 zeta K K + rho I + rho 11'
 *   Qr = 2 tau X X'
 *   R  = 2 tau S X' + 2 zeta K X' + rho A_plus - Delta + rho 1 1' - 1 delta'.
 * P depends only on the kernel, so one instance serves every outer
 * iteration of a single-kernel fit.
 */
class AStep {
public:
    AStep(const Eigen::MatrixXd& K_hat, const Eigen::MatrixXd& K_tilde, const Eigen::MatrixXd& M_dis,
          const Hyperparams& hyper);

    /// Fix S and X for the following solves.
    void set_targets(const Eigen::MatrixXd& S, const Eigen::MatrixXd& X);

    /// argmin_A L_rho(A, A_plus, Delta, delta).
    Eigen::MatrixXd solve(const AdmmState& state) const;

    double smooth_objective(const Eigen::MatrixXd& A) const;
    double lagrangian(const Eigen::MatrixXd& A, const AdmmState& state) const;
    /// Gradient of L_rho at A: P A + A Qr - R.
    Eigen::MatrixXd lagrangian_gradient(const Eigen::MatrixXd& A, const AdmmState& state) const;
    /// Gradient of J_A alone.
    Eigen::MatrixXd smooth_gradient(const Eigen::MatrixXd& A) const;

    const Eigen::MatrixXd& P() const { return P_; }
    const Eigen::MatrixXd& Qr() const { return Qr_; }
    Eigen::MatrixXd rhs(const AdmmState& state) const;

    /// Runs up to `iters` ADMM iterations from `state` (updated in place).
    AdmmReport run(AdmmState& state, int iters, double tol, std::vector<AdmmTraceRow>* trace = nullptr) const;

private:
    Eigen::MatrixXd K_;
    Eigen::MatrixXd L_;
    Eigen::MatrixXd M_;
    Hyperparams hyper_;
    Eigen::MatrixXd P_;
    SylvesterSolver solver_;
    Eigen::MatrixXd S_;
    Eigen::MatrixXd X_;
    Eigen::MatrixXd Qr_;
    Eigen::MatrixXd R0_;
    Eigen::MatrixXd rotated_R0_;
    Eigen::RowVectorXd rotated_ones_;  // 1'U
    Eigen::MatrixXd Ut_;
};

/// One ADMM pass of the A-subproblem (builds the A-step operator from scratch).
AdmmReport admm_update_A(AdmmState& state, const Eigen::MatrixXd& K_hat, const Eigen::MatrixXd& K_tilde,
                         const Eigen::MatrixXd& M_dis, const Eigen::MatrixXd& S, const Eigen::MatrixXd& X,
                         const Hyperparams& hyper);

}  // namespace ikdr
