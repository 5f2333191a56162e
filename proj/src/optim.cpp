#include "ikdr/optim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "ikdr/error.hpp"

namespace ikdr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

VectorXd project_simplex(const VectorXd& x) {
    const Index n = x.size();
    if (n == 0) return x;
    VectorXd sorted = x;
    std::sort(sorted.data(), sorted.data() + n, std::greater<>());
    double cumulative = 0.0;
    double theta = 0.0;
    for (Index j = 0; j < n; ++j) {
        cumulative += sorted(j);
        const double candidate = (cumulative - 1.0) / static_cast<double>(j + 1);
        if (sorted(j) - candidate > 0.0) theta = candidate;
    }
    VectorXd z = (x.array() - theta).max(0.0);
    const double total = z.sum();
    if (total > 0.0) {
        z /= total;
    } else {
        Index best = 0;
        x.maxCoeff(&best);
        z.setZero();
        z(best) = 1.0;
    }
    return z;
}

QpProblem::QpProblem(const MatrixXd& q, VectorXd lin) : Q(0.5 * (q + q.transpose())), v(std::move(lin)) {
    if (Q.rows() != Q.cols() || Q.rows() != v.size()) throw InputError("QpProblem: inconsistent dimensions");
}

QpResult solve_simplex_qp(const QpProblem& problem, const VectorXd& x0, int max_iter, double tol) {
    const Index n = problem.v.size();
    if (x0.size() != n) throw InputError("solve_simplex_qp: x0 has wrong length");

    QpResult result;
    result.x = x0;
    double f = problem.objective(result.x);
    if (!std::isfinite(f)) throw NumericalError("simplex QP: non-finite objective at the starting point");
    result.objective_trace.push_back(f);
    if (n == 1) {
        result.converged = true;
        return result;
    }

    const double curvature = Eigen::SelfAdjointEigenSolver<MatrixXd>(problem.Q, Eigen::EigenvaluesOnly)
                                 .eigenvalues()
                                 .cwiseAbs()
                                 .maxCoeff();
    const double reference_step = curvature > 0.0 ? 1.0 / curvature : 1.0;
    double step = reference_step;
    constexpr double armijo = 1e-4;

    for (int it = 0; it < max_iter; ++it) {
        const VectorXd g = problem.gradient(result.x);
        result.projected_gradient_norm =
            (result.x - project_simplex(result.x - reference_step * g)).lpNorm<Eigen::Infinity>() / reference_step;
        if (result.projected_gradient_norm <= tol) {
            result.converged = true;
            break;
        }
        bool accepted = false;
        bool backtracked = false;
        for (int ls = 0; ls < 60; ++ls) {
            const VectorXd candidate = project_simplex(result.x - step * g);
            const double fc = problem.objective(candidate);
            if (!std::isfinite(fc)) throw NumericalError("simplex QP: non-finite objective during line search");
            if (fc <= f + armijo * g.dot(candidate - result.x) && fc <= f) {
                const bool moved = (candidate - result.x).lpNorm<Eigen::Infinity>() > 0.0;
                result.x = candidate;
                f = fc;
                accepted = moved;
                break;
            }
            step *= 0.5;
            backtracked = true;
        }
        result.iterations = it + 1;
        if (!accepted) {
            // No representable descent step left: the iterate is stationary to working precision.
            result.converged = true;
            break;
        }
        result.objective_trace.push_back(f);
        if (!backtracked) step = std::min(step * 2.0, 1e12 * reference_step);
    }
    return result;
}

SylvesterSolver::SylvesterSolver(const MatrixXd& P) {
    if (P.rows() != P.cols()) throw InputError("Sylvester: P must be square");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(P);
    if (eig.info() != Eigen::Success) throw NumericalError("Sylvester: eigendecomposition of P failed");
    U_ = eig.eigenvectors();
    p_ = eig.eigenvalues();
}

SylvesterSolver::SylvesterSolver(const MatrixXd& P, const MatrixXd& Q) : SylvesterSolver(P) { set_right(Q); }

void SylvesterSolver::set_right(const MatrixXd& Q) {
    if (Q.rows() != Q.cols()) throw InputError("Sylvester: Q must be square");
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Q);
    if (eig.info() != Eigen::Success) throw NumericalError("Sylvester: eigendecomposition of Q failed");
    V_ = eig.eigenvectors();
    q_ = eig.eigenvalues();
    const Index n = p_.size();
    const Index k = q_.size();
    inv_denominator_.resize(n, k);
    const double scale = std::max({1.0, p_.cwiseAbs().maxCoeff(), q_.size() ? q_.cwiseAbs().maxCoeff() : 0.0});
    const double floor = 1e-13 * scale;
    double smallest = std::numeric_limits<double>::infinity();
    for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i < n; ++i) {
            const double d = p_(i) + q_(j);
            smallest = std::min(smallest, d);
            inv_denominator_(i, j) = 1.0 / d;
        }
    }
    if (!(smallest > floor)) {
        std::ostringstream msg;
        msg << "Sylvester: operator is not positive definite (min eigenvalue of P = " << p_.minCoeff()
            << ", min eigenvalue of Q = " << q_.minCoeff() << ", min combined = " << smallest
            << "); increase rho or reduce lambda";
        throw NumericalError(msg.str());
    }
}

MatrixXd SylvesterSolver::solve_rotated(const MatrixXd& rotated_rhs) const {
    return rotated_rhs.cwiseProduct(inv_denominator_);
}

MatrixXd SylvesterSolver::solve(const MatrixXd& R) const {
    if (R.rows() != U_.rows() || R.cols() != V_.rows()) throw InputError("Sylvester: R has wrong shape");
    const MatrixXd rotated = U_.transpose() * R * V_;
    return U_ * solve_rotated(rotated) * V_.transpose();
}

MatrixXd solve_sylvester(const MatrixXd& P, const MatrixXd& Q, const MatrixXd& R) {
    return SylvesterSolver(P, Q).solve(R);
}

AdmmState AdmmState::start(const MatrixXd& A0, double rho) {
    AdmmState s;
    s.A = A0;
    s.A_plus = A0.cwiseMax(0.0);
    s.Delta = MatrixXd::Zero(A0.rows(), A0.cols());
    s.delta = VectorXd::Zero(A0.cols());
    s.rho = rho;
    return s;
}

namespace {

MatrixXd assemble_p(const MatrixXd& K, const MatrixXd& L, const MatrixXd& M, const Hyperparams& h) {
    const Index n = K.rows();
    MatrixXd P = 2.0 * h.mu * L;
    if (h.lambda != 0.0) P.noalias() += h.lambda * (K * (M * K));
    if (h.zeta != 0.0) P.noalias() += 2.0 * h.zeta * (K * K);
    P.diagonal().array() += h.rho;
    P.array() += h.rho;
    (void)n;
    return 0.5 * (P + P.transpose());
}

}  // namespace

AStep::AStep(const MatrixXd& K_hat, const MatrixXd& K_tilde, const MatrixXd& M_dis, const Hyperparams& hyper)
    : K_(K_hat), L_(K_tilde), M_(M_dis), hyper_(hyper), P_(assemble_p(K_hat, K_tilde, M_dis, hyper)), solver_(P_) {
    if (hyper.rho <= 0.0) throw InputError("ADMM penalty rho must be positive");
    rotated_ones_ = VectorXd::Ones(K_.rows()).transpose() * solver_.left_vectors();
    Ut_ = solver_.left_vectors().transpose();
}

void AStep::set_targets(const MatrixXd& S, const MatrixXd& X) {
    const Index n = K_.rows();
    if (S.rows() != n || S.cols() != n || X.cols() != n) throw InputError("A-step: S or X has wrong shape");
    S_ = S;
    X_ = X;
    Qr_ = 2.0 * hyper_.tau * (X * X.transpose());
    Qr_ = 0.5 * (Qr_ + Qr_.transpose());
    solver_.set_right(Qr_);
    const MatrixXd Xt = X.transpose();
    R0_ = 2.0 * hyper_.tau * (S * Xt) + 2.0 * hyper_.zeta * (K_ * Xt);
    R0_.array() += hyper_.rho;
    rotated_R0_ = solver_.left_vectors().transpose() * R0_ * solver_.right_vectors();
}

MatrixXd AStep::rhs(const AdmmState& state) const {
    MatrixXd R = R0_ + state.rho * state.A_plus - state.Delta;
    R.rowwise() -= state.delta.transpose();
    return R;
}

MatrixXd AStep::solve(const AdmmState& state) const {
    const MatrixXd& U = solver_.left_vectors();
    const MatrixXd& V = solver_.right_vectors();
    const Index k = V.rows();
    // Column-wise products against a stored U' are much faster than a thin GEMM here.
    const MatrixXd c = (state.rho * state.A_plus - state.Delta) * V;
    MatrixXd rotated = rotated_R0_;
    for (Index j = 0; j < k; ++j) rotated.col(j).noalias() += Ut_ * c.col(j);
    rotated.noalias() -= rotated_ones_.transpose() * (state.delta.transpose() * V);
    const MatrixXd w = solver_.solve_rotated(rotated) * V.transpose();
    MatrixXd A(U.rows(), k);
    for (Index j = 0; j < k; ++j) A.col(j).noalias() = U * w.col(j);
    return A;
}

double AStep::smooth_objective(const MatrixXd& A) const {
    const MatrixXd KA = K_ * A;
    const double dis = 0.5 * (KA.transpose() * M_ * KA).trace();
    const double ip = (A.transpose() * L_ * A).trace();
    const double s_pen = (S_ - A * X_).squaredNorm();
    const double x_pen = (X_ - A.transpose() * K_).squaredNorm();
    return hyper_.lambda * dis + hyper_.mu * ip + hyper_.tau * s_pen + hyper_.zeta * x_pen;
}

double AStep::lagrangian(const MatrixXd& A, const AdmmState& state) const {
    const VectorXd col_sums = A.colwise().sum().transpose();
    const VectorXd eq = col_sums.array() - 1.0;
    return smooth_objective(A) + 0.5 * state.rho * (A - state.A_plus).squaredNorm() + 0.5 * state.rho * eq.squaredNorm() +
           (state.Delta.cwiseProduct(A - state.A_plus)).sum() + state.delta.dot(eq);
}

MatrixXd AStep::lagrangian_gradient(const MatrixXd& A, const AdmmState& state) const {
    return P_ * A + A * Qr_ - rhs(state);
}

MatrixXd AStep::smooth_gradient(const MatrixXd& A) const {
    const MatrixXd KA = K_ * A;
    return hyper_.lambda * (K_ * (M_ * KA)) + 2.0 * hyper_.mu * (L_ * A) -
           2.0 * hyper_.tau * (S_ - A * X_) * X_.transpose() + 2.0 * hyper_.zeta * (K_ * (KA - X_.transpose()));
}

AdmmReport AStep::run(AdmmState& state, int iters, double tol, std::vector<AdmmTraceRow>* trace) const {
    AdmmReport report;
    const double rho = state.rho;
    int growing = 0;
    double previous = std::numeric_limits<double>::infinity();
    double streak_start = 0.0;
    double first = 0.0;
    for (int t = 0; t < iters; ++t) {
        state.A = solve(state);
        state.A_plus = (state.A + state.Delta / rho).cwiseMax(0.0);
        state.Delta += rho * (state.A - state.A_plus);
        const VectorXd eq = state.A.colwise().sum().transpose().array() - 1.0;
        state.delta += rho * eq;

        report.iterations = t + 1;
        report.residual_eq = eq.lpNorm<Eigen::Infinity>();
        report.residual_pos = (state.A - state.A_plus).lpNorm<Eigen::Infinity>();
        if (!state.A.allFinite()) throw NumericalError("ADMM: non-finite iterate at iteration " + std::to_string(t + 1));
        if (trace) trace->push_back({t + 1, report.residual_eq, report.residual_pos, smooth_objective(state.A)});

        if (report.residual_eq <= tol && report.residual_pos <= tol) {
            report.converged = true;
            break;
        }
        const double residual = std::max(report.residual_eq, report.residual_pos);
        if (t == 0) first = residual;
        if (residual > previous && residual > tol) {
            if (growing == 0) streak_start = previous;
            ++growing;
        } else {
            growing = 0;
        }
        previous = residual;
        // Creep and oscillation are left to the iteration cap; divergence is sustained
        // growth by 10x that also climbs above where this pass started.
        if (growing >= 20 && residual >= 10.0 * streak_start && residual > first) {
            std::ostringstream msg;
            msg << "ADMM diverging: primal residual grew tenfold over " << growing << " consecutive iterations (iteration " << t + 1
                << ", residual " << residual << ", rho " << rho << ")";
            throw NumericalError(msg.str());
        }
    }
    return report;
}

AdmmReport admm_update_A(AdmmState& state, const MatrixXd& K_hat, const MatrixXd& K_tilde, const MatrixXd& M_dis,
                         const MatrixXd& S, const MatrixXd& X, const Hyperparams& hyper) {
    AStep step(K_hat, K_tilde, M_dis, hyper);
    step.set_targets(S, X);
    return step.run(state, hyper.admm_iters, hyper.admm_tol);
}

}  // namespace ikdr
