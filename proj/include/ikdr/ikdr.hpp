#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ikdr/data.hpp"
#include "ikdr/hyperparams.hpp"
#include "ikdr/kernels.hpp"
#include "ikdr/optim.hpp"

namespace ikdr {

enum class KernelMode { single, multi };

std::string to_string(KernelMode mode);
KernelMode kernel_mode_from_string(const std::string& name);

/// Raw (unweighted) terms of the relaxed objective and the weighted total.
struct ObjectiveTerms {
    double j_sim = 0.0;      ///< sum_i (u_i s_i - 1)^2
    double j_dis = 0.0;      ///< Tr(A'K Hbar'H K A)
    double j_ip = 0.0;       ///< Tr(A' L A), L = diag(K1) - K
    double s_penalty = 0.0;  ///< ||S - A X||_F^2
    double x_penalty = 0.0;  ///< ||X - A'K||_F^2
    double total = 0.0;      ///< j_sim + lambda j_dis + mu j_ip + tau s_penalty + zeta x_penalty
};

/// The unrelaxed terms, evaluated at X = A'K, for reporting only.
struct DirectTerms {
    double j_ip = 0.0;   ///< 1/2 sum_i sum_{s,t} a_si a_ti ||phi(y_s) - phi(y_t)||^2
    double j_dis = 0.0;  ///< Tr(Hbar'H K A A' K)
    double j_sim = 0.0;  ///< sum_i (u_i A x_i - 1)^2
};

/// Slack variables of the relaxation.
struct RelaxState {
    Eigen::MatrixXd S;  ///< N x N
    Eigen::MatrixXd X;  ///< k x N
};

struct OuterIteration {
    int iteration = 0;
    ObjectiveTerms terms;
    int admm_iterations = 0;
    double admm_residual_eq = 0.0;
    double admm_residual_pos = 0.0;
};

struct FitDiagnostics {
    int outer_iterations = 0;
    bool converged = false;
    /// Constraint state of A before clipping and renormalization.
    double residual_eq = 0.0;
    double min_entry = 0.0;
    /// The ADMM penalty actually used.
    double effective_rho = 0.0;
    /// A steps discarded because they raised the objective.
    int rejected_steps = 0;
    /// ADMM iterations spent finishing the last A-subproblem after the outer loop.
    int polish_iterations = 0;
};

struct EmbeddingModel {
    Eigen::MatrixXd A;        ///< N x k, nonnegative, columns sum to 1
    Eigen::VectorXd alpha;    ///< kernel weights (length 1 in single-kernel mode)
    Eigen::MatrixXd train_features;
    std::vector<int> train_labels;
    int class_count = 0;
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;
    KernelMode mode = KernelMode::single;
    KernelSpec kernel;
    Hyperparams hyper;
    /// Entry 0 is the initialization; entry t the state after outer sweep t.
    std::vector<OuterIteration> trace;
    FitDiagnostics diagnostics;

    Eigen::Index k() const { return A.cols(); }
};

struct FitOptions {
    /// When set, receives every ADMM iteration (iteration numbers restart per outer sweep).
    std::vector<AdmmTraceRow>* admm_trace = nullptr;
    /// When set, receives A after each ADMM pass (before finalization).
    std::vector<Eigen::MatrixXd>* raw_A = nullptr;
};

/// M = Hbar'H + H'Hbar; entry (s, t) is 2 when samples s and t differ in class.
Eigen::MatrixXd dissimilarity_coupling(const LabelIndicator& H);

/// X = A'K (default) or, with exact_x_update, the minimizer of the two coupling penalties.
Eigen::MatrixXd update_X(const Eigen::MatrixXd& A, const Eigen::MatrixXd& K_hat, const Eigen::MatrixXd& S,
                         const Hyperparams& hyper);

/**
 * Closed-form S step. Column i solves (u'u + tau I) s = u' + tau A x_i with
 * u the class row of sample i; by the rank-one inverse
 * (u'u + tau I)^-1 = (I - u'u / (tau + n_q)) / tau this is
 * s_i = A x_i + u' (1 - u A x_i) / (tau + n_q).
 */
Eigen::MatrixXd update_S(const Eigen::MatrixXd& A, const Eigen::MatrixXd& X, const LabelIndicator& H, double tau);

/// Kernel-weight QP: 0.5 alpha'Q alpha + v'alpha equals the alpha-dependent part of the objective.
QpProblem build_alpha_qp(const Eigen::MatrixXd& A, const Eigen::MatrixXd& X, const KernelBundle& bundle,
                         const LabelIndicator& H, const Hyperparams& hyper);

ObjectiveTerms eval_objective(const Eigen::MatrixXd& A, const Eigen::MatrixXd& S, const Eigen::MatrixXd& X,
                              const Eigen::MatrixXd& K_hat, const LabelIndicator& H, const Hyperparams& hyper);
ObjectiveTerms eval_objective(const Eigen::MatrixXd& A, const Eigen::MatrixXd& S, const Eigen::MatrixXd& X,
                              const Eigen::VectorXd& alpha, const KernelBundle& bundle, const LabelIndicator& H,
                              const Hyperparams& hyper);

DirectTerms eval_direct_terms(const Eigen::MatrixXd& A, const Eigen::MatrixXd& K_hat, const LabelIndicator& H);

/// ADMM penalty for a fit on kernel K_hat. With hyper.rho_scaled this is
/// hyper.rho times the mean diagonal of the smooth A-Hessian
/// lambda K M K + 2 mu L + 2 zeta K K, raised to at least four times its most
/// negative eigenvalue; otherwise hyper.rho as given.
double effective_rho(const Eigen::MatrixXd& K_hat, const Eigen::MatrixXd& M_dis, const Hyperparams& hyper);

/// Random nonnegative start with unit l1 columns, reproducible from `seed`.
Eigen::MatrixXd initial_embedding(Eigen::Index n, int k, std::uint64_t seed);

/// Clip at zero and renormalize each column to unit sum.
Eigen::MatrixXd finalize_embedding(const Eigen::MatrixXd& A);

EmbeddingModel fit(const Dataset& dataset, const KernelMatrix& kernel, const Hyperparams& hyper,
                   const FitOptions& options = {});
EmbeddingModel fit(const Dataset& dataset, const KernelBundle& bundle, const Hyperparams& hyper,
                   const FitOptions& options = {});
/// Builds the kernel(s) from the dataset and fits.
EmbeddingModel fit(const Dataset& dataset, KernelMode mode, BandwidthRule rule, const Hyperparams& hyper,
                   const FitOptions& options = {});

/// Embedded coordinates (k x M) of test rows: A' cross_kernel(train, test).
Eigen::MatrixXd transform(const EmbeddingModel& model, const Eigen::MatrixXd& test_features);

/// Embedded training data X = A'K.
Eigen::MatrixXd training_embedding(const EmbeddingModel& model);

}  // namespace ikdr
