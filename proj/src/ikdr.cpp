#include "ikdr/ikdr.hpp"


#include <cmath>
#include <memory>
#include <sstream>

#include "ikdr/error.hpp"
#include "ikdr/log.hpp"
#include "ikdr/rng.hpp"

namespace ikdr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(KernelMode mode) { return mode == KernelMode::single ? "single" : "multi"; }

KernelMode kernel_mode_from_string(const std::string& name) {
    if (name == "single") return KernelMode::single;
    if (name == "multi") return KernelMode::multi;
    throw InputError("unknown kernel mode '" + name + "' (expected single|multi)");
}

void Hyperparams::validate(Index n) const {
    auto finite = [](double v) { return std::isfinite(v); };
    if (!(finite(lambda) && finite(mu) && finite(tau) && finite(zeta) && finite(rho) && finite(outer_tol) &&
          finite(admm_tol) && finite(qp_tol))) {
        throw InputError("hyperparameters must be finite");
    }
    if (lambda < 0.0 || mu < 0.0) throw InputError("lambda and mu must be nonnegative");
    if (tau <= 0.0 || zeta <= 0.0 || rho <= 0.0) throw InputError("tau, zeta and rho must be positive");
    if (k < 1) throw InputError("embedding dimension k must be at least 1");
    if (k > n) throw InputError("embedding dimension k = " + std::to_string(k) + " exceeds sample count " + std::to_string(n));
    if (max_outer < 1 || admm_iters < 1 || qp_iters < 1) throw InputError("iteration limits must be positive");
}

MatrixXd dissimilarity_coupling(const LabelIndicator& H) {
    const MatrixXd Hbar = H.complement();
    return Hbar.transpose() * H.H + H.H.transpose() * Hbar;
}

MatrixXd update_X(const MatrixXd& A, const MatrixXd& K_hat, const MatrixXd& S, const Hyperparams& hyper) {
    if (!hyper.exact_x_update) return A.transpose() * K_hat;
    const Index k = A.cols();
    MatrixXd lhs = hyper.tau * (A.transpose() * A);
    lhs.diagonal().array() += hyper.zeta;
    const MatrixXd rhs = hyper.tau * (A.transpose() * S) + hyper.zeta * (A.transpose() * K_hat);
    Eigen::LLT<MatrixXd> llt(lhs);
    if (llt.info() != Eigen::Success) throw NumericalError("X update: system is not positive definite");
    (void)k;
    return llt.solve(rhs);
}

MatrixXd update_S(const MatrixXd& A, const MatrixXd& X, const LabelIndicator& H, double tau) {
    const Index n = A.rows();
    if (X.cols() != n || X.rows() != A.cols() || H.size() != n) throw InputError("S update: shape mismatch");
    const std::vector<int> labels = H.labels();
    const VectorXd sizes = H.class_sizes();
    MatrixXd S = A * X;
    const MatrixXd class_mass = H.H * S;  // (q, i) -> u_q A x_i
    VectorXd weight(n);
    for (Index i = 0; i < n; ++i) {
        const int q = labels[static_cast<std::size_t>(i)];
        weight(i) = (1.0 - class_mass(q, i)) / (tau + sizes(q));
    }
    // Column i gains weight(i) on every row of its own class.
    S.noalias() += H.H.transpose() * (H.H * weight.asDiagonal());
    return S;
}

QpProblem build_alpha_qp(const MatrixXd& A, const MatrixXd& X, const KernelBundle& bundle, const LabelIndicator& H,
                         const Hyperparams& hyper) {
    const Index f = bundle.size();
    const Index n = A.rows();
    if (bundle.samples() != n || X.cols() != n) throw InputError("alpha QP: shape mismatch");
    const MatrixXd Hbar = H.complement();
    const MatrixXd Xt = X.transpose();
    const VectorXd row_norms = A.rowwise().squaredNorm();

    std::vector<MatrixXd> KA(static_cast<std::size_t>(f));
    std::vector<MatrixXd> DKA(static_cast<std::size_t>(f));  // Hbar'H K_m A
    VectorXd v(f);
    for (Index m = 0; m < f; ++m) {
        const MatrixXd& K = bundle.base[static_cast<std::size_t>(m)].values;
        auto& B = KA[static_cast<std::size_t>(m)];
        B.noalias() = K * A;
        DKA[static_cast<std::size_t>(m)] = Hbar.transpose() * (H.H * B);
        const VectorXd degree = K.rowwise().sum();
        const double laplacian_quad = degree.dot(row_norms) - A.cwiseProduct(B).sum();
        v(m) = hyper.mu * laplacian_quad - 2.0 * hyper.zeta * Xt.cwiseProduct(B).sum();
    }
    MatrixXd Q(f, f);
    for (Index i = 0; i < f; ++i) {
        for (Index j = i; j < f; ++j) {
            const auto& Bi = KA[static_cast<std::size_t>(i)];
            const auto& Bj = KA[static_cast<std::size_t>(j)];
            const double dis = 0.5 * (Bi.cwiseProduct(DKA[static_cast<std::size_t>(j)]).sum() +
                                      Bj.cwiseProduct(DKA[static_cast<std::size_t>(i)]).sum());
            const double value = 2.0 * hyper.lambda * dis + 2.0 * hyper.zeta * Bi.cwiseProduct(Bj).sum();
            Q(i, j) = value;
            Q(j, i) = value;
        }
    }
    return QpProblem(Q, v);
}

ObjectiveTerms eval_objective(const MatrixXd& A, const MatrixXd& S, const MatrixXd& X, const MatrixXd& K_hat,
                              const LabelIndicator& H, const Hyperparams& hyper) {
    ObjectiveTerms t;
    const std::vector<int> labels = H.labels();
    const MatrixXd class_mass = H.H * S;
    for (Index i = 0; i < S.cols(); ++i) {
        const double r = class_mass(labels[static_cast<std::size_t>(i)], i) - 1.0;
        t.j_sim += r * r;
    }
    const MatrixXd KA = K_hat * A;
    t.j_dis = KA.cwiseProduct(H.complement().transpose() * (H.H * KA)).sum();
    const VectorXd degree = K_hat.rowwise().sum();
    t.j_ip = degree.dot(A.rowwise().squaredNorm()) - A.cwiseProduct(KA).sum();
    t.s_penalty = (S - A * X).squaredNorm();
    t.x_penalty = (X - KA.transpose()).squaredNorm();
    t.total = t.j_sim + hyper.lambda * t.j_dis + hyper.mu * t.j_ip + hyper.tau * t.s_penalty + hyper.zeta * t.x_penalty;
    return t;
}

ObjectiveTerms eval_objective(const MatrixXd& A, const MatrixXd& S, const MatrixXd& X, const VectorXd& alpha,
                              const KernelBundle& bundle, const LabelIndicator& H, const Hyperparams& hyper) {
    return eval_objective(A, S, X, weighted_kernel(bundle.base, alpha), H, hyper);
}

DirectTerms eval_direct_terms(const MatrixXd& A, const MatrixXd& K_hat, const LabelIndicator& H) {
    DirectTerms t;
    const MatrixXd KA = K_hat * A;
    // sum_{s,t} a_s a_t (K_ss + K_tt - 2 K_st) = 2 (1'a)(a' diag K) - 2 a'Ka
    const VectorXd col_sums = A.colwise().sum().transpose();
    const VectorXd diag_mass = A.transpose() * K_hat.diagonal();
    t.j_ip = col_sums.dot(diag_mass) - A.cwiseProduct(KA).sum();
    t.j_dis = (H.complement().transpose() * H.H * KA * KA.transpose()).trace();
    const MatrixXd X = KA.transpose();
    const MatrixXd class_mass = H.H * (A * X);
    const std::vector<int> labels = H.labels();
    for (Index i = 0; i < A.rows(); ++i) {
        const double r = class_mass(labels[static_cast<std::size_t>(i)], i) - 1.0;
        t.j_sim += r * r;
    }
    return t;
}

double effective_rho(const MatrixXd& K_hat, const MatrixXd& M_dis, const Hyperparams& hyper) {
    if (!hyper.rho_scaled) return hyper.rho;
    const Index n = K_hat.rows();
    MatrixXd hess = hyper.lambda * K_hat * M_dis * K_hat + 2.0 * hyper.mu * laplacian(K_hat) +
                    2.0 * hyper.zeta * K_hat * K_hat;
    hess = 0.5 * (hess + hess.transpose()).eval();
    const double scale = hess.trace() / static_cast<double>(n);
    const Eigen::SelfAdjointEigenSolver<MatrixXd> eig(hess, Eigen::EigenvaluesOnly);
    // Negative curvature from the dissimilarity term must be dominated by rho.
    const double floor = 4.0 * std::max(0.0, -eig.eigenvalues()(0));
    if (!(scale > 0.0) || !std::isfinite(scale)) return std::max(hyper.rho, floor);
    return std::max(hyper.rho * scale, floor);
}

MatrixXd initial_embedding(Index n, int k, std::uint64_t seed) {
    SplitMix64 rng(seed);
    MatrixXd A(n, k);
    for (Index j = 0; j < k; ++j) {
        for (Index i = 0; i < n; ++i) A(i, j) = rng.uniform();
    }
    for (Index j = 0; j < k; ++j) A.col(j) /= A.col(j).sum();
    return A;
}

MatrixXd finalize_embedding(const MatrixXd& A) {
    MatrixXd out = A.cwiseMax(0.0);
    for (Index j = 0; j < out.cols(); ++j) {
        const double s = out.col(j).sum();
        if (s > 0.0) {
            out.col(j) /= s;
        } else {
            log::warn("embedding column " + std::to_string(j) + " vanished after clipping; reset to uniform");
            out.col(j).setConstant(1.0 / static_cast<double>(out.rows()));
        }
    }
    return out;
}

namespace {

constexpr int kExtraPasses = 4;
constexpr int kPolishFactor = 10;  // iteration cap of the final pass, in units of admm_iters

struct KernelState {
    const KernelBundle* bundle = nullptr;  // null in single-kernel mode
    VectorXd alpha;
    MatrixXd K_hat;
    MatrixXd K_tilde;

    void refresh() {
        if (bundle) K_hat = weighted_kernel(bundle->base, alpha);
        K_tilde = laplacian(K_hat);
    }
};

void check_finite(const ObjectiveTerms& t, int iteration) {
    if (!std::isfinite(t.total)) {
        throw NumericalError("non-finite objective at outer iteration " + std::to_string(iteration));
    }
}

EmbeddingModel fit_impl(const Dataset& dataset, KernelState ks, KernelSpec spec, KernelMode mode,
                        const Hyperparams& hyper, const FitOptions& options) {
    dataset.validate();
    const Index n = dataset.size();
    hyper.validate(n);
    if (ks.K_hat.rows() != n) throw InputError("kernel size does not match the dataset");

    const LabelIndicator H = build_label_indicator(dataset.labels, dataset.class_count);
    const MatrixXd M = dissimilarity_coupling(H);

    EmbeddingModel model;
    model.mode = mode;
    model.hyper = hyper;
    model.train_features = dataset.features;
    model.train_labels = dataset.labels;
    model.class_count = dataset.class_count;
    model.class_names = dataset.class_names;
    model.feature_names = dataset.feature_names;

    ks.refresh();
    Hyperparams run_hyper = hyper;
    run_hyper.rho = effective_rho(ks.K_hat, M, hyper);
    model.diagnostics.effective_rho = run_hyper.rho;
    MatrixXd A = initial_embedding(n, hyper.k, hyper.seed);
    RelaxState relax;
    relax.X = A.transpose() * ks.K_hat;
    relax.S = A * relax.X;
    AdmmState admm = AdmmState::start(A, run_hyper.rho);

    OuterIteration init;
    init.terms = eval_objective(A, relax.S, relax.X, ks.K_hat, H, hyper);
    check_finite(init.terms, 0);
    model.trace.push_back(init);

    auto step = std::make_unique<AStep>(ks.K_hat, ks.K_tilde, M, run_hyper);
    double previous = init.terms.total;
    bool last_admm_converged = true;
    for (int it = 1; it <= hyper.max_outer; ++it) {
        relax.X = update_X(A, ks.K_hat, relax.S, hyper);
        relax.S = update_S(A, relax.X, H, hyper.tau);

        step->set_targets(relax.S, relax.X);
        AdmmReport report;
        try {
            report = step->run(admm, run_hyper.admm_iters, hyper.admm_tol, options.admm_trace);
            if (hyper.exact_x_update) {
                // Every other block is an exact minimizer here, so an A step may only lower the total.
                auto total_at = [&](const MatrixXd& cand) {
                    return eval_objective(cand, relax.S, relax.X, ks.K_hat, H, hyper).total;
                };
                double after = total_at(admm.A);
                for (int extra = 0; after > previous && !report.converged && extra < kExtraPasses; ++extra) {
                    const int done = report.iterations;
                    report = step->run(admm, run_hyper.admm_iters, hyper.admm_tol, options.admm_trace);
                    report.iterations += done;
                    after = total_at(admm.A);
                }
                if (after > previous) {
                    ++model.diagnostics.rejected_steps;
                } else {
                    A = admm.A;
                }
            } else {
                A = admm.A;
            }
        } catch (const NumericalError& e) {
            throw NumericalError(std::string(e.what()) + " [outer iteration " + std::to_string(it) + "]");
        }
        if (options.raw_A) options.raw_A->push_back(A);

        if (ks.bundle) {
            const QpProblem qp = build_alpha_qp(A, relax.X, *ks.bundle, H, hyper);
            ks.alpha = solve_simplex_qp(qp, ks.alpha, hyper.qp_iters, hyper.qp_tol).x;
            ks.refresh();
            step = std::make_unique<AStep>(ks.K_hat, ks.K_tilde, M, run_hyper);
        }

        OuterIteration rec;
        rec.iteration = it;
        rec.terms = eval_objective(A, relax.S, relax.X, ks.K_hat, H, hyper);
        check_finite(rec.terms, it);
        rec.admm_iterations = report.iterations;
        rec.admm_residual_eq = report.residual_eq;
        rec.admm_residual_pos = report.residual_pos;
        model.trace.push_back(rec);
        model.diagnostics.outer_iterations = it;

        const double change = std::abs(previous - rec.terms.total) / std::max(1.0, std::abs(previous));
        previous = rec.terms.total;
        last_admm_converged = report.converged;
        if (change <= hyper.outer_tol && report.converged) {
            model.diagnostics.converged = true;
            break;
        }
    }

    if (!last_admm_converged) {
        // Finish the last A-subproblem so the constraints hold before finalization.
        step->set_targets(relax.S, relax.X);
        AdmmState polish = admm;
        AdmmReport report;
        try {
            report = step->run(polish, kPolishFactor * run_hyper.admm_iters, hyper.admm_tol);
        } catch (const NumericalError& e) {
            log::warn(std::string("final ADMM polish abandoned: ") + e.what());
            polish.A = A;
        }
        model.diagnostics.polish_iterations = report.iterations;
        const ObjectiveTerms polished = eval_objective(polish.A, relax.S, relax.X, ks.K_hat, H, hyper);
        const double bound = model.trace[model.trace.size() - 2].terms.total;
        if (!hyper.exact_x_update || polished.total <= bound) {
            A = polish.A;
            OuterIteration& last = model.trace.back();
            last.terms = polished;
            last.admm_iterations += report.iterations;
            last.admm_residual_eq = report.residual_eq;
            last.admm_residual_pos = report.residual_pos;
        } else {
            ++model.diagnostics.rejected_steps;
        }
    }

    model.diagnostics.residual_eq = (A.colwise().sum().array() - 1.0).abs().maxCoeff();
    model.diagnostics.min_entry = A.minCoeff();
    model.A = finalize_embedding(A);
    model.alpha = ks.alpha;
    spec.alpha = ks.alpha;
    model.kernel = std::move(spec);
    std::ostringstream msg;
    msg << "fit: " << model.diagnostics.outer_iterations << " outer iterations, objective "
        << model.trace.back().terms.total << (model.diagnostics.converged ? " (converged)" : " (iteration limit)");
    log::debug(msg.str());
    return model;
}

}  // namespace

EmbeddingModel fit(const Dataset& dataset, const KernelMatrix& kernel, const Hyperparams& hyper,
                   const FitOptions& options) {
    KernelState ks;
    ks.alpha = VectorXd::Ones(1);
    ks.K_hat = kernel.values;
    return fit_impl(dataset, std::move(ks), spec_of(kernel), KernelMode::single, hyper, options);
}

EmbeddingModel fit(const Dataset& dataset, const KernelBundle& bundle, const Hyperparams& hyper,
                   const FitOptions& options) {
    bundle.validate();
    KernelState ks;
    ks.bundle = &bundle;
    ks.alpha = bundle.alpha;
    ks.K_hat = weighted_kernel(bundle);
    return fit_impl(dataset, std::move(ks), spec_of(bundle), KernelMode::multi, hyper, options);
}

EmbeddingModel fit(const Dataset& dataset, KernelMode mode, BandwidthRule rule, const Hyperparams& hyper,
                   const FitOptions& options) {
    if (mode == KernelMode::single) return fit(dataset, gaussian_kernel(dataset.features, rule), hyper, options);
    const KernelBundle bundle = per_feature_kernels(dataset.features, rule);
    return fit(dataset, bundle, hyper, options);
}

MatrixXd transform(const EmbeddingModel& model, const MatrixXd& test_features) {
    if (test_features.cols() != model.train_features.cols()) {
        throw InputError("transform: test data has " + std::to_string(test_features.cols()) +
                         " features, model expects " + std::to_string(model.train_features.cols()));
    }
    return model.A.transpose() * cross_kernel(model.train_features, test_features, model.kernel);
}

MatrixXd training_embedding(const EmbeddingModel& model) { return transform(model, model.train_features); }

}  // namespace ikdr
