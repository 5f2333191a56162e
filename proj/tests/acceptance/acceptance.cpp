// Runs every acceptance criterion and prints one PASS/FAIL line per criterion.
// Exit status is nonzero if any criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "cli.hpp"
#include "generators.hpp"
#include "ikdr/data.hpp"
#include "ikdr/eval.hpp"
#include "ikdr/ikdr.hpp"
#include "ikdr/kernels.hpp"
#include "ikdr/log.hpp"
#include "ikdr/optim.hpp"

using namespace ikdr;
using namespace ikdr::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::string detail;
};

// Collects the worst observed value against a bound.
struct Worst {
    double value = 0.0;
    void see(double v) {
        if (!(v <= value)) value = v;  // NaN sticks
    }
};

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

double rel_diff(double a, double b) { return std::abs(a - b) / std::max(1.0, std::abs(b)); }

Outcome algebraic_identities() {
    SplitMix64 rng(1001);
    Worst laplacian_gap, dis_gap, sim_gap;
    const auto start = std::chrono::steady_clock::now();
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.below(19));
        const int k = 1 + static_cast<int>(rng.below(6));
        const int C = 2 + static_cast<int>(rng.below(3));
        const std::vector<int> labels = random_labels(rng, std::max<Index>(n, C), C);
        const Index N = static_cast<Index>(labels.size());
        const LabelIndicator H = build_label_indicator(labels, C);
        const MatrixXd K = random_kernel(rng, N);
        const MatrixXd A = random_column_simplex(rng, N, k);
        const MatrixXd X = A.transpose() * K;
        const ObjectiveTerms t = eval_objective(A, A * X, X, K, H, Hyperparams{});

        double pairwise = 0.0;
        for (Index s = 0; s < N; ++s)
            for (Index u = 0; u < N; ++u) pairwise += 0.5 * K(s, u) * (A.row(s) - A.row(u)).squaredNorm();
        laplacian_gap.see(rel_diff((A.transpose() * laplacian(K) * A).trace(), pairwise));
        laplacian_gap.see(rel_diff(t.j_ip, pairwise));

        double loop = 0.0;
        for (Index i = 0; i < N; ++i)
            for (Index j = 0; j < N; ++j)
                if (labels[static_cast<std::size_t>(i)] != labels[static_cast<std::size_t>(j)]) loop += X.col(i).dot(X.col(j));
        dis_gap.see(rel_diff((H.complement().transpose() * H.H * K * A * A.transpose() * K).trace(), loop));
        dis_gap.see(rel_diff(t.j_dis, loop));

        double direct = 0.0;
        for (Index i = 0; i < N; ++i) {
            const double r = H.H.row(labels[static_cast<std::size_t>(i)]).dot(A * X.col(i)) - 1.0;
            direct += r * r;
        }
        sim_gap.see(rel_diff(eval_direct_terms(A, K, H).j_sim, t.j_sim));
        sim_gap.see(rel_diff(direct, t.j_sim));
    }
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    Outcome o;
    o.pass = laplacian_gap.value <= 1e-10 && dis_gap.value <= 1e-10 && sim_gap.value <= 1e-10 && seconds < 10.0;
    o.detail = "laplacian " + num(laplacian_gap.value) + ", dissimilarity " + num(dis_gap.value) + ", similarity " +
               num(sim_gap.value) + ", " + num(seconds) + " s";
    return o;
}

Outcome gradient_check() {
    SplitMix64 rng(1002);
    Worst worst;
    for (int trial = 0; trial < 10; ++trial) {
        const Index n = 12;
        const int k = 3;
        const std::vector<int> labels = random_labels(rng, n, 2 + static_cast<int>(rng.below(2)));
        const int C = *std::max_element(labels.begin(), labels.end()) + 1;
        const MatrixXd K = random_kernel(rng, n);
        Hyperparams h;
        h.lambda = 0.1 + rng.uniform();
        h.mu = 0.1 + rng.uniform();
        h.tau = 0.5 + 10.0 * rng.uniform();
        h.zeta = 0.5 + 10.0 * rng.uniform();
        const MatrixXd M = dissimilarity_coupling(build_label_indicator(labels, C));
        h.rho = effective_rho(K, M, h);
        AStep step(K, laplacian(K), M, h);
        step.set_targets(random_gaussian(rng, n, n, 0.3), random_gaussian(rng, k, n, 0.3));
        const MatrixXd A = random_gaussian(rng, n, k, 0.5);
        const MatrixXd g = step.smooth_gradient(A);
        constexpr double eps = 1e-6;
        double err = 0.0;
        for (Index j = 0; j < k; ++j)
            for (Index i = 0; i < n; ++i) {
                MatrixXd up = A, down = A;
                up(i, j) += eps;
                down(i, j) -= eps;
                const double fd = (step.smooth_objective(up) - step.smooth_objective(down)) / (2.0 * eps);
                err = std::max(err, std::abs(fd - g(i, j)));
            }
        worst.see(err / g.cwiseAbs().maxCoeff());
    }
    return {worst.value <= 1e-5, "max relative error " + num(worst.value)};
}

Outcome sylvester_check() {
    SplitMix64 rng(1003);
    Worst residual, oracle_gap;
    for (int trial = 0; trial < 100; ++trial) {
        const Index n = 2 + static_cast<Index>(rng.below(19));
        const Index k = 1 + static_cast<Index>(rng.below(6));
        const MatrixXd P = random_spd(rng, n, 0.05 + rng.uniform());
        const MatrixXd Q = random_psd(rng, k, 1 + static_cast<Index>(rng.below(static_cast<std::uint64_t>(k))));
        const MatrixXd R = random_gaussian(rng, n, k, 3.0);
        const MatrixXd A = solve_sylvester(P, Q, R);
        residual.see((P * A + A * Q - R).norm() / std::max(1.0, R.norm()));
        if (n <= 12 && k <= 4) {
            MatrixXd big = MatrixXd::Zero(n * k, n * k);
            for (Index j = 0; j < k; ++j) {
                big.block(j * n, j * n, n, n) += P;
                for (Index l = 0; l < k; ++l) big.block(l * n, j * n, n, n).diagonal().array() += Q(j, l);
            }
            const VectorXd a = big.fullPivLu().solve(Eigen::Map<const VectorXd>(R.data(), n * k));
            oracle_gap.see((A - Eigen::Map<const MatrixXd>(a.data(), n, k)).cwiseAbs().maxCoeff());
        }
    }
    return {residual.value <= 1e-8 && oracle_gap.value <= 1e-8,
            "residual " + num(residual.value) + ", oracle gap " + num(oracle_gap.value)};
}

Outcome s_update_check() {
    SplitMix64 rng(1004);
    Worst dense_gap, printed_gap;
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 15;
        const int C = 2 + static_cast<int>(rng.below(3));
        const std::vector<int> labels = random_labels(rng, n, C);
        const LabelIndicator H = build_label_indicator(labels, C);
        const MatrixXd A = random_column_simplex(rng, n, 3);
        const MatrixXd X = random_gaussian(rng, 3, n);
        const double tau = 0.1 + 20.0 * rng.uniform();
        const MatrixXd S = update_S(A, X, H, tau);
        const MatrixXd S1 = update_S(A, X, H, 1.0);
        for (Index i = 0; i < n; ++i) {
            const VectorXd u = H.H.row(labels[static_cast<std::size_t>(i)]).transpose();
            MatrixXd lhs = u * u.transpose();
            lhs.diagonal().array() += tau;
            dense_gap.see((S.col(i) - lhs.fullPivLu().solve(u + tau * A * X.col(i))).cwiseAbs().maxCoeff());
            const MatrixXd printed = (u * u.transpose() + MatrixXd::Identity(n, n)).inverse();
            printed_gap.see((S1.col(i) - printed * (u + A * X.col(i))).cwiseAbs().maxCoeff());
        }
    }
    return {dense_gap.value <= 1e-10 && printed_gap.value <= 1e-12,
            "dense gap " + num(dense_gap.value) + ", tau=1 printed-form gap " + num(printed_gap.value)};
}

Outcome qp_check() {
    SplitMix64 rng(1005);
    Worst gap, infeasible, increase;
    for (int trial = 0; trial < 10; ++trial) {
        const QpProblem problem(random_psd(rng, 3, 1 + static_cast<Index>(rng.below(3))), random_gaussian(rng, 3, 1));
        const QpResult r = solve_simplex_qp(problem, random_simplex(rng, 3), 1000, 1e-12);
        double grid_min = std::numeric_limits<double>::infinity();
        VectorXd a(3);
        for (int i = 0; i <= 1000; ++i)
            for (int j = 0; i + j <= 1000; ++j) {
                a << i * 1e-3, j * 1e-3, (1000 - i - j) * 1e-3;
                grid_min = std::min(grid_min, problem.objective(a));
            }
        gap.see(problem.objective(r.x) - grid_min);
        infeasible.see(std::max(-r.x.minCoeff(), std::abs(r.x.sum() - 1.0)));
        for (std::size_t t = 1; t < r.objective_trace.size(); ++t)
            increase.see(r.objective_trace[t] - r.objective_trace[t - 1]);
    }
    return {gap.value <= 1e-4 && infeasible.value <= 1e-9 && increase.value <= 0.0,
            "gap over grid " + num(gap.value) + ", infeasibility " + num(infeasible.value) + ", max increase " +
                num(increase.value)};
}

Outcome constraint_check() {
    Worst eq, neg, post, simplex;
    for (const KernelMode mode : {KernelMode::single, KernelMode::multi}) {
        for (std::uint64_t seed = 0; seed < 3; ++seed) {
            const Dataset d = mode == KernelMode::single ? xor_blobs(seed, 100) : informative_noise(seed, 60, 2, 4);
            Hyperparams h;
            h.seed = seed;
            h.k = 3;
            const EmbeddingModel m = fit(d, mode, BandwidthRule::mean_distance, h);
            eq.see(m.diagnostics.residual_eq);
            neg.see(-m.diagnostics.min_entry);
            post.see(std::max((m.A.colwise().sum().array() - 1.0).abs().maxCoeff(), -m.A.minCoeff()));
            simplex.see(std::max(-m.alpha.minCoeff(), std::abs(m.alpha.sum() - 1.0)));
        }
    }
    return {eq.value <= 1e-4 && neg.value <= 1e-6 && post.value <= 1e-12 && simplex.value <= 1e-9,
            "pre-finalization eq " + num(eq.value) + ", neg " + num(neg.value) + "; post " + num(post.value) +
                "; alpha " + num(simplex.value)};
}

Outcome monotonicity_check() {
    Worst increase;
    int violations = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const Dataset d = xor_blobs(500 + seed, 60);
        Hyperparams h;
        h.seed = seed;
        h.exact_x_update = true;
        const EmbeddingModel m = fit(d, KernelMode::single, BandwidthRule::mean_distance, h);
        for (std::size_t t = 1; t < m.trace.size(); ++t) {
            const double prev = m.trace[t - 1].terms.total;
            const double rise = (m.trace[t].terms.total - prev) / std::max(1.0, std::abs(prev));
            increase.see(rise);
            if (rise > 1e-8) ++violations;
        }
    }
    return {violations == 0, "largest relative increase " + num(increase.value) + ", violations " +
                                 std::to_string(violations)};
}

Hyperparams synthetic_hyper() {
    Hyperparams h;
    h.k = 2;
    return h;
}

Outcome synthetic_discrimination() {
    const Dataset d = xor_blobs(42);
    const auto start = std::chrono::steady_clock::now();
    CvOptions opt;
    const EvalReport r = cross_validate(d, {synthetic_hyper()}, opt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {r.accuracy_mean >= 0.95 && seconds <= 30.0,
            "10-fold 1-NN accuracy " + num(r.accuracy_mean) + ", " + num(seconds) + " s"};
}

Outcome interpretability() {
    const Dataset d = xor_blobs(42);
    const LabelIndicator H = build_label_indicator(d.labels, d.class_count);
    const EmbeddingModel m = fit(d, KernelMode::single, BandwidthRule::mean_distance, synthetic_hyper());
    const double ip = ip_measure(m.A, H);
    const KpcaModel kp = kpca_fit(gaussian_kernel(d.features).values, 2, false);
    const double ip_kpca = ip_measure(kp.A.cwiseAbs(), H);
    return {ip >= 0.90 && ip > ip_kpca, "I-KDR Ip " + num(ip) + ", K-PCA Ip " + num(ip_kpca)};
}

Outcome feature_selection() {
    const Dataset d = informative_noise(42, 150, 2, 8);
    const auto start = std::chrono::steady_clock::now();
    const EmbeddingModel m = fit(d, KernelMode::multi, BandwidthRule::mean_distance, Hyperparams{});
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const FeatureProfile p = feature_selection_profile(m.alpha, d.feature_names);
    const double informative = m.alpha(0) + m.alpha(1);
    const bool top2 = (p.ranked[0].first <= 1) && (p.ranked[1].first <= 1);
    return {informative >= 0.6 && top2 && seconds <= 60.0,
            "informative alpha mass " + num(informative) + ", top-2 " + (top2 ? "yes" : "no") + ", " + num(seconds) +
                " s"};
}

Outcome sonar_anchor() {
    const Dataset d = load_csv(fs::path(IKDR_TEST_DATA) / "sonar.csv", "Class");
    const auto start = std::chrono::steady_clock::now();
    CvOptions opt;
    const Hyperparams base;
    const EvalReport ikdr = cross_validate(d, default_grid(base), opt);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    CvOptions kopt = opt;
    kopt.method = Method::kpca;
    const EvalReport kpca = cross_validate(d, {base}, kopt);
    const bool same_folds = ikdr.plan.to_json() == kpca.plan.to_json();
    return {ikdr.accuracy_mean >= 0.80 && ikdr.accuracy_mean >= kpca.accuracy_mean && same_folds && seconds <= 300.0,
            "I-KDR " + num(ikdr.accuracy_mean) + " vs K-PCA " + num(kpca.accuracy_mean) + " at k = " +
                std::to_string(base.k) + ", " + num(seconds) + " s"};
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

Outcome determinism() {
    const fs::path dir = scratch_dir("acceptance_determinism");
    write_dataset_csv(dir / "blobs.csv", xor_blobs(7, 80), "label");
    nlohmann::json cfg;
    cfg["data"] = (dir / "blobs.csv").string();
    cfg["folds"] = 5;
    cfg["inner_folds"] = 3;
    cfg["grid"] = {{"lambda", {0.01, 0.1}}, {"mu", {0.1, 1.0}}};
    cfg["hyperparams"] = {{"seed", 11}, {"max_outer", 20}};
    std::ofstream(dir / "cfg.json") << cfg.dump(2);
    std::vector<std::string> names{"report.json", "folds.csv", "class_scores.csv"};
    std::vector<std::string> first;
    for (const char* run : {"a", "b"}) {
        const int code = cli::run(std::vector<std::string>{"cv", "--config", (dir / "cfg.json").string(), "--out",
                                                           (dir / run).string()});
        if (code != 0) return {false, "cv exited with " + std::to_string(code)};
    }
    for (const auto& n : names) {
        const std::string a = read_file(dir / "a" / n);
        if (a.empty() || a != read_file(dir / "b" / n)) return {false, n + " differs between runs"};
    }
    return {true, "report.json, folds.csv, class_scores.csv byte-identical"};
}

}  // namespace

int main() {
    log::init_from_env();
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"algebraic identities", algebraic_identities},
        {"gradient correctness", gradient_check},
        {"Sylvester solver", sylvester_check},
        {"S-update", s_update_check},
        {"simplex QP", qp_check},
        {"constraint satisfaction", constraint_check},
        {"monotonicity", monotonicity_check},
        {"synthetic discrimination", synthetic_discrimination},
        {"interpretability", interpretability},
        {"feature selection", feature_selection},
        {"Sonar anchor", sonar_anchor},
        {"determinism", determinism},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        if (!o.pass) ++failed;
        std::cout << (o.pass ? "PASS" : "FAIL") << "  criterion " << i + 1 << " (" << criteria[i].first
                  << "): " << o.detail << " [" << num(seconds) << " s]" << std::endl;
    }
    std::cout << criteria.size() - static_cast<std::size_t>(failed) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
