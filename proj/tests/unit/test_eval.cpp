#include <doctest.h>

#include <cmath>
#include <limits>
#include <numeric>

#include "generators.hpp"
#include "ikdr/error.hpp"
#include "ikdr/eval.hpp"

using namespace ikdr;
using namespace ikdr::testing;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

std::vector<int> knn_oracle(const MatrixXd& train, const std::vector<int>& labels, const MatrixXd& test) {
    std::vector<int> out;
    for (Index j = 0; j < test.cols(); ++j) {
        Index best = -1;
        double best_d = 0.0;
        for (Index i = 0; i < train.cols(); ++i) {
            double d = 0.0;
            for (Index r = 0; r < train.rows(); ++r) d += (train(r, i) - test(r, j)) * (train(r, i) - test(r, j));
            if (best < 0 || d < best_d) {
                best = i;
                best_d = d;
            }
        }
        out.push_back(labels[static_cast<std::size_t>(best)]);
    }
    return out;
}

double ip_oracle(const MatrixXd& A, const std::vector<int>& labels, int C) {
    double total = 0.0;
    for (Index j = 0; j < A.cols(); ++j) {
        std::vector<double> mass(static_cast<std::size_t>(C), 0.0);
        double all = 0.0;
        for (Index i = 0; i < A.rows(); ++i) {
            mass[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] += A(i, j);
            all += A(i, j);
        }
        total += *std::max_element(mass.begin(), mass.end()) / all;
    }
    return total / static_cast<double>(A.cols());
}

double kpca_reconstruction(const MatrixXd& K, const MatrixXd& A) {
    // ||Phi - Phi A A' K||_F^2 with Phi'Phi = K.
    const MatrixXd B = MatrixXd::Identity(K.rows(), K.rows()) - A * A.transpose() * K;
    return (B.transpose() * K * B).trace();
}

}  // namespace

TEST_CASE("1-NN returns the label of a coincident training point and breaks ties by index") {
    MatrixXd train(1, 3);
    train << 0.0, 2.0, 5.0;
    const std::vector<int> labels{1, 0, 1};
    MatrixXd test(1, 2);
    test << 5.0, 1.0;
    CHECK(knn_predict(train, labels, test) == std::vector<int>{1, 1});

    // Equidistant from index 0 (class 1) and index 1 (class 0).
    MatrixXd mid(1, 1);
    mid << 1.0;
    CHECK(knn_predict(train, labels, mid) == std::vector<int>{1});
    MatrixXd swapped(1, 3);
    swapped << 2.0, 0.0, 5.0;
    CHECK(knn_predict(swapped, std::vector<int>{0, 1, 1}, mid) == std::vector<int>{0});
    CHECK_THROWS_AS(knn_predict(train, labels, MatrixXd::Zero(2, 1)), InputError);
}

TEST_CASE("property: 1-NN matches the brute-force oracle on random blobs") {
    SplitMix64 rng(61);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 10 + static_cast<Index>(rng.below(40));
        const Index k = 1 + static_cast<Index>(rng.below(4));
        MatrixXd train = random_gaussian(rng, k, n);
        const std::vector<int> labels = random_labels(rng, n, 2);
        for (Index i = 0; i < n; ++i) train.col(i).array() += 2.0 * labels[static_cast<std::size_t>(i)];
        const MatrixXd test = random_gaussian(rng, k, 20, 2.0);
        CHECK(knn_predict(train, labels, test) == knn_oracle(train, labels, test));
    }
}

TEST_CASE("property: 1-NN is equivariant under permutations of the training set") {
    SplitMix64 rng(62);
    for (int trial = 0; trial < 20; ++trial) {
        const Index n = 15;
        const MatrixXd train = random_gaussian(rng, 2, n);
        const std::vector<int> labels = random_labels(rng, n, 3);
        std::vector<Index> perm(static_cast<std::size_t>(n));
        std::iota(perm.begin(), perm.end(), Index{0});
        rng.shuffle(perm);
        MatrixXd ptrain(2, n);
        std::vector<int> plabels(static_cast<std::size_t>(n));
        for (Index i = 0; i < n; ++i) {
            ptrain.col(i) = train.col(perm[static_cast<std::size_t>(i)]);
            plabels[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])];
        }
        const MatrixXd test = random_gaussian(rng, 2, 10);
        CHECK(knn_predict(train, labels, test) == knn_predict(ptrain, plabels, test));
    }
}

TEST_CASE("accuracy counts matches") {
    CHECK(accuracy(std::vector<int>{0, 1, 1, 0}, std::vector<int>{0, 1, 0, 0}) == 0.75);
    CHECK_THROWS_AS(accuracy(std::vector<int>{0}, std::vector<int>{0, 1}), InputError);
}

TEST_CASE("Ip examples") {
    const std::vector<int> labels{0, 0, 1, 1, 2, 2};
    const LabelIndicator H = build_label_indicator(labels, 3);
    MatrixXd pure = MatrixXd::Zero(6, 3);
    pure(0, 0) = 0.5;
    pure(1, 0) = 0.5;
    pure(3, 1) = 1.0;
    pure(4, 2) = 0.2;
    pure(5, 2) = 0.8;
    CHECK(ip_measure(pure, H) == 1.0);
    const MatrixXd D = dimension_class_scores(pure, H);
    CHECK(D == MatrixXd::Identity(3, 3));

    const MatrixXd uniform = MatrixXd::Constant(6, 2, 1.0 / 6.0);
    CHECK(ip_measure(uniform, H) == doctest::Approx(1.0 / 3.0));
    CHECK((dimension_class_scores(uniform, H).array() - 1.0 / 3.0).abs().maxCoeff() <= 1e-15);

    MatrixXd zero = pure;
    zero.col(1).setZero();
    CHECK_THROWS_AS(ip_measure(zero, H), InputError);
    MatrixXd negative = pure;
    negative(2, 0) = -0.1;
    CHECK_THROWS_AS(ip_measure(negative, H), InputError);
}

TEST_CASE("property: Ip matches the per-column oracle and lies in [1/C, 1]") {
    SplitMix64 rng(63);
    for (int trial = 0; trial < 50; ++trial) {
        const int C = 2 + static_cast<int>(rng.below(3));
        const Index n = trial < 10 ? 30 : 5 + static_cast<Index>(rng.below(40));
        const std::vector<int> labels = random_labels(rng, n, C);
        const LabelIndicator H = build_label_indicator(labels, C);
        MatrixXd A = random_matrix(rng, n, 1 + static_cast<Index>(rng.below(5)), 0.0, 1.0);
        // Sparse columns push Ip toward 1.
        for (Index j = 0; j < A.cols(); ++j)
            for (Index i = 0; i < n; ++i)
                if (rng.uniform() < 0.5 && i != 0) A(i, j) = 0.0;
        const double ip = ip_measure(A, H);
        CHECK(ip == doctest::Approx(ip_oracle(A, labels, C)).epsilon(1e-12));
        CHECK(ip >= 1.0 / C - 1e-12);
        CHECK(ip <= 1.0 + 1e-12);
        const MatrixXd D = dimension_class_scores(A, H);
        CHECK((D.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
        CHECK(D.colwise().maxCoeff().mean() == doctest::Approx(ip).epsilon(1e-14));
    }
}

TEST_CASE("feature profile ranks by weight and counts nonzeros") {
    VectorXd onehot = VectorXd::Zero(4);
    onehot(2) = 1.0;
    const FeatureProfile a = feature_selection_profile(onehot, {"a", "b", "c", "d"});
    CHECK(a.l0 == 1);
    CHECK(a.ranked.front().first == 2);
    CHECK(a.names.front() == "c");
    // Ties keep index order.
    CHECK(a.ranked[1].first == 0);
    CHECK(a.ranked[3].first == 3);

    const FeatureProfile u = feature_selection_profile(VectorXd::Constant(4, 0.25), {});
    CHECK(u.l0 == 4);
    CHECK(u.names[0] == "f0");

    VectorXd v(3);
    v << 0.2, 0.8 - 1e-7, 1e-7;
    const FeatureProfile p = feature_selection_profile(v, {"x", "y", "z"});
    CHECK(p.l0 == 2);
    CHECK(p.ranked[0].first == 1);
    CHECK(p.ranked[2].second == 1e-7);
}

TEST_CASE("K-PCA on the identity kernel picks standard basis vectors") {
    const KpcaModel m = kpca_fit(MatrixXd::Identity(5, 5), 3);
    CHECK((m.A.transpose() * m.A - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-12);
    CHECK((m.eigenvalues.array() - 1.0).abs().maxCoeff() <= 1e-12);
    CHECK_THROWS_AS(kpca_fit(MatrixXd::Identity(3, 3), 4), InputError);
    MatrixXd rank_one = MatrixXd::Ones(4, 4);
    CHECK_THROWS_AS(kpca_fit(rank_one, 2), NumericalError);
}

TEST_CASE("property: K-PCA is K-orthonormal with descending eigenvalues") {
    SplitMix64 rng(64);
    for (int trial = 0; trial < 10; ++trial) {
        const MatrixXd K = random_kernel(rng, 15, 4);
        const KpcaModel m = kpca_fit(K, 4);
        CHECK((m.A.transpose() * K * m.A - MatrixXd::Identity(4, 4)).cwiseAbs().maxCoeff() <= 1e-10);
        for (Index j = 1; j < 4; ++j) CHECK(m.eigenvalues(j) <= m.eigenvalues(j - 1));

        // Its reconstruction error never grows with k.
        double previous = std::numeric_limits<double>::infinity();
        for (int k = 1; k <= 5; ++k) {
            const double err = kpca_reconstruction(K, kpca_fit(K, k).A);
            CHECK(err <= previous + 1e-10);
            previous = err;
        }

        // Self-transform inner products equal A'K K A.
        const MatrixXd Z = kpca_transform(m, K);
        CHECK((Z.transpose() * Z - K * m.A * m.A.transpose() * K).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("centered K-PCA embeds duplicates identically and matches the centered Gram") {
    SplitMix64 rng(65);
    const MatrixXd Y = random_gaussian(rng, 12, 2);
    const KernelMatrix K = gaussian_kernel(Y);
    const KpcaModel m = kpca_fit(K.values, 3, true);
    const MatrixXd J = MatrixXd::Identity(12, 12) - MatrixXd::Constant(12, 12, 1.0 / 12.0);
    const MatrixXd Kc = J * K.values * J;
    CHECK((m.A.transpose() * Kc * m.A - MatrixXd::Identity(3, 3)).cwiseAbs().maxCoeff() <= 1e-10);
    MatrixXd T(2, 2);
    T.row(0) << 0.4, -0.2;
    T.row(1) << 0.4, -0.2;
    const MatrixXd Z = kpca_transform(m, cross_kernel(Y, T, spec_of(K)));
    CHECK((Z.col(0) - Z.col(1)).cwiseAbs().maxCoeff() <= 1e-14);
}

TEST_CASE("grids") {
    const std::vector<Hyperparams> g = default_grid(Hyperparams{});
    CHECK(g.size() == 16);
    CHECK(g.front().lambda == 0.01);
    CHECK(g.back().mu == 10.0);
    CHECK(g[1].lambda == 0.01);
    CHECK(g[1].mu == 0.1);
    CHECK_THROWS_AS(make_grid(Hyperparams{}, {}, {0.1}), InputError);
}

TEST_CASE("cross-validation with a single candidate is plain k-fold and uses training-only bandwidths") {
    const Dataset d = xor_blobs(12, 60);
    Hyperparams h;
    h.max_outer = 10;
    CvOptions opt;
    opt.fold_count = 5;
    opt.seed = 4;
    const EvalReport r = cross_validate(d, {h}, opt);
    REQUIRE(r.folds.size() == 5);
    double sum = 0.0;
    for (const auto& f : r.folds) {
        sum += f.accuracy;
        CHECK(f.inner_score == 0.0);
        CHECK(f.failed_candidates == 0);
        const Dataset train = d.subset(r.plan.folds[static_cast<std::size_t>(f.fold)].train);
        REQUIRE(f.bandwidths.size() == 1);
        CHECK(f.bandwidths[0] == mean_pairwise_distance(train.features, BandwidthRule::mean_distance));
    }
    CHECK(r.accuracy_mean == doctest::Approx(sum / 5.0));
    CHECK(r.accuracy_mean >= 0.9);
    CHECK(r.ip_value >= 0.5);
    CHECK(r.ip_value <= 1.0);
    CHECK((r.dimension_class_scores.colwise().sum().array() - 1.0).abs().maxCoeff() <= 1e-9);
}

TEST_CASE("separated blobs are classified perfectly with tuning") {
    // Two tight, far-apart clusters.
    SplitMix64 rng(66);
    MatrixXd Y = random_gaussian(rng, 40, 2, 0.1);
    std::vector<int> labels(40);
    for (Index i = 0; i < 40; ++i) {
        labels[static_cast<std::size_t>(i)] = static_cast<int>(i % 2);
        Y(i, 0) += 3.0 * (i % 2);
    }
    const Dataset d = make_dataset(Y, labels, 2);
    Hyperparams h;
    h.max_outer = 10;
    CvOptions opt;
    opt.fold_count = 4;
    opt.inner_folds = 3;
    opt.threads = 2;
    const EvalReport r = cross_validate(d, make_grid(h, {0.01, 0.1}, {0.1, 1.0}), opt);
    CHECK(r.accuracy_mean == 1.0);
    for (const auto& f : r.folds) CHECK(f.inner_score > 0.0);
}

TEST_CASE("K-PCA cross-validation reports magnitudes for Ip") {
    const Dataset d = xor_blobs(13, 40);
    CvOptions opt;
    opt.fold_count = 4;
    opt.method = Method::kpca;
    const EvalReport r = cross_validate(d, {Hyperparams{}}, opt);
    CHECK(r.method == Method::kpca);
    CHECK(r.ip_value >= 0.5);
    CHECK(r.ip_value <= 1.0);
    CHECK(to_string(Method::kpca) == "kpca");
}

TEST_CASE("multi-kernel cross-validation fills the feature profile") {
    const Dataset d = informative_noise(14, 40, 2, 2);
    Hyperparams h;
    h.max_outer = 5;
    CvOptions opt;
    opt.fold_count = 3;
    opt.mode = KernelMode::multi;
    const EvalReport r = cross_validate(d, {h}, opt);
    CHECK(r.feature_profile.ranked.size() == 4);
    for (const auto& f : r.folds) CHECK(f.bandwidths.size() == 4);
}
