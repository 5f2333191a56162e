#include "ikdr/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include "ikdr/error.hpp"
#include "ikdr/log.hpp"

namespace ikdr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<int> knn_predict(const MatrixXd& train_embed, std::span<const int> train_labels, const MatrixXd& test_embed) {
    if (train_embed.cols() < 1) throw InputError("knn_predict: empty training set");
    if (train_embed.rows() != test_embed.rows()) throw InputError("knn_predict: embedding dimensions differ");
    if (static_cast<Index>(train_labels.size()) != train_embed.cols()) throw InputError("knn_predict: label count mismatch");
    std::vector<int> out(static_cast<std::size_t>(test_embed.cols()));
    for (Index j = 0; j < test_embed.cols(); ++j) {
        double best = std::numeric_limits<double>::infinity();
        Index best_i = 0;
        for (Index i = 0; i < train_embed.cols(); ++i) {
            double d = 0.0;
            for (Index r = 0; r < train_embed.rows(); ++r) {
                const double diff = train_embed(r, i) - test_embed(r, j);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_i = i;
            }
        }
        out[static_cast<std::size_t>(j)] = train_labels[static_cast<std::size_t>(best_i)];
    }
    return out;
}

double accuracy(std::span<const int> predicted, std::span<const int> truth) {
    if (predicted.size() != truth.size() || truth.empty()) throw InputError("accuracy: size mismatch");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) hits += predicted[i] == truth[i];
    return static_cast<double>(hits) / static_cast<double>(truth.size());
}

MatrixXd dimension_class_scores(const MatrixXd& A, const LabelIndicator& H) {
    if (A.rows() != H.size()) throw InputError("class scores: A and H disagree on sample count");
    if ((A.array() < 0.0).any()) throw InputError("class scores: A has negative entries");
    MatrixXd D = H.H * A;
    for (Index j = 0; j < D.cols(); ++j) {
        const double s = D.col(j).sum();
        if (!(s > 0.0)) throw InputError("class scores: embedding column " + std::to_string(j) + " is zero");
        D.col(j) /= s;
    }
    return D;
}

double ip_measure(const MatrixXd& A, const LabelIndicator& H) {
    const MatrixXd D = dimension_class_scores(A, H);
    return D.colwise().maxCoeff().mean();
}

FeatureProfile feature_selection_profile(const VectorXd& alpha, const std::vector<std::string>& feature_names,
                                         double threshold) {
    FeatureProfile p;
    p.threshold = threshold;
    std::vector<int> order(static_cast<std::size_t>(alpha.size()));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return alpha(a) > alpha(b); });
    for (const int m : order) {
        p.ranked.emplace_back(m, alpha(m));
        p.names.push_back(static_cast<std::size_t>(m) < feature_names.size() ? feature_names[static_cast<std::size_t>(m)]
                                                                            : "f" + std::to_string(m));
        if (alpha(m) > threshold) ++p.l0;
    }
    return p;
}

KpcaModel kpca_fit(const MatrixXd& K, int k, bool center) {
    const Index n = K.rows();
    if (k < 1 || k > n) throw InputError("kpca: k must be in [1, N]");
    KpcaModel model;
    model.centered = center;
    MatrixXd target = K;
    if (center) {
        model.train_column_means = K.rowwise().mean();
        model.train_grand_mean = K.mean();
        target.colwise() -= model.train_column_means;
        target.rowwise() -= model.train_column_means.transpose();
        target.array() += model.train_grand_mean;
    }
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (target + target.transpose()));
    if (eig.info() != Eigen::Success) throw NumericalError("kpca: eigendecomposition failed");
    const VectorXd& values = eig.eigenvalues();
    const double top = values(n - 1);
    model.A.resize(n, k);
    model.eigenvalues.resize(k);
    for (int j = 0; j < k; ++j) {
        const double sigma = values(n - 1 - j);
        if (!(sigma > 1e-12 * std::max(top, 1.0))) {
            throw NumericalError("kpca: only " + std::to_string(j) + " positive eigenvalues, k = " + std::to_string(k));
        }
        VectorXd v = eig.eigenvectors().col(n - 1 - j);
        if (v.sum() < 0.0) v = -v;
        model.A.col(j) = v / std::sqrt(sigma);
        model.eigenvalues(j) = sigma;
    }
    return model;
}

MatrixXd kpca_transform(const MatrixXd& A, const MatrixXd& cross) {
    if (A.rows() != cross.rows()) throw InputError("kpca_transform: kernel rows do not match A");
    return A.transpose() * cross;
}

MatrixXd kpca_transform(const KpcaModel& model, const MatrixXd& cross) {
    if (!model.centered) return kpca_transform(model.A, cross);
    MatrixXd c = cross;
    c.colwise() -= model.train_column_means;
    const Eigen::RowVectorXd test_means = cross.colwise().mean();
    c.rowwise() -= test_means;
    c.array() += model.train_grand_mean;
    return kpca_transform(model.A, c);
}

std::string to_string(Method method) { return method == Method::ikdr ? "ikdr" : "kpca"; }

std::vector<Hyperparams> make_grid(const Hyperparams& base, const std::vector<double>& lambdas,
                                   const std::vector<double>& mus) {
    std::vector<Hyperparams> grid;
    for (const double l : lambdas) {
        for (const double m : mus) {
            Hyperparams h = base;
            h.lambda = l;
            h.mu = m;
            grid.push_back(h);
        }
    }
    if (grid.empty()) throw InputError("hyperparameter grid is empty");
    return grid;
}

std::vector<Hyperparams> default_grid(const Hyperparams& base) {
    const std::vector<double> values{0.01, 0.1, 1.0, 10.0};
    return make_grid(base, values, values);
}

namespace {

struct FittedEmbedding {
    MatrixXd train_embed;
    MatrixXd test_embed;
    std::vector<double> bandwidths;
};

KernelSpec train_kernel_spec(const Dataset& train, const CvOptions& options, MatrixXd& K_out, KernelBundle* bundle_out) {
    if (options.mode == KernelMode::single || options.method == Method::kpca) {
        KernelMatrix K = gaussian_kernel(train.features, options.rule);
        K_out = K.values;
        return spec_of(K);
    }
    *bundle_out = per_feature_kernels(train.features, options.rule);
    K_out = weighted_kernel(*bundle_out);
    return spec_of(*bundle_out);
}

FittedEmbedding fit_and_embed(const Dataset& train, const Dataset& test, const Hyperparams& hyper,
                              const CvOptions& options) {
    FittedEmbedding out;
    if (options.method == Method::kpca) {
        MatrixXd K;
        const KernelSpec spec = train_kernel_spec(train, options, K, nullptr);
        const KpcaModel model = kpca_fit(K, hyper.k, options.center);
        out.train_embed = kpca_transform(model, K);
        out.test_embed = kpca_transform(model, cross_kernel(train.features, test.features, spec));
        out.bandwidths = spec.bandwidths;
        return out;
    }
    EmbeddingModel model;
    if (options.mode == KernelMode::single) {
        model = fit(train, gaussian_kernel(train.features, options.rule), hyper);
    } else {
        const KernelBundle bundle = per_feature_kernels(train.features, options.rule);
        model = fit(train, bundle, hyper);
    }
    out.train_embed = training_embedding(model);
    out.test_embed = transform(model, test.features);
    out.bandwidths = model.kernel.bandwidths;
    return out;
}

double mean_inner_accuracy(const Dataset& train, const Hyperparams& hyper, const CvOptions& options,
                           std::uint64_t seed) {
    const FoldPlan inner = stratified_folds(train, options.inner_folds, seed);
    double total = 0.0;
    for (const Fold& f : inner.folds) {
        total += holdout_accuracy(train.subset(f.train), train.subset(f.test), hyper, options);
    }
    return total / static_cast<double>(inner.folds.size());
}

template <class Fn>
void parallel_for(int count, int threads, Fn&& fn) {
    threads = std::max(1, std::min(threads, count));
    if (threads == 1) {
        for (int i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<int> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    std::vector<std::thread> pool;
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&] {
            for (int i = next++; i < count; i = next++) {
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(failure_mutex);
                    if (!failure) failure = std::current_exception();
                }
            }
        });
    }
    for (auto& th : pool) th.join();
    if (failure) std::rethrow_exception(failure);
}

}  // namespace

double holdout_accuracy(const Dataset& train, const Dataset& test, const Hyperparams& hyper, const CvOptions& options,
                        std::vector<double>* bandwidths) {
    const FittedEmbedding e = fit_and_embed(train, test, hyper, options);
    if (bandwidths) *bandwidths = e.bandwidths;
    return accuracy(knn_predict(e.train_embed, train.labels, e.test_embed), test.labels);
}

EvalReport cross_validate(const Dataset& dataset, const std::vector<Hyperparams>& grid, const CvOptions& options) {
    if (grid.empty()) throw InputError("cross_validate: hyperparameter grid is empty");
    dataset.validate();

    EvalReport report;
    report.method = options.method;
    report.grid = grid;
    report.options = options;
    report.class_names = dataset.class_names;
    report.plan = stratified_folds(dataset, options.fold_count, options.seed);
    const int folds = report.plan.fold_count;
    report.folds.resize(static_cast<std::size_t>(folds));
    std::vector<std::size_t> chosen(static_cast<std::size_t>(folds), 0);

    const bool tune = options.method == Method::ikdr && grid.size() > 1;
    parallel_for(folds, options.threads, [&](int f) {
        const Fold& fold = report.plan.folds[static_cast<std::size_t>(f)];
        const Dataset train = dataset.subset(fold.train);
        const Dataset test = dataset.subset(fold.test);
        FoldResult& result = report.folds[static_cast<std::size_t>(f)];
        result.fold = f;
        result.test_size = static_cast<int>(fold.test.size());

        std::size_t best = 0;
        if (tune) {
            double best_score = -1.0;
            const std::uint64_t inner_seed = options.seed + 1000003ULL * static_cast<std::uint64_t>(f + 1);
            for (std::size_t c = 0; c < grid.size(); ++c) {
                double score = 0.0;
                try {
                    score = mean_inner_accuracy(train, grid[c], options, inner_seed);
                } catch (const NumericalError& e) {
                    ++result.failed_candidates;
                    log::info("fold " + std::to_string(f) + ": candidate " + std::to_string(c) + " failed: " + e.what());
                }
                if (score > best_score) {
                    best_score = score;
                    best = c;
                }
            }
            result.inner_score = best_score;
        }
        chosen[static_cast<std::size_t>(f)] = best;
        result.lambda = grid[best].lambda;
        result.mu = grid[best].mu;
        try {
            result.accuracy = holdout_accuracy(train, test, grid[best], options, &result.bandwidths);
        } catch (const NumericalError& e) {
            throw NumericalError("fold " + std::to_string(f) + ": " + e.what());
        }
        log::info("fold " + std::to_string(f) + ": accuracy " + std::to_string(result.accuracy));
    });

    for (const auto& r : report.folds) report.accuracy_per_fold.push_back(r.accuracy);
    report.accuracy_mean = std::accumulate(report.accuracy_per_fold.begin(), report.accuracy_per_fold.end(), 0.0) /
                           static_cast<double>(folds);

    std::vector<int> votes(grid.size(), 0);
    for (const auto c : chosen) ++votes[c];
    const auto final_idx = static_cast<std::size_t>(std::max_element(votes.begin(), votes.end()) - votes.begin());
    report.final_hyper = grid[final_idx];

    const LabelIndicator H = build_label_indicator(dataset.labels, dataset.class_count);
    if (options.method == Method::kpca) {
        const KernelMatrix K = gaussian_kernel(dataset.features, options.rule);
        const KpcaModel model = kpca_fit(K.values, report.final_hyper.k, options.center);
        const MatrixXd magnitude = model.A.cwiseAbs();
        report.ip_value = ip_measure(magnitude, H);
        report.dimension_class_scores = dimension_class_scores(magnitude, H);
        report.notes.push_back("K-PCA coefficients are signed; Ip and class scores use their absolute values");
    } else {
        const EmbeddingModel model = fit(dataset, options.mode, options.rule, report.final_hyper);
        report.ip_value = ip_measure(model.A, H);
        report.dimension_class_scores = dimension_class_scores(model.A, H);
        if (options.mode == KernelMode::multi) {
            report.feature_profile = feature_selection_profile(model.alpha, dataset.feature_names);
        }
    }
    report.notes.push_back("folds are stratified by class");
    if (tune) report.notes.push_back("lambda and mu chosen per outer fold by inner stratified CV on the training split only");
    report.notes.push_back("Ip and class scores come from one fit on the full data with the most frequently chosen hyperparameters");
    return report;
}

}  // namespace ikdr
