#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "ikdr/data.hpp"
#include "ikdr/hyperparams.hpp"
#include "ikdr/ikdr.hpp"
#include "ikdr/kernels.hpp"

namespace ikdr {

/// Euclidean 1-NN over embedded columns; ties go to the smallest training index.
std::vector<int> knn_predict(const Eigen::MatrixXd& train_embed, std::span<const int> train_labels,
                             const Eigen::MatrixXd& test_embed);

double accuracy(std::span<const int> predicted, std::span<const int> truth);

/// Mean over columns of max_q H(q,:) a_i / ||H a_i||_1. Requires A >= 0.
double ip_measure(const Eigen::MatrixXd& A, const LabelIndicator& H);

/// D = H A with l1-normalized columns (C x k). Requires A >= 0.
Eigen::MatrixXd dimension_class_scores(const Eigen::MatrixXd& A, const LabelIndicator& H);

struct FeatureProfile {
    /// (feature index, weight), descending weight; ties keep index order.
    std::vector<std::pair<int, double>> ranked;
    std::vector<std::string> names;  ///< aligned with `ranked`
    int l0 = 0;                      ///< weights above `threshold`
    double threshold = 1e-6;
};

FeatureProfile feature_selection_profile(const Eigen::VectorXd& alpha, const std::vector<std::string>& feature_names,
                                         double threshold = 1e-6);

/// K-PCA baseline. Without centering the columns of A are the top-k
/// eigenvectors of K scaled by 1/sqrt(eigenvalue), so A'KA = I.
struct KpcaModel {
    Eigen::MatrixXd A;
    Eigen::VectorXd eigenvalues;  ///< top-k, descending
    bool centered = false;
    Eigen::VectorXd train_column_means;  ///< for centering cross kernels
    double train_grand_mean = 0.0;
};

KpcaModel kpca_fit(const Eigen::MatrixXd& K, int k, bool center = false);
/// A' K_cross (k x M); `cross` is N x M kernel values against training rows.
Eigen::MatrixXd kpca_transform(const KpcaModel& model, const Eigen::MatrixXd& cross);
Eigen::MatrixXd kpca_transform(const Eigen::MatrixXd& A, const Eigen::MatrixXd& cross);

enum class Method { ikdr, kpca };
std::string to_string(Method method);

struct CvOptions {
    int fold_count = 10;
    int inner_folds = 5;
    std::uint64_t seed = 0;
    KernelMode mode = KernelMode::single;
    BandwidthRule rule = BandwidthRule::mean_distance;
    Method method = Method::ikdr;
    bool center = false;  ///< K-PCA only
    int threads = 1;
};

struct FoldResult {
    int fold = 0;
    int test_size = 0;
    double accuracy = 0.0;
    double lambda = 0.0;
    double mu = 0.0;
    double inner_score = 0.0;
    int failed_candidates = 0;
    std::vector<double> bandwidths;  ///< training-split bandwidths used for this fold
};

struct EvalReport {
    Method method = Method::ikdr;
    double accuracy_mean = 0.0;
    std::vector<double> accuracy_per_fold;
    std::vector<FoldResult> folds;
    double ip_value = 0.0;
    Eigen::MatrixXd dimension_class_scores;
    FeatureProfile feature_profile;
    Hyperparams final_hyper;  ///< hyperparameters of the full-data fit
    std::vector<Hyperparams> grid;
    CvOptions options;
    std::vector<std::string> class_names;
    std::vector<std::string> notes;
    FoldPlan plan;
};

/// Lambda x mu grid around `base` (other fields copied).
std::vector<Hyperparams> make_grid(const Hyperparams& base, const std::vector<double>& lambdas,
                                   const std::vector<double>& mus);

/// Default grid: lambda, mu in {0.01, 0.1, 1, 10}.
std::vector<Hyperparams> default_grid(const Hyperparams& base);

/// Accuracy of one fit on `train` evaluated on `test` (kernels from `train` only).
double holdout_accuracy(const Dataset& train, const Dataset& test, const Hyperparams& hyper, const CvOptions& options,
                        std::vector<double>* bandwidths = nullptr);

/**
 * Stratified outer CV. For each outer fold the (lambda, mu) pair is chosen
 * by an inner stratified CV on the training split (skipped for a
 * single-candidate grid), refit on the full training split, and scored by
 * 1-NN on the held-out fold. Candidates whose fit fails numerically score
 * zero and are counted in FoldResult::failed_candidates. Ip, label-space
 * scores and the kernel-weight profile come from one fit on the full data
 * with the most frequently selected candidate.
 */
EvalReport cross_validate(const Dataset& dataset, const std::vector<Hyperparams>& grid, const CvOptions& options);

}  // namespace ikdr
