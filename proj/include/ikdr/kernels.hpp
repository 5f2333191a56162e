#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ikdr {

/// How the Gaussian bandwidth delta is derived from training pairs.
enum class BandwidthRule {
    mean_distance,          ///< delta = mean ||y_i - y_j||   (default)
    mean_squared_distance,  ///< delta = mean ||y_i - y_j||^2
};

std::string to_string(BandwidthRule rule);
BandwidthRule bandwidth_rule_from_string(const std::string& name);

/// Gram matrix of a Gaussian kernel K(i, j) = exp(-||y_i - y_j||^2 / bandwidth).
struct KernelMatrix {
    Eigen::MatrixXd values;
    double bandwidth = 0.0;
    BandwidthRule rule = BandwidthRule::mean_distance;
};

/// f base kernels with simplex weights alpha.
struct KernelBundle {
    std::vector<KernelMatrix> base;
    Eigen::VectorXd alpha;
    /// Base kernels whose feature was constant; they hold the identity matrix.
    std::vector<bool> degenerate;
    BandwidthRule rule = BandwidthRule::mean_distance;

    Eigen::Index size() const { return static_cast<Eigen::Index>(base.size()); }
    Eigen::Index samples() const { return base.empty() ? 0 : base.front().values.rows(); }
    void validate() const;
};

/// Mean pairwise distance (or squared distance) over all ordered pairs i != j.
double mean_pairwise_distance(const Eigen::MatrixXd& features, BandwidthRule rule);

/// Throws NumericalError("zero bandwidth") when all rows coincide.
KernelMatrix gaussian_kernel(const Eigen::MatrixXd& features, BandwidthRule rule = BandwidthRule::mean_distance);
/// Gram matrix at a fixed bandwidth; the diagonal is exactly 1.
Eigen::MatrixXd gaussian_gram(const Eigen::MatrixXd& features, double bandwidth);

/// One Gaussian kernel per feature column, alpha uniform. A constant column
/// yields K = I, flagged in `degenerate`.
KernelBundle per_feature_kernels(const Eigen::MatrixXd& features,
                                 BandwidthRule rule = BandwidthRule::mean_distance);

Eigen::MatrixXd weighted_kernel(const KernelBundle& bundle);
Eigen::MatrixXd weighted_kernel(const std::vector<KernelMatrix>& base, const Eigen::VectorXd& alpha);

/// diag(K 1) - K.
Eigen::MatrixXd laplacian(const Eigen::MatrixXd& K);

/// Everything needed to evaluate kernels against unseen samples. Bandwidths
/// are the training-time values.
struct KernelSpec {
    bool per_feature = false;
    BandwidthRule rule = BandwidthRule::mean_distance;
    std::vector<double> bandwidths;
    std::vector<bool> degenerate;
    Eigen::VectorXd alpha;
};

KernelSpec spec_of(const KernelMatrix& single);
KernelSpec spec_of(const KernelBundle& bundle);

/**
 * Kernel values between training rows (N x d) and test rows (M x d), as an
 * N x M matrix. In per-feature mode entry (i, j) is
 * sum_m alpha_m exp(-(y_im - t_jm)^2 / delta_m), accumulated in the same
 * order as weighted_kernel so that test == train reproduces it exactly.
 * Degenerate (constant-feature) kernels contribute 1 only when the test row
 * equals the training row in every feature, matching K = I on distinct rows.
 */
Eigen::MatrixXd cross_kernel(const Eigen::MatrixXd& train, const Eigen::MatrixXd& test, const KernelSpec& spec);

}  // namespace ikdr
