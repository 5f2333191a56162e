#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace ikdr {

using Index = Eigen::Index;
using IndexList = std::vector<Index>;

/// N samples (rows) by d features with class ids in [0, class_count).
struct Dataset {
    Eigen::MatrixXd features;
    std::vector<int> labels;
    int class_count = 0;
    /// Original label string for each encoded class id (first-appearance order).
    std::vector<std::string> class_names;
    std::vector<std::string> feature_names;

    Index size() const { return features.rows(); }
    Index dims() const { return features.cols(); }

    /// Rows in the given order. Class ids are kept as-is, so a subset may lack
    /// some classes; call validate() on it only if that matters.
    Dataset subset(std::span<const Index> rows) const;

    /// Throws InputError if any invariant is violated.
    void validate() const;
};

/// Build and validate a dataset. Names default to "0", "1", ... and "f0", "f1", ...
Dataset make_dataset(Eigen::MatrixXd features, std::vector<int> labels, int class_count,
                     std::vector<std::string> class_names = {},
                     std::vector<std::string> feature_names = {});

/// Load a header-first CSV. Labels are re-encoded in order of first appearance.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);

/// Load a feature-only CSV (e.g. test data for transform). If `skip_column`
/// is non-empty and present, that column is ignored.
Eigen::MatrixXd load_features_csv(const std::filesystem::path& path,
                                  const std::vector<std::string>& expected_names,
                                  const std::string& skip_column);

/// One-hot class indicator H (C x N) with H(q, i) = 1 iff labels[i] == q.
struct LabelIndicator {
    Eigen::MatrixXd H;

    int class_count() const { return static_cast<int>(H.rows()); }
    Index size() const { return H.cols(); }
    /// Logical complement: all-ones minus H.
    Eigen::MatrixXd complement() const;
    /// Samples per class (row sums of H).
    Eigen::VectorXd class_sizes() const;
    /// Class of every sample, recovered from the one-hot columns.
    std::vector<int> labels() const;
};

LabelIndicator build_label_indicator(std::span<const int> labels, int class_count);

struct Fold {
    IndexList train;
    IndexList test;
};

struct FoldPlan {
    std::vector<Fold> folds;
    int fold_count = 0;
    std::uint64_t seed = 0;

    /// JSON text with the fold membership, for audit trails.
    std::string to_json() const;
};

/**
 * Stratified k-fold plan.
 *
 * Each class is shuffled independently (SplitMix64 seeded with `seed`), the
 * shuffled class lists are concatenated, and position p goes to fold p mod F.
 * This keeps every fold within one sample of the global class proportions and
 * fold sizes within one of each other. If the smallest class has fewer than
 * `fold_count` members the plan uses that many folds instead and logs a warning.
 */
FoldPlan stratified_folds(std::span<const int> labels, int class_count, int fold_count,
                          std::uint64_t seed);
FoldPlan stratified_folds(const Dataset& dataset, int fold_count, std::uint64_t seed);

/// Write rows of `values` as CSV with the given header (12 significant digits).
void write_matrix_csv(const std::filesystem::path& path, const std::vector<std::string>& header,
                      const Eigen::MatrixXd& values);

}  // namespace ikdr
