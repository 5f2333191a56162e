#include "ikdr/kernels.hpp"

#include <algorithm>
#include <cmath>

#include "ikdr/error.hpp"
#include "ikdr/log.hpp"

namespace ikdr {

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

std::string to_string(BandwidthRule rule) {
    return rule == BandwidthRule::mean_distance ? "mean" : "squared-mean";
}

BandwidthRule bandwidth_rule_from_string(const std::string& name) {
    if (name == "mean") return BandwidthRule::mean_distance;
    if (name == "squared-mean") return BandwidthRule::mean_squared_distance;
    throw InputError("unknown bandwidth rule '" + name + "' (expected mean|squared-mean)");
}

void KernelBundle::validate() const {
    if (base.empty()) throw InputError("kernel bundle is empty");
    if (alpha.size() != size()) throw InputError("alpha length does not match kernel count");
    if ((alpha.array() < 0.0).any() || std::abs(alpha.sum() - 1.0) > 1e-9) {
        throw InputError("kernel weights are not on the simplex");
    }
    for (const auto& k : base) {
        if (k.values.rows() != samples() || k.values.cols() != samples()) {
            throw InputError("base kernels have inconsistent sizes");
        }
    }
}

namespace {

inline double squared_distance(const MatrixXd& a, Index i, const MatrixXd& b, Index j) {
    double s = 0.0;
    for (Index c = 0; c < a.cols(); ++c) {
        const double diff = a(i, c) - b(j, c);
        s += diff * diff;
    }
    return s;
}

}  // namespace

double mean_pairwise_distance(const MatrixXd& features, BandwidthRule rule) {
    const Index n = features.rows();
    if (n < 2) throw InputError("kernel needs at least 2 samples");
    double total = 0.0;
    for (Index i = 0; i < n; ++i) {
        for (Index j = i + 1; j < n; ++j) {
            const double d2 = squared_distance(features, i, features, j);
            total += rule == BandwidthRule::mean_distance ? std::sqrt(d2) : d2;
        }
    }
    return total / (0.5 * static_cast<double>(n) * static_cast<double>(n - 1));
}

MatrixXd gaussian_gram(const MatrixXd& features, double bandwidth) {
    const Index n = features.rows();
    MatrixXd K(n, n);
    for (Index i = 0; i < n; ++i) {
        K(i, i) = 1.0;
        for (Index j = i + 1; j < n; ++j) {
            const double v = std::exp(-squared_distance(features, i, features, j) / bandwidth);
            K(i, j) = v;
            K(j, i) = v;
        }
    }
    return K;
}

KernelMatrix gaussian_kernel(const MatrixXd& features, BandwidthRule rule) {
    if (!features.allFinite()) throw InputError("kernel input contains NaN or Inf");
    const double delta = mean_pairwise_distance(features, rule);
    if (!(delta > 0.0)) throw NumericalError("zero bandwidth: all samples coincide");
    return {gaussian_gram(features, delta), delta, rule};
}

KernelBundle per_feature_kernels(const MatrixXd& features, BandwidthRule rule) {
    const Index d = features.cols();
    if (d < 2) throw InputError("per-feature kernels need at least 2 features");
    KernelBundle bundle;
    bundle.base.reserve(static_cast<std::size_t>(d));
    for (Index m = 0; m < d; ++m) {
        const MatrixXd column = features.col(m);
        const double delta = mean_pairwise_distance(column, rule);
        if (delta > 0.0) {
            bundle.base.push_back({gaussian_gram(column, delta), delta, rule});
            bundle.degenerate.push_back(false);
        } else {
            log::warn("feature " + std::to_string(m) + " is constant; its kernel is replaced by the identity");
            bundle.base.push_back({MatrixXd::Identity(features.rows(), features.rows()), 0.0, rule});
            bundle.degenerate.push_back(true);
        }
    }
    bundle.alpha = VectorXd::Constant(d, 1.0 / static_cast<double>(d));
    bundle.rule = rule;
    return bundle;
}

MatrixXd weighted_kernel(const std::vector<KernelMatrix>& base, const VectorXd& alpha) {
    if (base.empty() || static_cast<Index>(base.size()) != alpha.size()) {
        throw InputError("weighted_kernel: kernel count and alpha length differ");
    }
    const Index n = base.front().values.rows();
    MatrixXd out = MatrixXd::Zero(n, n);
    for (std::size_t m = 0; m < base.size(); ++m) {
        const double w = alpha(static_cast<Index>(m));
        if (w == 0.0) continue;
        out += w * base[m].values;
    }
    return out;
}

MatrixXd weighted_kernel(const KernelBundle& bundle) { return weighted_kernel(bundle.base, bundle.alpha); }

MatrixXd laplacian(const MatrixXd& K) {
    MatrixXd L = -K;
    L.diagonal() += K.rowwise().sum();
    return L;
}

KernelSpec spec_of(const KernelMatrix& single) {
    KernelSpec spec;
    spec.per_feature = false;
    spec.rule = single.rule;
    spec.bandwidths = {single.bandwidth};
    spec.degenerate = {false};
    spec.alpha = VectorXd::Ones(1);
    return spec;
}

KernelSpec spec_of(const KernelBundle& bundle) {
    KernelSpec spec;
    spec.per_feature = true;
    spec.rule = bundle.rule;
    for (const auto& k : bundle.base) spec.bandwidths.push_back(k.bandwidth);
    spec.degenerate = bundle.degenerate;
    spec.alpha = bundle.alpha;
    return spec;
}

MatrixXd cross_kernel(const MatrixXd& train, const MatrixXd& test, const KernelSpec& spec) {
    if (train.cols() != test.cols()) {
        throw InputError("cross_kernel: feature dimension mismatch (" + std::to_string(train.cols()) + " vs " +
                         std::to_string(test.cols()) + ")");
    }
    const Index n = train.rows();
    const Index m = test.rows();
    if (!spec.per_feature) {
        if (spec.bandwidths.size() != 1) throw InputError("cross_kernel: single-kernel spec needs one bandwidth");
        const double delta = spec.bandwidths.front();
        MatrixXd out(n, m);
        for (Index j = 0; j < m; ++j) {
            for (Index i = 0; i < n; ++i) out(i, j) = std::exp(-squared_distance(train, i, test, j) / delta);
        }
        return out;
    }

    const Index f = train.cols();
    if (static_cast<Index>(spec.bandwidths.size()) != f || spec.alpha.size() != f) {
        throw InputError("cross_kernel: per-feature spec does not match feature count");
    }
    MatrixXd same;
    const bool any_degenerate = std::find(spec.degenerate.begin(), spec.degenerate.end(), true) != spec.degenerate.end();
    if (any_degenerate) {
        same.resize(n, m);
        for (Index j = 0; j < m; ++j) {
            for (Index i = 0; i < n; ++i) same(i, j) = (train.row(i).array() == test.row(j).array()).all() ? 1.0 : 0.0;
        }
    }
    MatrixXd out = MatrixXd::Zero(n, m);
    MatrixXd base(n, m);
    for (Index c = 0; c < f; ++c) {
        const double w = spec.alpha(c);
        if (w == 0.0) continue;
        if (spec.degenerate[static_cast<std::size_t>(c)]) {
            out += w * same;
            continue;
        }
        const double delta = spec.bandwidths[static_cast<std::size_t>(c)];
        for (Index j = 0; j < m; ++j) {
            for (Index i = 0; i < n; ++i) {
                const double diff = train(i, c) - test(j, c);
                base(i, j) = diff == 0.0 ? 1.0 : std::exp(-(diff * diff) / delta);
            }
        }
        out += w * base;
    }
    return out;
}

}  // namespace ikdr
