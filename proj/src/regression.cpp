#include "tcbsde/regression.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tcbsde {

RegressionBasis RegressionBasis::polynomial(int degree, int aux_degree) {
    if (degree < 0) throw std::invalid_argument("RegressionBasis: negative degree");
    RegressionBasis b;
    b.kind = Kind::polynomial;
    b.degree = degree;
    b.aux_degree = aux_degree;
    return b;
}

RegressionBasis RegressionBasis::indicator(int bins) {
    if (bins < 1) throw std::invalid_argument("RegressionBasis: needs at least one bin");
    RegressionBasis b;
    b.kind = Kind::indicator;
    b.bins = bins;
    return b;
}

StepRegression::StepRegression(const RegressionBasis& basis, std::span<const double> state,
                               std::span<const double> aux, std::vector<std::size_t> rows)
    : rows_(std::move(rows)) {
    if (!std::is_sorted(rows_.begin(), rows_.end()))
        std::sort(rows_.begin(), rows_.end());
    const std::size_t n = rows_.size();
    indicator_ = basis.kind == RegressionBasis::Kind::indicator;

    if (indicator_) {
        const auto bins = static_cast<std::size_t>(basis.bins);
        double lo = 0.0, hi = 0.0;
        if (n > 0) {
            lo = hi = state[rows_[0]];
            for (std::size_t r = 1; r < n; ++r) {
                lo = std::min(lo, state[rows_[r]]);
                hi = std::max(hi, state[rows_[r]]);
            }
        }
        bin_width_ = (hi - lo) / static_cast<double>(bins);
        bin_lo_.assign(1, lo);
        bin_of_row_.resize(n);
        bin_count_.assign(bins, 0.0);
        for (std::size_t r = 0; r < n; ++r) {
            std::size_t b = 0;
            if (bin_width_ > 0.0)
                b = std::min(bins - 1, static_cast<std::size_t>((state[rows_[r]] - lo) / bin_width_));
            bin_of_row_[r] = b;
            bin_count_[b] += 1.0;
        }
        double cmin = 0.0, cmax = 0.0;
        for (double c : bin_count_) {
            if (c > 0.0) {
                cmin = cmin == 0.0 ? c : std::min(cmin, c);
                cmax = std::max(cmax, c);
            } else {
                ++dropped_;
            }
        }
        condition_ = cmin > 0.0 ? cmax / cmin : 0.0;
        columns_ = bins;
        return;
    }

    const std::size_t deg = static_cast<std::size_t>(basis.degree);
    const std::size_t aux_deg = aux.empty() ? 0 : static_cast<std::size_t>(basis.aux_degree);
    const std::size_t p = 1 + deg + aux_deg;

    std::vector<double> raw(n * p);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t m = rows_[r];
        double* row = raw.data() + r * p;
        row[0] = 1.0;
        double w = 1.0;
        for (std::size_t j = 1; j <= deg; ++j) {
            w *= state[m];
            row[j] = w;
        }
        double v = 1.0;
        for (std::size_t j = 1; j <= aux_deg; ++j) {
            v *= aux[m];
            row[deg + j] = v;
        }
    }

    Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p),
                                                 static_cast<Eigen::Index>(p));
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = raw.data() + r * p;
        for (std::size_t a = 0; a < p; ++a)
            for (std::size_t b = a; b < p; ++b)
                gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) += row[a] * row[b];
    }
    for (std::size_t a = 0; a < p; ++a)
        for (std::size_t b = 0; b < a; ++b)
            gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
                gram(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(a));

    double max_diag = 0.0;
    for (std::size_t a = 0; a < p; ++a)
        max_diag = std::max(max_diag, gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a)));

    std::vector<std::size_t> active;
    for (std::size_t a = 0; a < p; ++a) {
        const double d = gram(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(a));
        if (a == 0 || d > 1e-28 * max_diag)
            active.push_back(a);
        else
            ++dropped_;
    }
    while (active.size() > std::max<std::size_t>(1, n)) {
        active.pop_back();
        ++dropped_;
    }

    Eigen::MatrixXd inv;
    Eigen::VectorXd scale;
    while (true) {
        const auto q = static_cast<Eigen::Index>(active.size());
        Eigen::MatrixXd s(q, q);
        scale.resize(q);
        for (Eigen::Index a = 0; a < q; ++a) {
            const double d = gram(static_cast<Eigen::Index>(active[static_cast<std::size_t>(a)]),
                                  static_cast<Eigen::Index>(active[static_cast<std::size_t>(a)]));
            scale(a) = d > 0.0 ? std::sqrt(d) : 1.0;
        }
        for (Eigen::Index a = 0; a < q; ++a)
            for (Eigen::Index b = 0; b < q; ++b)
                s(a, b) = gram(static_cast<Eigen::Index>(active[static_cast<std::size_t>(a)]),
                               static_cast<Eigen::Index>(active[static_cast<std::size_t>(b)])) /
                          (scale(a) * scale(b));

        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(s);
        const double emin = eig.eigenvalues().minCoeff();
        const double emax = eig.eigenvalues().maxCoeff();
        if (q > 1 && (emax <= 0.0 || emin <= 1e-12 * emax)) {
            // Rank fallback: retire the highest-order column and retry.
            active.pop_back();
            ++dropped_;
            continue;
        }
        condition_ = emin > 0.0 ? emax / emin : 0.0;
        Eigen::VectorXd li = eig.eigenvalues();
        for (Eigen::Index a = 0; a < q; ++a) li(a) = li(a) > 0.0 ? 1.0 / li(a) : 0.0;
        inv = eig.eigenvectors() * li.asDiagonal() * eig.eigenvectors().transpose();
        break;
    }

    columns_ = active.size();
    solver_.resize(columns_ * columns_);
    for (std::size_t a = 0; a < columns_; ++a)
        for (std::size_t b = 0; b < columns_; ++b)
            solver_[a * columns_ + b] = inv(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    scale_.resize(columns_);
    features_.resize(n * columns_);
    for (std::size_t a = 0; a < columns_; ++a) scale_[a] = scale(static_cast<Eigen::Index>(a));
    for (std::size_t r = 0; r < n; ++r)
        for (std::size_t a = 0; a < columns_; ++a)
            features_[r * columns_ + a] = raw[r * p + active[a]] / scale_[a];
}

std::vector<double> StepRegression::fitted(std::span<const double> target) const {
    const std::size_t n = rows_.size();
    std::vector<double> out(n, 0.0);
    if (n == 0) return out;

    // A constant target is its own projection; reproduce it bitwise instead of
    // taking roundoff from the solve.
    bool constant = true;
    const double first = target[rows_[0]];
    for (std::size_t r = 1; r < n; ++r) {
        if (target[rows_[r]] != first) {
            constant = false;
            break;
        }
    }
    if (constant && std::isfinite(first)) {
        out.assign(n, first);
        return out;
    }

    if (indicator_) {
        std::vector<double> sums(bin_count_.size(), 0.0);
        for (std::size_t r = 0; r < n; ++r) sums[bin_of_row_[r]] += target[rows_[r]];
        for (std::size_t b = 0; b < sums.size(); ++b)
            if (bin_count_[b] > 0.0) sums[b] /= bin_count_[b];
        for (std::size_t r = 0; r < n; ++r) out[r] = sums[bin_of_row_[r]];
        return out;
    }

    // Fit the deviation from the target mean. The intercept column spans
    // constants, so the projection is unchanged, but the mean rides through
    // exactly instead of through the solve.
    double ybar = 0.0;
    for (std::size_t r = 0; r < n; ++r) ybar += target[rows_[r]];
    ybar /= static_cast<double>(n);

    const std::size_t p = columns_;
    std::vector<double> rhs(p, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        const double t = target[rows_[r]] - ybar;
        const double* row = features_.data() + r * p;
        for (std::size_t a = 0; a < p; ++a) rhs[a] += row[a] * t;
    }
    std::vector<double> beta(p, 0.0);
    for (std::size_t a = 0; a < p; ++a) {
        double acc = 0.0;
        for (std::size_t b = 0; b < p; ++b) acc += solver_[a * p + b] * rhs[b];
        beta[a] = acc;
    }
    for (std::size_t r = 0; r < n; ++r) {
        const double* row = features_.data() + r * p;
        double acc = 0.0;
        for (std::size_t a = 0; a < p; ++a) acc += row[a] * beta[a];
        out[r] = ybar + acc;
    }
    return out;
}

}  // namespace tcbsde
