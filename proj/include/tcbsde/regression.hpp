#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace tcbsde {

// Cross-sectional conditional-expectation basis. Polynomial: powers of the
// primary state up to `degree`, plus powers of an auxiliary state up to
// `aux_degree` when one is supplied. Indicator: equal-width bins spanning the
// participating states (local averages).
struct RegressionBasis {
    enum class Kind { polynomial, indicator };
    Kind kind{Kind::polynomial};
    int degree{3};
    int aux_degree{2};
    int bins{16};

    static RegressionBasis polynomial(int degree = 3, int aux_degree = 2);
    static RegressionBasis indicator(int bins);
};

struct FitReport {
    std::size_t step{};
    std::size_t participating{};
    double condition{};    // extreme-eigenvalue ratio of the scaled normal matrix
    int dropped_columns{}; // removed as degenerate or by the rank fallback
};

// One time step's least-squares machinery: the design is assembled once over
// the participating rows, then any number of targets reuse the factorization.
// All accumulations run serially in ascending row order, so fits do not
// depend on the worker count.
class StepRegression {
  public:
    StepRegression(const RegressionBasis& basis, std::span<const double> state,
                   std::span<const double> aux, std::vector<std::size_t> rows);

    std::size_t row_count() const { return rows_.size(); }
    const std::vector<std::size_t>& rows() const { return rows_; }

    // target is a full per-path array; the result aligns with rows().
    std::vector<double> fitted(std::span<const double> target) const;

    double condition() const { return condition_; }
    int dropped_columns() const { return dropped_; }

  private:
    std::vector<std::size_t> rows_;
    std::size_t columns_{};
    std::vector<double> features_;  // row-major rows x columns, scaled
    std::vector<double> scale_;     // per-column equilibration divisor
    std::vector<double> solver_;    // packed LDLT of the scaled normal matrix
    double condition_{};
    int dropped_{};
    bool indicator_{};
    std::vector<double> bin_lo_;    // indicator kind
    double bin_width_{};
    std::vector<std::size_t> bin_of_row_;
    std::vector<double> bin_count_;
};

}  // namespace tcbsde
