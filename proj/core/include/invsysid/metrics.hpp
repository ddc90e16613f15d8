#pragma once

#include <cstddef>
#include <span>

namespace invsysid {

struct FitMetrics {
    double nrmse = 0.0;
    double fitpercent = 0.0;  // 100 * (1 - nrmse); negative when worse than the mean
};

/// NRMSE = ||y - yhat||_2 / ||y - mean(y)||_2 and its goodness-of-fit form.
/// Throws domain_error when y is constant (metric undefined).
FitMetrics fitpercent(std::span<const double> y, std::span<const double> y_hat);

struct Criteria {
    double afpe = 0.0;
    double aicc = 0.0;
    double bic = 0.0;
    double adj_r2 = 0.0;
};

/// Model-selection criteria from the mean squared residual V, parameter count
/// d, sample count N, and the total sum of squares about the mean (for adj R2):
///   AFPE  = V * (1 + d/N) / (1 - d/N)
///   AICc  = N ln V + 2d + 2d(d+1)/(N-d-1)
///   BIC   = N ln V + d ln N
///   AdjR2 = 1 - (1 - R2)(N-1)/(N-d-1),  R2 = 1 - N*V/sstot
/// Throws domain_error unless N > d + 1 and V > 0.
Criteria criteria(double V, int d, std::size_t N, double sstot);

/// Per-model quality report produced by the estimator and the order sweep.
struct FitReport {
    double fitpercent = 0.0;
    double nrmse = 0.0;
    double afpe = 0.0;
    double aicc = 0.0;
    double bic = 0.0;
    double adj_r2 = 0.0;
    int n_params = 0;         // d = np + nz + 1
    std::size_t n_samples = 0;
    int np = 0;
    int nz = 0;
};

}  // namespace invsysid
