#include "invsysid/metrics.hpp"

#include <cmath>

#include "invsysid/errors.hpp"

namespace invsysid {

FitMetrics fitpercent(std::span<const double> y, std::span<const double> y_hat) {
    if (y.size() != y_hat.size()) throw param_error("fitpercent: length mismatch");
    if (y.size() < 2) throw param_error("fitpercent: need at least two samples");

    double mean = 0.0;
    for (double v : y) mean += v;
    mean /= static_cast<double>(y.size());

    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < y.size(); ++k) {
        const double e = y[k] - y_hat[k];
        const double c = y[k] - mean;
        num += e * e;
        den += c * c;
    }
    if (den <= 0.0)
        throw domain_error("fitpercent undefined: measured output is constant");

    FitMetrics m;
    m.nrmse = std::sqrt(num / den);
    m.fitpercent = 100.0 * (1.0 - m.nrmse);
    return m;
}

Criteria criteria(double V, int d, std::size_t N, double sstot) {
    if (N <= static_cast<std::size_t>(d) + 1)
        throw domain_error("criteria: need N > d + 1 degrees of freedom");
    if (!(V > 0.0)) throw domain_error("criteria: loss must be positive");

    const auto n = static_cast<double>(N);
    const auto dd = static_cast<double>(d);

    Criteria c;
    c.afpe = V * (1.0 + dd / n) / (1.0 - dd / n);
    c.aicc = n * std::log(V) + 2.0 * dd + 2.0 * dd * (dd + 1.0) / (n - dd - 1.0);
    c.bic = n * std::log(V) + dd * std::log(n);
    if (sstot > 0.0) {
        const double r2 = 1.0 - n * V / sstot;
        c.adj_r2 = 1.0 - (1.0 - r2) * (n - 1.0) / (n - dd - 1.0);
    } else {
        c.adj_r2 = std::nan("");
    }
    return c;
}

}  // namespace invsysid
