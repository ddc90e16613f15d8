#include "invsysid/tf.hpp"

#include <cmath>
#include <limits>

#include <unsupported/Eigen/MatrixFunctions>

#include "invsysid/errors.hpp"

namespace invsysid {

void ContinuousTF::validate() const {
    if (num.empty() || den.empty()) throw param_error("transfer function has no coefficients");
    if (num.size() > den.size())
        throw param_error("transfer function must be proper (deg num <= deg den)");
    if (den.front() != 1.0) throw param_error("denominator must be monic");
    for (double c : num)
        if (!std::isfinite(c)) throw param_error("non-finite numerator coefficient");
    for (double c : den)
        if (!std::isfinite(c)) throw param_error("non-finite denominator coefficient");
}

double ContinuousTF::dc_gain() const {
    const double a0 = den.back();
    const double b0 = num.back();
    if (a0 == 0.0)
        return b0 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity() * (b0 > 0 ? 1 : -1);
    return b0 / a0;
}

std::vector<std::complex<double>> poly_roots(std::span<const double> monic_desc) {
    const auto n = static_cast<Eigen::Index>(monic_desc.size()) - 1;
    if (n <= 0) return {};
    Eigen::MatrixXd companion = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i + 1 < n; ++i) companion(i + 1, i) = 1.0;
    for (Eigen::Index i = 0; i < n; ++i)
        companion(i, n - 1) = -monic_desc[static_cast<std::size_t>(n - i)];
    Eigen::EigenSolver<Eigen::MatrixXd> solver(companion, /*computeEigenvectors=*/false);
    std::vector<std::complex<double>> roots(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) roots[static_cast<std::size_t>(i)] = solver.eigenvalues()(i);
    return roots;
}

bool ContinuousTF::stable() const {
    for (const auto& r : poly_roots(den)) {
        if (r.real() >= 0.0) return false;
    }
    return true;
}

double characteristic_frequency(std::span<const double> monic_desc) {
    double w0 = 0.0;
    for (std::size_t i = 1; i < monic_desc.size(); ++i) {
        const double mag = std::abs(monic_desc[i]);
        if (mag > 0.0)
            w0 = std::max(w0, std::pow(mag, 1.0 / static_cast<double>(i)));
    }
    if (!(w0 > 0.0)) return 1.0;
    return std::clamp(w0, 1e-9, 1e12);
}

StateSpace to_state_space(const ContinuousTF& tf) {
    tf.validate();
    const int n = tf.np();
    StateSpace ss;
    if (n == 0) {
        // Pure gain.
        ss.A.resize(0, 0);
        ss.B.resize(0);
        ss.C.resize(0);
        ss.D = tf.num.back() / tf.den.back();
        return ss;
    }

    // Frequency-scaled phase-variable form: substituting s = w0*s~ gives a
    // companion matrix with O(1) entries, so the matrix exponential stays well
    // conditioned even when the raw coefficients span many decades.
    const double w0 = characteristic_frequency(tf.den);
    std::vector<double> den_s(tf.den.size());  // descending, monic
    den_s[0] = 1.0;
    double p = 1.0;
    for (std::size_t j = 1; j < tf.den.size(); ++j) {
        p *= w0;
        den_s[j] = tf.den[j] / p;
    }
    const int m = tf.nz();
    std::vector<double> num_s(tf.num.size());  // b~_k = b_k * w0^(k-n)
    for (std::size_t i = 0; i < tf.num.size(); ++i) {
        const int k = m - static_cast<int>(i);
        num_s[i] = tf.num[i] * std::pow(w0, static_cast<double>(k - n));
    }

    ss.A = Eigen::MatrixXd::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) ss.A(i, i + 1) = w0;
    for (int i = 0; i < n; ++i)
        ss.A(n - 1, i) = -w0 * den_s[static_cast<std::size_t>(n - i)];
    ss.B = Eigen::VectorXd::Zero(n);
    ss.B(n - 1) = w0;

    // Proper-but-not-strictly-proper: peel off the direct term first.
    std::vector<double> b(static_cast<std::size_t>(n) + 1, 0.0);
    const auto offset = static_cast<std::size_t>(n) + 1 - num_s.size();
    for (std::size_t i = 0; i < num_s.size(); ++i) b[offset + i] = num_s[i];
    ss.D = b[0];
    ss.C = Eigen::RowVectorXd::Zero(n);
    for (int i = 0; i < n; ++i) {
        // Coefficient of s~^i in B~(s~) - D*A~(s~).
        const double bi = b[static_cast<std::size_t>(n - i)];
        const double ai = den_s[static_cast<std::size_t>(n - i)];
        ss.C(i) = bi - ss.D * ai;
    }
    return ss;
}

void zoh_discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double dt,
                    Eigen::MatrixXd& Ad, Eigen::MatrixXd& Bd) {
    const Eigen::Index n = A.rows();
    const Eigen::Index m = B.cols();
    Eigen::MatrixXd aug = Eigen::MatrixXd::Zero(n + m, n + m);
    aug.topLeftCorner(n, n) = A;
    aug.topRightCorner(n, m) = B;
    const Eigen::MatrixXd expm = (aug * dt).exp();
    Ad = expm.topLeftCorner(n, n);
    Bd = expm.topRightCorner(n, m);
}

std::vector<double> simulate_lti(const ContinuousTF& tf, std::span<const double> u,
                                 double dt) {
    if (dt <= 0) throw param_error("simulate_lti: dt must be positive");
    const StateSpace ss = to_state_space(tf);
    const auto n = ss.A.rows();
    std::vector<double> y(u.size());
    if (n == 0) {
        for (std::size_t k = 0; k < u.size(); ++k) y[k] = ss.D * u[k];
        return y;
    }
    Eigen::MatrixXd Ad, Bd;
    zoh_discretize(ss.A, ss.B, dt, Ad, Bd);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(n);
    for (std::size_t k = 0; k < u.size(); ++k) {
        y[k] = ss.C * x + ss.D * u[k];
        x = Ad * x + Bd * u[k];
    }
    return y;
}

SampledSeries simulate_tf(const ContinuousTF& tf, const SampledSeries& input,
                          const std::string& input_channel,
                          const std::string& output_channel) {
    const auto& u = input.channel(input_channel);
    std::vector<double> dev(u.size());
    for (std::size_t k = 0; k < u.size(); ++k) dev[k] = u[k] - tf.input_mean;
    std::vector<double> y = simulate_lti(tf, dev, input.dt);
    for (double& v : y) v = tf.dc_gain_adjust * v + tf.output_mean;

    SampledSeries out;
    out.t0 = input.t0;
    out.dt = input.dt;
    if (input.has("time")) {
        out.add("time", "s") = input.channel("time");
    }
    out.add(output_channel, "A") = std::move(y);
    if (!tf.stable()) out.meta["unstable"] = 1.0;
    return out;
}

}  // namespace invsysid
