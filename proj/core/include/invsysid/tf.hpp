#pragma once

#include <complex>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "invsysid/series.hpp"

namespace invsysid {

/// Continuous-time rational transfer function plus operating-point offsets.
/// Coefficients are stored in descending powers of s; den is monic.
struct ContinuousTF {
    std::vector<double> num;  // b_nz ... b_0
    std::vector<double> den;  // 1, a_{np-1} ... a_0
    double input_mean = 0.0;      // p.u.
    double output_mean = 0.0;     // A
    double dc_gain_adjust = 1.0;  // dimensionless

    int np() const { return static_cast<int>(den.size()) - 1; }
    int nz() const { return static_cast<int>(num.size()) - 1; }

    /// b0/a0 (infinite when a0 == 0).
    double dc_gain() const;

    /// All denominator roots strictly in the left half plane.
    bool stable() const;

    /// Checks shape: non-empty, proper (deg num <= deg den), monic den.
    void validate() const;
};

/// Roots of a monic polynomial given in descending powers (leading 1 included),
/// via companion-matrix eigenvalues.
std::vector<std::complex<double>> poly_roots(std::span<const double> monic_desc);

/// Characteristic frequency max_i |a_i|^(1/i) of a monic polynomial
/// (descending coefficients); used to frequency-scale realizations so the
/// matrix exponential stays well conditioned.
double characteristic_frequency(std::span<const double> monic_desc);

/// Controllable (phase-variable) canonical realization of num/den.
struct StateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
};
StateSpace to_state_space(const ContinuousTF& tf);

/// Exact zero-order-hold discretization via the augmented matrix exponential.
void zoh_discretize(const Eigen::MatrixXd& A, const Eigen::MatrixXd& B, double dt,
                    Eigen::MatrixXd& Ad, Eigen::MatrixXd& Bd);

/// Simulates y = G(s) u under ZOH at dt from zero initial state (raw
/// deviation-domain response; no operating-point handling).
std::vector<double> simulate_lti(const ContinuousTF& tf, std::span<const double> u,
                                 double dt);

/// Operating-point simulation used throughout the pipeline:
///   yhat = dc_gain_adjust * LTI(tf, u - input_mean) + output_mean.
/// The input series must provide `input_channel` (p.u.). Output channel is
/// named `output_channel`. Unstable models are simulated anyway and flagged
/// via meta["unstable"] = 1.
SampledSeries simulate_tf(const ContinuousTF& tf, const SampledSeries& input,
                          const std::string& input_channel = "excitation",
                          const std::string& output_channel = "output");

}  // namespace invsysid
