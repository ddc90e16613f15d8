#pragma once

#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "invsysid/metrics.hpp"
#include "invsysid/tf.hpp"

namespace invsysid {

/// One mean-removed input/output record. Estimation accepts several records
/// (e.g. all dwell segments whose levels fall in an interval) and treats them
/// as independent experiments at the same sample period.
struct IoView {
    std::span<const double> u;
    std::span<const double> y;
};

struct EstimateOptions {
    /// State-variable-filter bandwidth for the least-squares initializer.
    /// The filter pole sits at 2*pi*svf_bandwidth_hz; pick about twice the
    /// highest excited frequency. <= 0 selects an automatic bandwidth of
    /// fs/20 so the filter stays well resolved at the sample rate.
    double svf_bandwidth_hz = 0.0;
    int max_iterations = 100;
    double rel_tol = 1e-9;
    /// Estimate each record's initial state plus a constant output offset by
    /// least squares when simulating. The records start mid-oscillation and
    /// are only mean-removed, so a forced zero start would leave a spurious
    /// transient and a DC mismatch in the residual.
    bool estimate_initial_state = true;
    /// Extra starting models for the refinement (shape must match np/nz);
    /// used by the order sweep to warm-start higher orders from lower ones.
    std::vector<ContinuousTF> initial_models;
};

struct EstimateResult {
    ContinuousTF tf;
    FitReport report;  // metrics on the training records
    double loss = 0.0;  // mean squared simulation residual on train
    bool refined = true;  // false when Gauss-Newton could not improve Stage A
};

/// Two-stage continuous-time transfer-function estimation:
/// Stage A: state-variable-filter linear least squares for den/num;
/// Stage B: damped Gauss-Newton on the simulation (output-error) loss with
/// analytic Jacobians, ZOH-discretized at dt.
/// Throws domain_error("insufficient excitation") on degenerate data.
EstimateResult estimate_tf(std::span<const IoView> train, double dt, int np, int nz,
                           const EstimateOptions& options = {});

/// Simulated output (ZOH, zero initial state) plus the analytic Jacobian with
/// respect to the free coefficients, ordered [den[1..np], num[0..nz]]
/// (descending powers). Requires a strictly proper model.
void simulate_with_jacobian(const ContinuousTF& tf, std::span<const double> u,
                            double dt, std::vector<double>& y_hat,
                            Eigen::MatrixXd& jacobian);

/// Simulates the model over a record; optionally fits the initial state to the
/// measured output by least squares first. Returns the simulated output.
std::vector<double> simulate_record(const ContinuousTF& tf, const IoView& record,
                                    double dt, bool estimate_initial_state);

/// fitpercent of a model over a set of records (residuals stacked).
FitMetrics score_records(const ContinuousTF& tf, std::span<const IoView> records,
                         double dt, bool estimate_initial_state = true);

/// Least-squares output gain alpha = <y, yhat> / <yhat, yhat> over the
/// records, with each record's startup transient and DC offset projected out
/// of both signals first so the ratio reflects the forced response alone.
/// Throws domain_error when the model response carries no energy.
double fit_output_gain(const ContinuousTF& tf, std::span<const IoView> records,
                       double dt);

enum class Selector { afpe, aicc, bic, fitpercent };

Selector selector_from_string(const std::string& name);
std::string to_string(Selector s);

struct OrderFit {
    int np = 0;
    int nz = 0;
    bool ok = false;
    std::string error;  // failure cause when !ok
    ContinuousTF tf;
    FitReport report;  // criteria from train; fitpercent from test when given
    double loss = 0.0;  // mean squared simulation residual on train
    bool refined = true;
};

struct SweepResult {
    std::size_t best = 0;  // index into table
    std::vector<OrderFit> table;

    const OrderFit& best_fit() const { return table[best]; }
};

/// np in 2..5 with nz in 0..np-1 (the reported pole/zero sweep).
std::vector<std::pair<int, int>> default_orders();

/// Fits every order on the train records, scores information criteria on train
/// and fitpercent on the test records, and picks the winner per `selector`
/// with a deterministic tie-break (fewer parameters, then lower np). `jobs`
/// bounds the worker threads; the result does not depend on it.
SweepResult order_sweep(std::span<const IoView> train, std::span<const IoView> test,
                        double dt, std::span<const std::pair<int, int>> orders,
                        Selector selector, const EstimateOptions& options = {},
                        int jobs = 1);

}  // namespace invsysid
