#pragma once

#include "psdmap/batch.hpp"
#include "psdmap/kernels.hpp"
#include "psdmap/model.hpp"

#include <cstddef>
#include <limits>
#include <vector>

namespace psdmap {

enum class OnlineMode { DistinctLocations, SharedAnchors };

enum class OnlineLoss {
    L1eps,  // max(0, |e| - eps)
    L2eps,  // max(0, e^2 - eps)
};

double loss_value(OnlineLoss loss, double e, double eps);

/// Subgradient of the loss at residual e. sgn(0) is taken as 0.
double loss_subgradient(OnlineLoss loss, double e, double eps);

inline constexpr std::size_t kNoTruncation = std::numeric_limits<std::size_t>::max();

/// Smallest I with |1 - 2 mu lambda|^I <= tail: the weight a coefficient keeps after I
/// shrinkage steps at the base rate.
std::size_t default_truncation(double mu, double lambda, double tail = 1e-6);

struct OnlineOptions {
    KernelSpec kernel;
    double lambda = 1e-6;
    double mu = 1.0;  // base rate; mu_t = mu / sqrt(t)
    OnlineLoss loss = OnlineLoss::L1eps;
    /// DistinctLocations only. 0 selects default_truncation(mu, lambda).
    std::size_t truncation = 0;
};

struct StepReport {
    int t = 0;                    // index of the step just taken
    double rate = 0.0;            // mu_t
    double residual = 0.0;        // y - phi^T w(x) before the update
    double subgradient = 0.0;     // L'(residual)
    double cost = 0.0;            // instantaneous cost of w^(t) on the record
    double norm_sq_before = 0.0;  // |w^(t)|_H^2
};

/// w(x) = sum_i K(x, x_i) c_i. Steps are sequential; copies are independent snapshots.
class OnlineState {
public:
    /// One coefficient per processed measurement, oldest dropped beyond the truncation.
    static OnlineState distinct(OnlineOptions opts);
    /// One coefficient per anchor; every record must sit exactly at one of the anchors.
    static OnlineState shared(OnlineOptions opts, std::vector<Location> anchors);

    OnlineMode mode() const { return mode_; }
    /// Index of the next step (starts at 1).
    int t() const { return t_; }
    int channels() const { return opts_.kernel.channels(); }
    const OnlineOptions& options() const { return opts_; }
    std::size_t truncation() const { return truncation_; }

    const std::vector<Location>& locations() const { return locations_; }
    const std::vector<PowerVector>& coefficients() const { return coeffs_; }

    PowerVector predict(const Location& x) const;
    /// |w|_H^2 = sum_ij c_i^T K(x_i, x_j) c_j, tracked incrementally.
    double norm_sq() const { return norm_sq_; }
    /// Same quantity recomputed from scratch.
    double norm_sq_exact() const;

    /// L(y - phi^T w(x)) + lambda |w|_H^2.
    double instantaneous_cost(const MeasurementRecord& rec) const;

    StepReport step(const MeasurementRecord& rec);

    /// The current expansion as a batch-style estimate over its locations.
    MapEstimate snapshot() const;

private:
    OnlineState(OnlineMode mode, OnlineOptions opts);
    std::size_t anchor_index(const Location& x) const;
    void check_record(const MeasurementRecord& rec) const;

    OnlineMode mode_;
    OnlineOptions opts_;
    std::size_t truncation_ = kNoTruncation;
    int t_ = 1;
    std::vector<Location> locations_;
    std::vector<PowerVector> coeffs_;
    std::vector<int> born_;  // step that created each coefficient (DistinctLocations)
    double norm_sq_ = 0.0;
};

/// Functional form: returns the state after processing `rec`.
OnlineState step(OnlineState state, const MeasurementRecord& rec);

double instantaneous_cost(const OnlineState& state, const MeasurementRecord& rec);

/// Running sums for the averaged-cost guarantee, with constants
/// a2 = lb2 phib^2 / (8 lambda^2 mu) and a1 = 4 (lb2 phib^2 mu + a2).
struct RegretLedger {
    double lambda = 0.0;
    double mu = 0.0;
    double lambda_bar_sq = 0.0;  // bound on the largest eigenvalue of K(x, x)
    double phi_bar = 0.0;        // bound on |phi|_2
    double online_cost_sum = 0.0;
    double comparator_cost_sum = 0.0;
    int steps = 0;

    RegretLedger(double lambda, double mu, double lambda_bar_sq = 0.0, double phi_bar = 0.0);

    /// Widens the bounds to cover a new observation.
    void observe(const KernelSpec& kernel, const MeasurementRecord& rec);
    void record(double online_cost, double comparator_cost = 0.0);

    double a1() const;
    double a2() const;
    /// lambda_bar phi_bar / (2 lambda). Bounds every iterate when mu lambda <= 1/2; for larger
    /// base rates the first steps can overshoot it.
    double norm_bound() const;
};

/// a1 / sqrt(T) + a2 / T.
double regret_envelope(const RegretLedger& ledger, int T);

/// Largest eigenvalue of K(x, x).
double kernel_diagonal_bound(const KernelSpec& kernel, const Location& x);

/// Exact batch comparator for the averaged cost over a multiset of records:
/// min_w (1/T) sum_t L1eps(y_t - phi_t^T w(x_t)) + lambda |w|^2.
struct ComparatorValue {
    double upper = 0.0;  // primal objective / T at the batch solution
    double lower = 0.0;  // dual objective / T, a certified lower bound on the infimum
};

ComparatorValue batch_comparator(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel,
                                 double lambda, const FitOptions& opts = {});

}  // namespace psdmap
