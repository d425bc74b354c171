#include "psdmap/online.hpp"

#include <algorithm>
#include <cmath>

namespace psdmap {

double loss_value(OnlineLoss loss, double e, double eps) {
    if (loss == OnlineLoss::L1eps) return std::max(0.0, std::abs(e) - eps);
    return std::max(0.0, e * e - eps);
}

namespace {

double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double loss_subgradient(OnlineLoss loss, double e, double eps) {
    if (eps < 0.0) throw DimensionError("loss_subgradient: eps must be nonnegative");
    if (loss == OnlineLoss::L1eps) return 0.5 * (sgn(e - eps) + sgn(e + eps));
    return e * e > eps ? 2.0 * e : 0.0;
}

std::size_t default_truncation(double mu, double lambda, double tail) {
    const double r = std::abs(1.0 - 2.0 * mu * lambda);
    if (r == 0.0) return 1;
    if (r >= 1.0) return kNoTruncation;
    const double steps = std::ceil(std::log(tail) / std::log(r));
    if (steps >= 1e15) return kNoTruncation;
    return std::max<std::size_t>(1, static_cast<std::size_t>(steps));
}

OnlineState::OnlineState(OnlineMode mode, OnlineOptions opts) : mode_(mode), opts_(std::move(opts)) {
    if (!(opts_.lambda > 0.0)) throw ConfigError("lambda", "must be positive");
    if (!(opts_.mu > 0.0)) throw ConfigError("mu", "must be positive");
    if (!(opts_.mu * opts_.lambda < 1.0)) throw ConfigError("mu", "mu * lambda must be below 1");
    if (!opts_.kernel.positive_definite())
        throw ConfigError("kernel", "online estimation needs a positive definite kernel, got " + opts_.kernel.describe());
}

OnlineState OnlineState::distinct(OnlineOptions opts) {
    OnlineState s(OnlineMode::DistinctLocations, std::move(opts));
    s.truncation_ = s.opts_.truncation == 0 ? default_truncation(s.opts_.mu, s.opts_.lambda) : s.opts_.truncation;
    return s;
}

OnlineState OnlineState::shared(OnlineOptions opts, std::vector<Location> anchors) {
    OnlineState s(OnlineMode::SharedAnchors, std::move(opts));
    if (anchors.empty()) throw ConfigError("anchors", "shared-anchor mode needs at least one anchor");
    s.locations_ = std::move(anchors);
    s.coeffs_.assign(s.locations_.size(), PowerVector::Zero(s.channels()));
    return s;
}

std::size_t OnlineState::anchor_index(const Location& x) const {
    const auto it = std::find(locations_.begin(), locations_.end(), x);
    if (it == locations_.end()) throw Error("online step: record location is not one of the shared anchors");
    return static_cast<std::size_t>(it - locations_.begin());
}

void OnlineState::check_record(const MeasurementRecord& rec) const {
    if (rec.phi.size() != channels())
        throw DimensionError("online step: record has " + std::to_string(rec.phi.size()) + " channels, state has " +
                             std::to_string(channels()));
}

PowerVector OnlineState::predict(const Location& x) const {
    PowerVector out = PowerVector::Zero(channels());
    for (std::size_t i = 0; i < coeffs_.size(); ++i) {
        for (int m = 0; m < channels(); ++m) {
            if (coeffs_[i](m) != 0.0) out(m) += kernel_entry(opts_.kernel, m, x, locations_[i]) * coeffs_[i](m);
        }
    }
    return out;
}

double OnlineState::norm_sq_exact() const {
    double total = 0.0;
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
        for (std::size_t j = 0; j < coeffs_.size(); ++j)
            for (int m = 0; m < channels(); ++m)
                total += coeffs_[i](m) * kernel_entry(opts_.kernel, m, locations_[i], locations_[j]) * coeffs_[j](m);
    return std::max(0.0, total);
}

double OnlineState::instantaneous_cost(const MeasurementRecord& rec) const {
    check_record(rec);
    const double e = rec.y - rec.phi.dot(predict(rec.location));
    return loss_value(opts_.loss, e, rec.eps) + opts_.lambda * norm_sq_;
}

StepReport OnlineState::step(const MeasurementRecord& rec) {
    check_record(rec);
    std::size_t slot = 0;
    if (mode_ == OnlineMode::SharedAnchors) slot = anchor_index(rec.location);

    StepReport rep;
    rep.t = t_;
    rep.rate = opts_.mu / std::sqrt(static_cast<double>(t_));
    const PowerVector w_here = predict(rec.location);
    rep.residual = rec.y - rec.phi.dot(w_here);
    rep.subgradient = loss_subgradient(opts_.loss, rep.residual, rec.eps);
    rep.norm_sq_before = norm_sq_;
    rep.cost = loss_value(opts_.loss, rep.residual, rec.eps) + opts_.lambda * norm_sq_;

    const double shrink = 1.0 - 2.0 * rep.rate * opts_.lambda;
    for (auto& c : coeffs_) c *= shrink;
    const PowerVector delta = rep.rate * rep.subgradient * rec.phi;

    // |r w + K(., x) delta|^2 = r^2 |w|^2 + 2 r delta^T w(x) + delta^T K(x, x) delta
    double kxx = 0.0;
    for (int m = 0; m < channels(); ++m) kxx += delta(m) * delta(m) * kernel_entry(opts_.kernel, m, rec.location, rec.location);
    norm_sq_ = std::max(0.0, shrink * shrink * norm_sq_ + 2.0 * shrink * delta.dot(w_here) + kxx);

    if (mode_ == OnlineMode::SharedAnchors) {
        coeffs_[slot] += delta;
    } else {
        if (rep.subgradient != 0.0) {
            locations_.push_back(rec.location);
            coeffs_.push_back(delta);
            born_.push_back(t_);
        }
        // Keep coefficients born in the last I steps.
        std::size_t drop = 0;
        while (drop < born_.size() && static_cast<std::size_t>(t_ - born_[drop]) >= truncation_) ++drop;
        if (drop > 0) {
            const auto d = static_cast<std::ptrdiff_t>(drop);
            locations_.erase(locations_.begin(), locations_.begin() + d);
            coeffs_.erase(coeffs_.begin(), coeffs_.begin() + d);
            born_.erase(born_.begin(), born_.begin() + d);
            norm_sq_ = norm_sq_exact();
        }
    }
    ++t_;
    return rep;
}

MapEstimate OnlineState::snapshot() const {
    MapEstimate est;
    est.anchors = locations_;
    est.channels = channels();
    est.kernel = opts_.kernel;
    est.basis = BasisSpec::none();
    est.lambda = opts_.lambda;
    est.c = Vector::Zero(static_cast<Eigen::Index>(coeffs_.size()) * channels());
    for (std::size_t i = 0; i < coeffs_.size(); ++i)
        est.c.segment(static_cast<Eigen::Index>(i) * channels(), channels()) = coeffs_[i];
    return est;
}

OnlineState step(OnlineState state, const MeasurementRecord& rec) {
    state.step(rec);
    return state;
}

double instantaneous_cost(const OnlineState& state, const MeasurementRecord& rec) {
    return state.instantaneous_cost(rec);
}

RegretLedger::RegretLedger(double lambda_, double mu_, double lambda_bar_sq_, double phi_bar_)
    : lambda(lambda_), mu(mu_), lambda_bar_sq(lambda_bar_sq_), phi_bar(phi_bar_) {
    if (!(lambda > 0.0)) throw ConfigError("lambda", "must be positive");
    if (!(mu > 0.0)) throw ConfigError("mu", "must be positive");
}

double kernel_diagonal_bound(const KernelSpec& kernel, const Location& x) {
    double best = 0.0;
    for (int m = 0; m < kernel.channels(); ++m) best = std::max(best, kernel_entry(kernel, m, x, x));
    return best;
}

void RegretLedger::observe(const KernelSpec& kernel, const MeasurementRecord& rec) {
    lambda_bar_sq = std::max(lambda_bar_sq, kernel_diagonal_bound(kernel, rec.location));
    phi_bar = std::max(phi_bar, rec.phi.norm());
}

void RegretLedger::record(double online_cost, double comparator_cost) {
    online_cost_sum += online_cost;
    comparator_cost_sum += comparator_cost;
    ++steps;
}

double RegretLedger::a2() const { return lambda_bar_sq * phi_bar * phi_bar / (8.0 * lambda * lambda * mu); }

double RegretLedger::a1() const { return 4.0 * (lambda_bar_sq * phi_bar * phi_bar * mu + a2()); }

double RegretLedger::norm_bound() const { return std::sqrt(lambda_bar_sq) * phi_bar / (2.0 * lambda); }

double regret_envelope(const RegretLedger& ledger, int T) {
    if (T <= 0) throw DimensionError("regret_envelope: T must be positive");
    const double t = static_cast<double>(T);
    return ledger.a1() / std::sqrt(t) + ledger.a2() / t;
}

ComparatorValue batch_comparator(const std::vector<MeasurementRecord>& records, const KernelSpec& kernel,
                                 double lambda, const FitOptions& opts) {
    if (records.empty()) throw DimensionError("batch_comparator: no records");
    const auto fit = fit_svm_nonparametric(records, kernel, lambda, opts);
    const double t = static_cast<double>(records.size());
    return {fit.dual.primal_objective / t, fit.dual.dual_objective / t};
}

}  // namespace psdmap
