#pragma once

// Histogram models for the fitters. Each model predicts the content of a bin
// as the model averaged over the bin, sampled at the bin centre, or (g2 only)
// as seen through integer-ns timestamps, and exposes weighted residuals with
// an analytic Jacobian.

#include <cmath>
#include <optional>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "fsps/histogram.hpp"

namespace fsps {

/// integer_ns: the histogram holds differences of floored ns timestamps, so
/// an integer delay d collects true delays in (d - 1, d + 1) with triangular
/// weight, and d = 0 (both stamps in one ns) holds no pair from the same
/// emitter. Only G2Model distinguishes it; LifetimeModel treats it as
/// average, the difference being below 1e-4 for microsecond bins.
enum class BinSampling { average, center, integer_ns };

inline const char* to_string(BinSampling s) {
    switch (s) {
        case BinSampling::average: return "average";
        case BinSampling::center: return "center";
        case BinSampling::integer_ns: return "integer_ns";
    }
    return "?";
}

/// Inverse of to_string; nullopt for an unknown name.
inline std::optional<BinSampling> bin_sampling_from(std::string_view name) {
    for (auto s : {BinSampling::average, BinSampling::center, BinSampling::integer_ns}) {
        if (name == to_string(s)) return s;
    }
    return std::nullopt;
}

namespace detail {

/// Integral of exp(-k t) over [a, b], 0 <= a <= b, and its k-derivative.
struct SegmentIntegral {
    double value;
    double d_dk;
};

inline SegmentIntegral decay_segment(double k, double a, double b) {
    const double ea = std::exp(-k * a);
    const double eb = std::exp(-k * b);
    const double value = -ea * std::expm1(-k * (b - a)) / k;
    return {value, (-a * ea + b * eb) / k - value / k};
}

}  // namespace detail

/// I0 * exp(-t / tau) + background, data = raw bin counts with Poisson
/// weights 1 / max(counts, 1). Parameter order: i0, tau_ns[, background].
class LifetimeModel {
  public:
    LifetimeModel(const CoincidenceHistogram& h, bool with_background, BinSampling sampling)
        : with_background_(with_background), sampling_(sampling) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            lo_.push_back(h.bin_edges[i]);
            hi_.push_back(h.bin_edges[i + 1]);
            y_.push_back(static_cast<double>(h.counts[i]));
            inv_sigma_.push_back(1.0 / std::sqrt(std::max(static_cast<double>(h.counts[i]), 1.0)));
        }
    }

    Eigen::Index residual_count() const { return static_cast<Eigen::Index>(y_.size()); }
    Eigen::Index parameter_count() const { return with_background_ ? 3 : 2; }

    /// Decay shape of bin i (multiplies i0) and its tau-derivative.
    std::pair<double, double> shape(std::size_t i, double tau) const {
        if (sampling_ == BinSampling::center) {
            const double c = 0.5 * (lo_[i] + hi_[i]);
            const double f = std::exp(-c / tau);
            return {f, f * c / (tau * tau)};
        }
        const double w = hi_[i] - lo_[i];
        const double ea = std::exp(-lo_[i] / tau);
        const double eb = std::exp(-hi_[i] / tau);
        const double f = -tau / w * ea * std::expm1(-w / tau);
        const double df = f / tau + (lo_[i] * ea - hi_[i] * eb) / (w * tau);
        return {f, df};
    }

    double predict(std::size_t i, const Eigen::VectorXd& x) const {
        return x[0] * shape(i, x[1]).first + (with_background_ ? x[2] : 0.0);
    }

    void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
        for (std::size_t i = 0; i < y_.size(); ++i) {
            const auto [f, df] = shape(i, x[1]);
            const auto row = static_cast<Eigen::Index>(i);
            r[row] = (x[0] * f + (with_background_ ? x[2] : 0.0) - y_[i]) * inv_sigma_[i];
            if (jac) {
                (*jac)(row, 0) = f * inv_sigma_[i];
                (*jac)(row, 1) = x[0] * df * inv_sigma_[i];
                if (with_background_) (*jac)(row, 2) = inv_sigma_[i];
            }
        }
    }

    double objective(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r(residual_count());
        evaluate(x, r, nullptr);
        return r.squaredNorm();
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r(residual_count());
        Eigen::MatrixXd j(residual_count(), parameter_count());
        evaluate(x, r, &j);
        return 2.0 * j.transpose() * r;
    }

  private:
    bool with_background_;
    BinSampling sampling_;
    std::vector<double> lo_, hi_, y_, inv_sigma_;
};

/// 1 - (1 - g0) exp(-(1/tau_abs + 1/tau_life)|tau|) against normalized bin
/// values, weights from sqrt(max(counts, 1)) / normalization. Parameter
/// order: g2_zero, tau_abs_ns. tau_life is held fixed (may be +inf).
class G2Model {
  public:
    G2Model(const CoincidenceHistogram& h, double tau_life_ns, BinSampling sampling)
        : inv_life_(1.0 / tau_life_ns), sampling_(sampling) {
        for (std::size_t i = 0; i < h.size(); ++i) {
            lo_.push_back(h.bin_edges[i]);
            hi_.push_back(h.bin_edges[i + 1]);
            y_.push_back(h.normalized[i]);
            inv_sigma_.push_back(h.normalization / std::sqrt(std::max(static_cast<double>(h.counts[i]), 1.0)));
            if (sampling == BinSampling::integer_ns) {
                detail::require(std::ceil(lo_.back()) < hi_.back(), "G2Model: integer_ns bins must hold an integer delay");
            }
        }
    }

    Eigen::Index residual_count() const { return static_cast<Eigen::Index>(y_.size()); }
    Eigen::Index parameter_count() const { return 2; }

    /// Mean of exp(-k|t|) over bin i and its k-derivative.
    std::pair<double, double> decay(std::size_t i, double k) const {
        const double lo = lo_[i], hi = hi_[i];
        if (sampling_ == BinSampling::integer_ns) return lattice_decay(lo, hi, k);
        if (sampling_ == BinSampling::center) {
            const double c = std::abs(0.5 * (lo + hi));
            const double e = std::exp(-k * c);
            return {e, -c * e};
        }
        detail::SegmentIntegral s{0.0, 0.0};
        if (lo >= 0) {
            s = detail::decay_segment(k, lo, hi);
        } else if (hi <= 0) {
            s = detail::decay_segment(k, -hi, -lo);
        } else {
            const auto left = detail::decay_segment(k, 0.0, -lo);
            const auto right = detail::decay_segment(k, 0.0, hi);
            s = {left.value + right.value, left.d_dk + right.d_dk};
        }
        const double w = hi - lo;
        return {s.value / w, s.d_dk / w};
    }

    double predict(std::size_t i, const Eigen::VectorXd& x) const {
        return 1.0 - (1.0 - x[0]) * decay(i, 1.0 / x[1] + inv_life_).first;
    }

    void evaluate(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
        const double k = 1.0 / x[1] + inv_life_;
        const double dk_dtau = -1.0 / (x[1] * x[1]);
        for (std::size_t i = 0; i < y_.size(); ++i) {
            const auto [e, de] = decay(i, k);
            const auto row = static_cast<Eigen::Index>(i);
            r[row] = (1.0 - (1.0 - x[0]) * e - y_[i]) * inv_sigma_[i];
            if (jac) {
                (*jac)(row, 0) = e * inv_sigma_[i];
                (*jac)(row, 1) = -(1.0 - x[0]) * de * dk_dtau * inv_sigma_[i];
            }
        }
    }

    double objective(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r(residual_count());
        evaluate(x, r, nullptr);
        return r.squaredNorm();
    }

    Eigen::VectorXd gradient(const Eigen::VectorXd& x) const {
        Eigen::VectorXd r(residual_count());
        Eigen::MatrixXd j(residual_count(), parameter_count());
        evaluate(x, r, &j);
        return 2.0 * j.transpose() * r;
    }

  private:
    // Integer delays d in [lo, hi): exp(-k|d|) s(k) with the triangle factor
    // s(k) = (2 sinh(k/2) / k)^2, and 1 at d = 0.
    static std::pair<double, double> lattice_decay(double lo, double hi, double k) {
        double s, ds;
        if (k < 1e-2) {
            s = 1.0 + k * k / 12.0 + k * k * k * k / 360.0;
            ds = k / 6.0 + k * k * k / 90.0;
        } else {
            const double q = 2.0 * std::sinh(0.5 * k) / k;
            s = q * q;
            ds = 2.0 * q * (std::cosh(0.5 * k) - q) / k;
        }
        double sum = 0.0, dsum = 0.0;
        int n = 0;
        for (double d = std::ceil(lo); d < hi; d += 1.0, ++n) {
            if (d == 0.0) {
                sum += 1.0;
                continue;
            }
            const double a = std::abs(d);
            const double e = std::exp(-k * a);
            sum += e * s;
            dsum += e * (ds - a * s);
        }
        return {sum / n, dsum / n};
    }

    double inv_life_;
    BinSampling sampling_;
    std::vector<double> lo_, hi_, y_, inv_sigma_;
};

}  // namespace fsps
