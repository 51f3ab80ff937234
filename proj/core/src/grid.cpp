#include "ldb/grid.hpp"

#include "ldb/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ldb {

namespace {

constexpr double kRatioSlack = 1e-12;

// Integral over [0, u] of (a + c s)^2.
double square_partial(double a, double c, double u) {
    return a * a * u + a * c * u * u + c * c * u * u * u / 3.0;
}

// Integral over [0, u] of 1 / (a + c s), a > 0 and a + c u > 0.
double reciprocal_partial(double a, double c, double u) {
    const double r = c * u / a;
    if (std::abs(r) < 1e-12) {
        return u / a;
    }
    return std::log1p(r) / c;
}

double pair_ratio(double num, double den) {
    if (num == 0.0) {
        return 1.0;
    }
    if (den == 0.0) {
        return std::numeric_limits<double>::infinity();
    }
    return num / den;
}

}  // namespace

EnvelopeFn::EnvelopeFn(std::vector<double> times, std::vector<double> values, double m, double h,
                       Interpolation kind)
    : times_(std::move(times)), values_(std::move(values)), m_(m), h_(h), kind_(kind) {
    const bool step = kind_ == Interpolation::Step;
    if (times_.empty() || values_.empty() ||
        times_.size() != values_.size() + (step ? 1 : 0)) {
        throw PreconditionError("EnvelopeFn: time and value sample counts do not match");
    }
    for (std::size_t i = 1; i < times_.size(); ++i) {
        if (!(times_[i] > times_[i - 1])) {
            throw PreconditionError("EnvelopeFn: sample times must be strictly increasing");
        }
    }
    for (double v : values_) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw PreconditionError("EnvelopeFn: values must be finite and non-negative");
        }
    }
    if (!(m_ >= 1.0) || !(h_ > 0.0)) {
        throw PreconditionError("EnvelopeFn: need m >= 1 and h > 0");
    }
    const double needed = step ? step_envelope_constant(times_, values_, h_)
                               : envelope_constant(times_, values_, h_);
    if (needed > m_ * (1.0 + kRatioSlack)) {
        throw PreconditionError("EnvelopeFn: samples violate f(s) <= m f(t) within the window");
    }

    square_cumulative_.assign(times_.size(), 0.0);
    for (std::size_t i = 1; i < times_.size(); ++i) {
        const double len = times_[i] - times_[i - 1];
        const double v0 = values_[i - 1];
        const double c = step ? 0.0 : (values_[i] - v0) / len;
        square_cumulative_[i] = square_cumulative_[i - 1] + square_partial(v0, c, len);
    }
}

EnvelopeFn EnvelopeFn::fit(std::vector<double> times, std::vector<double> values, double h,
                           Interpolation kind) {
    const double raw = kind == Interpolation::Step ? step_envelope_constant(times, values, h)
                                                   : envelope_constant(times, values, h);
    const double m = std::max(1.0, raw);
    if (!std::isfinite(m)) {
        throw PreconditionError("EnvelopeFn::fit: samples admit no finite envelope constant");
    }
    return EnvelopeFn(std::move(times), std::move(values), m, h, kind);
}

EnvelopeFn EnvelopeFn::constant(double value, double t_end) {
    if (!(t_end > 0.0)) {
        throw PreconditionError("EnvelopeFn::constant: need t_end > 0");
    }
    return EnvelopeFn({0.0, t_end}, {value, value}, 1.0, kInfiniteWindow);
}

std::size_t EnvelopeFn::segment(double t) const {
    // Index i with times_[i] <= t < times_[i+1], clamped to valid segments.
    if (times_.size() == 1) {
        return 0;
    }
    auto it = std::upper_bound(times_.begin(), times_.end(), t);
    std::size_t i = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
    return std::min(i, times_.size() - 2);
}

double EnvelopeFn::operator()(double t) const {
    if (kind_ == Interpolation::Step) {
        return values_[segment(t)];
    }
    if (times_.size() == 1 || t <= times_.front()) {
        return values_.front();
    }
    if (t >= times_.back()) {
        return values_.back();
    }
    const std::size_t i = segment(t);
    const double w = (t - times_[i]) / (times_[i + 1] - times_[i]);
    return (1.0 - w) * values_[i] + w * values_[i + 1];
}

double EnvelopeFn::min_value() const {
    return *std::min_element(values_.begin(), values_.end());
}

double EnvelopeFn::square_prefix(double t) const {
    if (times_.size() == 1) {
        return 0.0;
    }
    t = std::clamp(t, times_.front(), times_.back());
    const std::size_t i = segment(t);
    const double len = times_[i + 1] - times_[i];
    const double c = kind_ == Interpolation::Step ? 0.0 : (values_[i + 1] - values_[i]) / len;
    return square_cumulative_[i] + square_partial(values_[i], c, t - times_[i]);
}

double EnvelopeFn::integral_of_square(double a, double b) const {
    if (b <= a) {
        return 0.0;
    }
    return square_prefix(b) - square_prefix(a);
}

double EnvelopeFn::integral_of_reciprocal(double a, double b) const {
    if (b <= a) {
        return 0.0;
    }
    a = std::clamp(a, times_.front(), times_.back());
    b = std::clamp(b, times_.front(), times_.back());
    if (times_.size() == 1 || b <= a) {
        return 0.0;
    }
    if (min_value() <= 0.0) {
        throw PreconditionError("integral_of_reciprocal: envelope has non-positive values");
    }
    double total = 0.0;
    for (std::size_t i = segment(a); i + 1 < times_.size() && times_[i] < b; ++i) {
        const double lo = std::max(a, times_[i]);
        const double hi = std::min(b, times_[i + 1]);
        if (hi <= lo) {
            continue;
        }
        if (kind_ == Interpolation::Step) {
            total += (hi - lo) / values_[i];
        } else {
            const double c = (values_[i + 1] - values_[i]) / (times_[i + 1] - times_[i]);
            total += reciprocal_partial((*this)(lo), c, hi - lo);
        }
    }
    return total;
}

double envelope_constant(std::span<const double> times, std::span<const double> values,
                         double h) {
    if (times.size() != values.size() || times.empty()) {
        throw PreconditionError("envelope_constant: need matching, non-empty samples");
    }
    if (!(h > 0.0)) {
        throw PreconditionError("envelope_constant: window must be positive");
    }
    for (double v : values) {
        if (!(v >= 0.0)) {
            throw PreconditionError("envelope_constant: samples must be non-negative");
        }
    }
    const double span = times.back() - times.front();
    const double window = h + kRatioSlack * std::max(1.0, span);
    double m = 1.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t j = i + 1; j < times.size() && times[j] - times[i] <= window; ++j) {
            m = std::max({m, pair_ratio(values[i], values[j]), pair_ratio(values[j], values[i])});
        }
    }
    return m;
}

double step_envelope_constant(std::span<const double> times, std::span<const double> values,
                              double h) {
    if (values.empty() || times.size() != values.size() + 1) {
        throw PreconditionError("step_envelope_constant: need one more time than values");
    }
    if (!(h > 0.0)) {
        throw PreconditionError("step_envelope_constant: window must be positive");
    }
    double m = 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!(values[i] >= 0.0)) {
            throw PreconditionError("step_envelope_constant: values must be non-negative");
        }
        for (std::size_t j = i + 1; j < values.size() && times[j] - times[i + 1] < h; ++j) {
            m = std::max({m, pair_ratio(values[i], values[j]), pair_ratio(values[j], values[i])});
        }
    }
    return m;
}

double matrix_envelope_constant(std::span<const double> times, std::span<const Matrix> samples,
                                double h) {
    if (times.size() != samples.size() || times.empty()) {
        throw PreconditionError("matrix_envelope_constant: need matching, non-empty samples");
    }
    for (const Matrix& q : samples) {
        Eigen::LLT<Matrix> llt(q);
        if (!is_symmetric(q) || llt.info() != Eigen::Success || min_eigenvalue(q) <= 0.0) {
            throw PreconditionError("matrix_envelope_constant: sample is not symmetric positive definite");
        }
    }
    const double span = times.back() - times.front();
    const double window = h + kRatioSlack * std::max(1.0, span);
    double m2 = 1.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        for (std::size_t j = i + 1; j < times.size() && times[j] - times[i] <= window; ++j) {
            m2 = std::max({m2, max_generalized_eigenvalue(samples[i], samples[j]),
                           max_generalized_eigenvalue(samples[j], samples[i])});
        }
    }
    return std::sqrt(m2);
}

std::string to_string(StopReason reason) {
    switch (reason) {
        case StopReason::Tau: return "tau";
        case StopReason::Pi: return "pi";
        case StopReason::H: return "h";
    }
    return "unknown";
}

namespace {

void check_domain(const EnvelopeFn& f, double t_end, const char* name) {
    const double slack = 1e-12 * std::max(1.0, t_end);
    if (f.t_begin() > slack || f.t_end() < t_end - slack) {
        throw PreconditionError(std::string("build_grid: envelope ") + name +
                                " does not cover [0, T]");
    }
}

// First u > 0 with integral_{start}^{start+u} gamma^2 >= target; infinity if
// the integral up to t_end stays below target.
double stopping_time(const EnvelopeFn& gamma, double start, double t_end, double target) {
    const double total = gamma.integral_of_square(start, t_end);
    if (total < target) {
        return std::numeric_limits<double>::infinity();
    }
    double lo = 0.0;
    double hi = t_end - start;
    for (int iter = 0; iter < 200 && hi - lo > 1e-12 * hi; ++iter) {
        const double mid = 0.5 * (lo + hi);
        if (gamma.integral_of_square(start, start + mid) >= target) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

}  // namespace

TimeGrid build_grid(const EnvelopeFn& pi, const EnvelopeFn& gamma, double h, double m_q,
                    double t_end) {
    if (!(h > 0.0) || !(m_q >= 1.0) || !(t_end > 0.0)) {
        throw PreconditionError("build_grid: need h > 0, m_Q >= 1 and T > 0");
    }
    if (pi.min_value() <= 0.0) {
        throw PreconditionError("build_grid: pi envelope must be strictly positive");
    }
    check_domain(pi, t_end, "pi");
    check_domain(gamma, t_end, "gamma");

    const double target = 1.0 / (16.0 * m_q * m_q);
    const double snap = 1e-12 * t_end;

    TimeGrid grid;
    grid.times.push_back(0.0);
    double t = 0.0;
    while (t < t_end) {
        const double tau = stopping_time(gamma, t, t_end, target);
        const double pi_t = pi(t);
        double step = std::min({h, pi_t, tau});
        StopReason reason = StopReason::H;
        if (tau <= h && tau <= pi_t) {
            reason = StopReason::Tau;
        } else if (pi_t <= h) {
            reason = StopReason::Pi;
        }
        if (!(step > 0.0)) {
            throw Error("build_grid: recursion stalled (zero step)");
        }
        double next = t + step;
        if (next >= t_end - snap) {
            next = t_end;
        }
        grid.times.push_back(next);
        grid.stop_reasons.push_back(reason);
        grid.tau_values.push_back(tau);
        t = next;
    }
    return grid;
}

double grid_count_bound(const EnvelopeFn& pi, const EnvelopeFn& gamma, double h, double m_q,
                        double m_pi, double t_end) {
    if (!(h > 0.0) || !(m_q >= 1.0) || !(m_pi >= 1.0) || !(t_end > 0.0)) {
        throw PreconditionError("grid_count_bound: need h > 0, m_Q, m_pi >= 1 and T > 0");
    }
    if (pi.min_value() <= 0.0) {
        throw PreconditionError("grid_count_bound: pi envelope must be strictly positive");
    }
    check_domain(pi, t_end, "pi");
    check_domain(gamma, t_end, "gamma");
    const double h_term = std::isinf(h) ? 0.0 : t_end / h;
    return h_term + m_pi * pi.integral_of_reciprocal(0.0, t_end) +
           16.0 * m_q * m_q * gamma.integral_of_square(0.0, t_end);
}

std::vector<double> step_certificates(const TimeGrid& grid, const EnvelopeFn& pi,
                                      const EnvelopeFn& gamma, double h, double m_q,
                                      double m_pi) {
    std::vector<double> out;
    out.reserve(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const double a = grid.times[k];
        const double b = grid.times[k + 1];
        switch (grid.stop_reasons[k]) {
            case StopReason::Tau:
                out.push_back(16.0 * m_q * m_q * gamma.integral_of_square(a, b));
                break;
            case StopReason::Pi:
                out.push_back(m_pi * pi.integral_of_reciprocal(a, b));
                break;
            case StopReason::H:
                out.push_back((b - a) / h);
                break;
        }
    }
    return out;
}

void write_grid_csv(const TimeGrid& grid, std::ostream& out) {
    out << "k,t,delta,stop_reason,tau\n";
    out << std::setprecision(17);
    out << 0 << ',' << grid.times[0] << ",0,start,\n";
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        out << k + 1 << ',' << grid.times[k + 1] << ',' << grid.delta(k + 1) << ','
            << to_string(grid.stop_reasons[k]) << ',';
        if (std::isfinite(grid.tau_values[k])) {
            out << grid.tau_values[k];
        } else {
            out << "inf";
        }
        out << '\n';
    }
}

}  // namespace ldb
