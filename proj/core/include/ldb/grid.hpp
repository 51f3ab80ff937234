#pragma once

#include "ldb/linalg.hpp"

#include <iosfwd>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace ldb {

inline constexpr double kInfiniteWindow = std::numeric_limits<double>::infinity();

enum class Interpolation {
    Linear,  // values at the times, linear in between
    Step,    // values[i] on [times[i], times[i+1]); one fewer value than times
};

// Non-negative function on [t_0, t_n] given by its samples, together with a
// class constant (m, h) such that f(s) <= m f(t) for all sampled
// |s - t| <= h. The pair is checked on construction.
class EnvelopeFn {
public:
    EnvelopeFn(std::vector<double> times, std::vector<double> values, double m, double h,
               Interpolation kind = Interpolation::Linear);

    // Smallest admissible m for the given window.
    [[nodiscard]] static EnvelopeFn fit(std::vector<double> times, std::vector<double> values,
                                        double h, Interpolation kind = Interpolation::Linear);
    [[nodiscard]] static EnvelopeFn constant(double value, double t_end);

    [[nodiscard]] double operator()(double t) const;
    [[nodiscard]] double m() const noexcept { return m_; }
    [[nodiscard]] double h() const noexcept { return h_; }
    [[nodiscard]] double t_begin() const noexcept { return times_.front(); }
    [[nodiscard]] double t_end() const noexcept { return times_.back(); }
    [[nodiscard]] const std::vector<double>& times() const noexcept { return times_; }
    [[nodiscard]] const std::vector<double>& values() const noexcept { return values_; }
    [[nodiscard]] Interpolation kind() const noexcept { return kind_; }
    [[nodiscard]] double min_value() const;

    // Exact integrals of the interpolant over [a, b] (clamped to the domain).
    [[nodiscard]] double integral_of_square(double a, double b) const;
    [[nodiscard]] double integral_of_reciprocal(double a, double b) const;

private:
    [[nodiscard]] std::size_t segment(double t) const;
    [[nodiscard]] double square_prefix(double t) const;

    std::vector<double> times_;
    std::vector<double> values_;
    std::vector<double> square_cumulative_;
    double m_;
    double h_;
    Interpolation kind_;
};

// Smallest m with f(s) <= m f(t) over sampled pairs |s - t| <= h. Zero samples
// are allowed: 0/0 counts as ratio 1, x/0 as infinity.
[[nodiscard]] double envelope_constant(std::span<const double> times,
                                       std::span<const double> values, double h);

// Matrix form: smallest m with Q_t <= m^2 Q_s for sampled |s - t| <= h, from
// the largest generalized eigenvalue of each pair. Samples must be SPD.
[[nodiscard]] double matrix_envelope_constant(std::span<const double> times,
                                              std::span<const Matrix> samples, double h);

// Same constant for a step function equal to values[i] on [times[i],
// times[i+1]): cells i < j interact when times[j] - times[i+1] < h.
// times has one more entry than values.
[[nodiscard]] double step_envelope_constant(std::span<const double> times,
                                            std::span<const double> values, double h);

enum class StopReason { Tau, Pi, H };

[[nodiscard]] std::string to_string(StopReason reason);

// Adaptive grid 0 = t_0 < ... < t_N = T built by
// t_{k+1} = t_k + min(h, pi(t_k), tau_k) with tau_k the first u at which the
// running integral of gamma^2 from t_k reaches 1 / (16 m_Q^2).
struct TimeGrid {
    std::vector<double> times;
    std::vector<StopReason> stop_reasons;  // one per step
    std::vector<double> tau_values;        // tau_k, infinity when never reached

    [[nodiscard]] std::size_t steps() const noexcept { return stop_reasons.size(); }
    [[nodiscard]] double delta(std::size_t k) const { return times[k] - times[k - 1]; }
};

[[nodiscard]] TimeGrid build_grid(const EnvelopeFn& pi, const EnvelopeFn& gamma, double h,
                                  double m_q, double t_end);

// integral_0^T (1/h + m_pi / pi(t) + 16 m_Q^2 gamma(t)^2) dt
[[nodiscard]] double grid_count_bound(const EnvelopeFn& pi, const EnvelopeFn& gamma, double h,
                                      double m_q, double m_pi, double t_end);

// For each step, the integral over the step of the term whose minimum fired:
// 16 m_Q^2 gamma^2 (tau), m_pi / pi (pi) or 1/h (h). Every full step yields
// at least 1; the clamped final step may fall short.
[[nodiscard]] std::vector<double> step_certificates(const TimeGrid& grid, const EnvelopeFn& pi,
                                                    const EnvelopeFn& gamma, double h,
                                                    double m_q, double m_pi);

// CSV with columns k, t, delta, stop_reason, tau.
void write_grid_csv(const TimeGrid& grid, std::ostream& out);

}  // namespace ldb
