#include "ldb/skeleton.hpp"

#include "ldb/error.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

namespace ldb {

Control::Control(std::vector<double> grid, std::vector<Vector> values)
    : grid_(std::move(grid)), values_(std::move(values)) {
    if (values_.empty() || grid_.size() != values_.size() + 1) {
        throw PreconditionError("Control: need M >= 1 values and M + 1 grid times");
    }
    if (grid_.front() != 0.0) {
        throw PreconditionError("Control: grid must start at 0");
    }
    for (std::size_t i = 1; i < grid_.size(); ++i) {
        if (!std::isfinite(grid_[i]) || !(grid_[i] > grid_[i - 1])) {
            throw PreconditionError("Control: grid must be finite and strictly increasing");
        }
    }
    const auto d = values_.front().size();
    for (const Vector& v : values_) {
        if (v.size() != d || d == 0) {
            throw DimensionError("Control: all values must share a positive dimension");
        }
        if (!v.allFinite()) {
            throw PreconditionError("Control: values must be finite");
        }
    }
}

Control Control::constant(const Vector& v, double t_end, int pieces) {
    if (pieces < 1) {
        throw PreconditionError("Control::constant: pieces must be >= 1");
    }
    return uniform(std::vector<Vector>(static_cast<std::size_t>(pieces), v), t_end);
}

Control Control::uniform(std::vector<Vector> values, double t_end) {
    if (!(t_end > 0.0) || !std::isfinite(t_end)) {
        throw PreconditionError("Control::uniform: horizon must be positive and finite");
    }
    const std::size_t m = values.size();
    std::vector<double> grid(m + 1);
    for (std::size_t k = 0; k <= m; ++k) {
        grid[k] = t_end * static_cast<double>(k) / static_cast<double>(m);
    }
    grid[m] = t_end;
    return Control(std::move(grid), std::move(values));
}

std::size_t Control::piece_index(double t) const {
    auto it = std::upper_bound(grid_.begin(), grid_.end(), t);
    if (it == grid_.begin()) {
        return 0;
    }
    return std::min(static_cast<std::size_t>(it - grid_.begin()) - 1, values_.size() - 1);
}

const Vector& Control::at(double t) const { return values_[piece_index(t)]; }

double control_norm(const Control& control) {
    double sum = 0.0;
    for (std::size_t k = 0; k < control.pieces(); ++k) {
        sum += control.values()[k].squaredNorm() * (control.grid()[k + 1] - control.grid()[k]);
    }
    return std::sqrt(sum);
}

SkeletonPath integrate_skeleton(const DiffusionModel& model, const Control& control,
                                const Vector& x0, double step) {
    if (!(step > 0.0)) {
        throw PreconditionError("integrate_skeleton: step must be positive");
    }
    if (control.dim() != model.d()) {
        throw DimensionError("integrate_skeleton: control dimension differs from d");
    }
    model.check_point(x0, "integrate_skeleton");

    SkeletonPath path;
    Vector x = x0;
    for (std::size_t k = 0; k < control.pieces(); ++k) {
        const Vector& phi = control.values()[k];
        const double a = control.grid()[k];
        const double b = control.grid()[k + 1];
        const auto n = static_cast<std::size_t>(std::max(1.0, std::ceil((b - a) / step - 1e-9)));
        const double dt = (b - a) / static_cast<double>(n);
        auto f = [&](const Vector& z) -> Vector { return model.sigma(z) * phi; };
        for (std::size_t i = 0; i < n; ++i) {
            const double t = a + dt * static_cast<double>(i);
            const Vector k1 = f(x);
            path.times.push_back(t);
            path.states.push_back(x);
            path.derivs.push_back(k1);
            const Vector k2 = f(x + 0.5 * dt * k1);
            const Vector k3 = f(x + 0.5 * dt * k2);
            const Vector k4 = f(x + dt * k3);
            x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            if (!x.allFinite()) {
                throw NonFiniteError("integrate_skeleton: state became non-finite", t + dt);
            }
        }
    }
    path.times.push_back(control.horizon());
    path.states.push_back(x);
    path.derivs.push_back(model.sigma(x) * control.values().back());
    return path;
}

Vector least_norm_control(const DiffusionModel& model, const Vector& x, const Vector& v,
                          double time) {
    const Matrix s = model.sigma(x);
    const SpectralData sp = spectral(model, x);
    if (!(sp.lambda_min > 1e-12 * std::max(1.0, sp.lambda_max))) {
        throw DegenerateError("sigma sigma^* is singular along the path", time);
    }
    return least_norm_solution(s, v);
}

Control recover_control(const DiffusionModel& model, const SkeletonPath& path) {
    if (path.size() < 2) {
        throw PreconditionError("recover_control: path needs at least two samples");
    }
    std::vector<Vector> values;
    values.reserve(path.size() - 1);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        values.push_back(least_norm_control(model, path.states[i], path.derivs[i], path.times[i]));
    }
    // The terminal sample is checked too, so a singularity at T is reported.
    (void)least_norm_control(model, path.states.back(), path.derivs.back(), path.times.back());
    return Control(path.times, std::move(values));
}

void ThetaParams::validate() const {
    if (!(mu >= 1.0) || !(eta_ctl >= 1.0) || !(nu_ctl >= 1.0) || !(chi > 0.0) ||
        !(h_ctl > 0.0) || !(T > 0.0)) {
        throw PreconditionError(
            "theta: need mu, eta, nu >= 1 and chi, h, T > 0");
    }
}

AdmissibilityReport check_admissible(const DiffusionModel& model, const Control& control,
                                     const SkeletonPath& path, const ThetaParams& theta,
                                     const Vector& y, double endpoint_tol) {
    theta.validate();
    if (std::abs(control.horizon() - theta.T) > 1e-12 * theta.T ||
        std::abs(path.horizon() - theta.T) > 1e-12 * theta.T) {
        throw PreconditionError("check_admissible: control, path and theta horizons differ");
    }
    AdmissibilityReport r;
    constexpr double slack = 1e-12;

    r.endpoint_tol = endpoint_tol >= 0.0 ? endpoint_tol : 1e-6 * (1.0 + y.norm());
    r.endpoint_miss = (path.terminal() - y).norm();
    r.endpoint_ok = r.endpoint_miss <= r.endpoint_tol;

    r.rho_margin = std::numeric_limits<double>::infinity();
    r.lambda_margin = std::numeric_limits<double>::infinity();
    r.eigen_ratio_margin = std::numeric_limits<double>::infinity();
    for (const Vector& x : path.states) {
        const SpectralData sp = spectral(model, x);
        r.rho_margin = std::min(r.rho_margin, sp.rho - 1.0 / theta.mu);
        r.lambda_margin =
            std::min(r.lambda_margin, std::sqrt(std::max(sp.lambda_min, 0.0)) - 1.0 / theta.chi);
        const double ratio = sp.lambda_max > 0.0 ? sp.lambda_min / sp.lambda_max : 0.0;
        r.eigen_ratio_margin = std::min(r.eigen_ratio_margin, ratio - 1.0 / theta.mu);
    }
    r.rho_ok = r.rho_margin >= -slack;
    r.lambda_ok = r.lambda_margin >= -slack;
    r.eigen_ratio_ok = r.eigen_ratio_margin >= -slack;

    std::vector<double> norms(control.pieces());
    for (std::size_t k = 0; k < control.pieces(); ++k) {
        norms[k] = control.values()[k].norm();
        r.max_control_norm = std::max(r.max_control_norm, norms[k]);
    }
    r.sup_margin = theta.nu_ctl - r.max_control_norm;
    r.sup_ok = r.sup_margin >= -slack * std::max(1.0, theta.nu_ctl);

    r.ratio_margin = std::numeric_limits<double>::infinity();
    const auto& g = control.grid();
    for (std::size_t i = 0; i < norms.size(); ++i) {
        for (std::size_t j = i; j < norms.size() && (j == i || g[j] - g[i + 1] < theta.h_ctl);
             ++j) {
            r.ratio_margin = std::min({r.ratio_margin, theta.eta_ctl * norms[i] - norms[j],
                                       theta.eta_ctl * norms[j] - norms[i]});
        }
    }
    r.ratio_ok = r.ratio_margin >= -slack * std::max(1.0, r.max_control_norm);
    r.observed_eta = step_envelope_constant(g, norms, theta.h_ctl);
    return r;
}

std::vector<double> path_growth_rates(const DiffusionModel& model, const SkeletonPath& path) {
    std::vector<double> m(path.size() - 1);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        m[i] = path.derivs[i].norm() / growth_norm(model, path.states[i]);
    }
    return m;
}

std::vector<double> control_growth_rates(const DiffusionModel& model, const Control& control,
                                         const SkeletonPath& path) {
    std::vector<double> m(path.size() - 1);
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
        m[i] = model.c0() * control.at(path.times[i]).norm();
    }
    return m;
}

namespace {

// Running integral of a squared step function.
class StepSquarePrefix {
public:
    StepSquarePrefix(const std::vector<double>& times, const std::vector<double>& cells)
        : times_(times), cells_(cells), cumulative_(times.size(), 0.0) {
        for (std::size_t i = 0; i < cells.size(); ++i) {
            cumulative_[i + 1] = cumulative_[i] + cells[i] * cells[i] * (times[i + 1] - times[i]);
        }
    }

    [[nodiscard]] double operator()(double t) const {
        t = std::clamp(t, times_.front(), times_.back());
        auto it = std::upper_bound(times_.begin(), times_.end(), t);
        std::size_t i = it == times_.begin() ? 0 : static_cast<std::size_t>(it - times_.begin()) - 1;
        if (i >= cells_.size()) {
            return cumulative_.back();
        }
        return cumulative_[i] + cells_[i] * cells_[i] * (t - times_[i]);
    }

    [[nodiscard]] double total() const { return cumulative_.back(); }

private:
    const std::vector<double>& times_;
    const std::vector<double>& cells_;
    std::vector<double> cumulative_;
};

}  // namespace

GrowthWindow growth_window(const DiffusionModel& model, const SkeletonPath& path, int q,
                           std::span<const double> probe_h,
                           std::optional<std::vector<double>> cell_values) {
    if (q < 1) {
        throw PreconditionError("growth_window: q must be >= 1");
    }
    if (path.size() < 2) {
        throw PreconditionError("growth_window: path needs at least two samples");
    }
    GrowthWindow out;
    out.times = path.times;
    out.cell_values = cell_values ? std::move(*cell_values) : path_growth_rates(model, path);
    if (out.cell_values.size() + 1 != out.times.size()) {
        throw DimensionError("growth_window: need one M value per path cell");
    }
    for (double v : out.cell_values) {
        if (!(v >= 0.0) || !std::isfinite(v)) {
            throw PreconditionError("growth_window: M values must be finite and non-negative");
        }
    }
    out.probe_values.assign(probe_h.begin(), probe_h.end());
    std::sort(out.probe_values.begin(), out.probe_values.end());
    for (double h : out.probe_values) {
        if (!(h > 0.0) || !(h < 1.0)) {
            throw PreconditionError("growth_window: probe windows must lie in (0, 1)");
        }
    }

    const StepSquarePrefix prefix(out.times, out.cell_values);
    out.integral_m2 = prefix.total();
    const double t_end = out.times.back();
    const double limit = 1.0 / (4.0 * q);

    for (double h : out.probe_values) {
        double worst = 0.0;
        for (double edge : out.times) {
            for (double t : {edge, edge - h}) {
                if (t < 0.0 || t > t_end) {
                    continue;
                }
                worst = std::max(worst, h * (prefix(std::min(t + h, t_end)) - prefix(t)));
            }
        }
        out.probe_worst.push_back(worst);
        if (worst <= limit * (1.0 + 1e-12)) {
            out.found = true;
            out.h_g = h;
        }
    }
    if (!out.found) {
        out.diagnostics = "no probe window satisfies h * int M^2 <= 1/(4q)";
        return out;
    }

    out.h_m = out.h_g;
    out.eta_m = step_envelope_constant(out.times, out.cell_values, out.h_m);

    std::vector<double> growth(path.size());
    for (std::size_t i = 0; i < path.size(); ++i) {
        growth[i] = growth_norm(model, path.states[i]);
    }
    double ratio = 1.0;
    for (std::size_t i = 0; i < path.size(); ++i) {
        for (std::size_t j = i + 1;
             j < path.size() && path.times[j] - path.times[i] <= out.h_g * (1.0 + 1e-12); ++j) {
            ratio = std::max({ratio, growth[i] / growth[j], growth[j] / growth[i]});
        }
    }
    out.max_growth_ratio = ratio;
    out.conclusion_ok = ratio <= 4.0;
    if (!out.conclusion_ok) {
        out.diagnostics = "growth conclusion N(x_s) <= 4 N(x_t) fails on the sampled path";
    }
    return out;
}

void write_control_csv(const Control& control, std::ostream& out) {
    out << 't';
    for (int j = 0; j < control.dim(); ++j) {
        out << ",phi_" << j + 1;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t k = 0; k < control.pieces(); ++k) {
        out << control.grid()[k];
        for (int j = 0; j < control.dim(); ++j) {
            out << ',' << control.values()[k][j];
        }
        out << '\n';
    }
}

void write_path_csv(const SkeletonPath& path, std::ostream& out) {
    const auto q = path.states.front().size();
    out << 't';
    for (Eigen::Index j = 0; j < q; ++j) {
        out << ",x_" << j + 1;
    }
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < path.size(); ++i) {
        out << path.times[i];
        for (Eigen::Index j = 0; j < q; ++j) {
            out << ',' << path.states[i][j];
        }
        out << '\n';
    }
}

}  // namespace ldb
