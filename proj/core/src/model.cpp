#include "ldb/model.hpp"

#include "ldb/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace ldb {

namespace {

constexpr double kRelSlack = 1e-12;

bool leq(double lhs, double rhs) {
    return lhs <= rhs + kRelSlack * std::max({1.0, std::abs(lhs), std::abs(rhs)});
}

double fd_step(const Vector& x) { return 1e-5 * (1.0 + x.norm()); }

// max_i (|row_i(sigma)| + |b_i|)
double row_growth(const Matrix& sigma, const Vector& b) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < sigma.rows(); ++i) {
        worst = std::max(worst, sigma.row(i).norm() + std::abs(b(i)));
    }
    return worst;
}

double factorial(int n) {
    double f = 1.0;
    for (int i = 2; i <= n; ++i) {
        f *= i;
    }
    return f;
}

}  // namespace

DiffusionModel::DiffusionModel(std::string name, int q, int d, SigmaFn sigma, DriftFn drift,
                               std::vector<int> eps, double c0)
    : name_(std::move(name)),
      q_(q),
      d_(d),
      sigma_(std::move(sigma)),
      drift_(std::move(drift)),
      eps_(std::move(eps)),
      c0_(c0) {
    if (q_ < 1 || d_ < 1) {
        throw PreconditionError("DiffusionModel: dimensions q and d must be positive");
    }
    if (!sigma_ || !drift_) {
        throw PreconditionError("DiffusionModel: sigma and drift evaluators are required");
    }
    if (static_cast<int>(eps_.size()) != q_ + 1) {
        throw DimensionError("DiffusionModel: eps must have q + 1 entries");
    }
    if (std::any_of(eps_.begin(), eps_.end(), [](int e) { return e != 0 && e != 1; })) {
        throw PreconditionError("DiffusionModel: eps entries must be 0 or 1");
    }
    if (std::none_of(eps_.begin(), eps_.end(), [](int e) { return e == 1; })) {
        throw PreconditionError("DiffusionModel: at least one eps entry must be 1");
    }
    if (!(c0_ > 0.0) || !std::isfinite(c0_)) {
        throw PreconditionError("DiffusionModel: C0 must be positive and finite");
    }
}

void DiffusionModel::check_point(const Vector& x, const char* where) const {
    if (x.size() != q_) {
        std::ostringstream os;
        os << where << ": point has dimension " << x.size() << ", model expects " << q_;
        throw DimensionError(os.str());
    }
}

Matrix DiffusionModel::sigma(const Vector& x) const {
    check_point(x, "sigma");
    Matrix s = sigma_(x);
    if (s.rows() != q_ || s.cols() != d_) {
        throw DimensionError("sigma: evaluator returned a matrix of the wrong shape");
    }
    return s;
}

Vector DiffusionModel::drift(const Vector& x) const {
    check_point(x, "drift");
    Vector b = drift_(x);
    if (b.size() != q_) {
        throw DimensionError("drift: evaluator returned a vector of the wrong size");
    }
    return b;
}

Matrix DiffusionModel::diffusion_matrix(const Vector& x) const {
    const Matrix s = sigma(x);
    return s * s.transpose();
}

std::vector<Matrix> DiffusionModel::sigma_partials(const Vector& x) const {
    check_point(x, "sigma_partials");
    if (sigma_partials_) {
        return sigma_partials_(x);
    }
    const double h = fd_step(x);
    std::vector<Matrix> out;
    out.reserve(static_cast<std::size_t>(q_));
    for (int k = 0; k < q_; ++k) {
        Vector xp = x;
        Vector xm = x;
        xp(k) += h;
        xm(k) -= h;
        out.push_back((sigma_(xp) - sigma_(xm)) / (2.0 * h));
    }
    return out;
}

Matrix DiffusionModel::drift_jacobian(const Vector& x) const {
    check_point(x, "drift_jacobian");
    if (drift_jacobian_) {
        return drift_jacobian_(x);
    }
    const double h = fd_step(x);
    Matrix jac(q_, q_);
    for (int k = 0; k < q_; ++k) {
        Vector xp = x;
        Vector xm = x;
        xp(k) += h;
        xm(k) -= h;
        jac.col(k) = (drift_(xp) - drift_(xm)) / (2.0 * h);
    }
    return jac;
}

DiffusionModel& DiffusionModel::set_sigma_partials(SigmaPartialsFn fn) {
    sigma_partials_ = std::move(fn);
    return *this;
}

DiffusionModel& DiffusionModel::set_drift_jacobian(DriftJacobianFn fn) {
    drift_jacobian_ = std::move(fn);
    return *this;
}

DiffusionModel DiffusionModel::with_c0(double c0) const {
    DiffusionModel copy = *this;
    if (!(c0 > 0.0) || !std::isfinite(c0)) {
        throw PreconditionError("with_c0: C0 must be positive and finite");
    }
    copy.c0_ = c0;
    return copy;
}

DiffusionModel DiffusionModel::with_eps(std::vector<int> eps) const {
    DiffusionModel copy(name_, q_, d_, sigma_, drift_, std::move(eps), c0_);
    copy.sigma_partials_ = sigma_partials_;
    copy.drift_jacobian_ = drift_jacobian_;
    return copy;
}

double growth_norm(const DiffusionModel& model, const Vector& x) {
    model.check_point(x, "growth_norm");
    const auto& eps = model.eps();
    double n2 = eps[0];
    for (int i = 0; i < model.q(); ++i) {
        n2 += eps[static_cast<std::size_t>(i) + 1] * x(i) * x(i);
    }
    return std::sqrt(n2);
}

SpectralData spectral(const DiffusionModel& model, const Vector& x) {
    const Matrix ss = model.diffusion_matrix(x);
    const Vector ev = symmetric_eigenvalues(ss);
    SpectralData out;
    out.lambda_min = std::max(ev(0), 0.0);
    out.lambda_max = std::max(ev(ev.size() - 1), 0.0);
    out.det = 1.0;
    for (Eigen::Index i = 0; i < ev.size(); ++i) {
        out.det *= std::max(ev(i), 0.0);
    }
    const double n = growth_norm(model, x);
    out.rho = n > 0.0 ? std::sqrt(out.lambda_min) / n : 0.0;
    return out;
}

bool HypothesisReport::growth_ok() const {
    return std::all_of(samples.begin(), samples.end(), [](const auto& s) { return s.growth_ok; });
}

bool HypothesisReport::lipschitz_ok() const {
    return std::all_of(samples.begin(), samples.end(),
                       [](const auto& s) { return s.lipschitz_ok; });
}

bool HypothesisReport::derivative_ok() const {
    return std::all_of(samples.begin(), samples.end(),
                       [](const auto& s) { return s.derivative_ok; });
}

bool HypothesisReport::consequences_ok() const {
    return std::all_of(samples.begin(), samples.end(),
                       [](const auto& s) { return s.consequences_ok(); });
}

bool HypothesisReport::all_ok() const {
    return growth_ok() && lipschitz_ok() && derivative_ok() && consequences_ok();
}

namespace {

// Largest value of |D^alpha sigma_j^i| + |D^alpha b^i| over |alpha| = 1.
double first_order_size(const DiffusionModel& model, const Vector& x) {
    const auto ds = model.sigma_partials(x);
    const Matrix db = model.drift_jacobian(x);
    double worst = 0.0;
    for (int k = 0; k < model.q(); ++k) {
        for (int i = 0; i < model.q(); ++i) {
            for (int j = 0; j < model.d(); ++j) {
                worst = std::max(worst, std::abs(ds[static_cast<std::size_t>(k)](i, j)) +
                                            std::abs(db(i, k)));
            }
        }
    }
    return worst;
}

// Same for |alpha| = 2, by central differences of the first partials.
double second_order_size(const DiffusionModel& model, const Vector& x) {
    const double h = 1e-4 * (1.0 + x.norm());
    double worst = 0.0;
    for (int l = 0; l < model.q(); ++l) {
        Vector xp = x;
        Vector xm = x;
        xp(l) += h;
        xm(l) -= h;
        const auto dsp = model.sigma_partials(xp);
        const auto dsm = model.sigma_partials(xm);
        const Matrix dbp = model.drift_jacobian(xp);
        const Matrix dbm = model.drift_jacobian(xm);
        for (int k = 0; k < model.q(); ++k) {
            const Matrix d2s = (dsp[static_cast<std::size_t>(k)] - dsm[static_cast<std::size_t>(k)]) / (2.0 * h);
            const Vector d2b = (dbp.col(k) - dbm.col(k)) / (2.0 * h);
            for (int i = 0; i < model.q(); ++i) {
                for (int j = 0; j < model.d(); ++j) {
                    worst = std::max(worst, std::abs(d2s(i, j)) + std::abs(d2b(i)));
                }
            }
        }
    }
    return worst;
}

}  // namespace

HypothesisReport check_hypothesis_A(const DiffusionModel& model,
                                    std::span<const std::pair<Vector, Vector>> samples,
                                    int max_order) {
    if (samples.empty()) {
        throw PreconditionError("check_hypothesis_A: empty sample set");
    }
    if (max_order < 0 || max_order > 2) {
        throw PreconditionError("check_hypothesis_A: max_order must be 0, 1 or 2");
    }
    const double c0 = model.c0();
    const int q = model.q();

    HypothesisReport report;
    report.max_order_checked = max_order;
    report.declared_order = q + 2;

    for (const auto& [x, y] : samples) {
        model.check_point(x, "check_hypothesis_A");
        model.check_point(y, "check_hypothesis_A");
        HypothesisSample s;
        s.x = x;
        s.y = y;

        const Matrix sx = model.sigma(x);
        const Matrix sy = model.sigma(y);
        const Vector bx = model.drift(x);
        const Vector by = model.drift(y);
        const double nx = growth_norm(model, x);
        const double ny = growth_norm(model, y);
        const double dist = (x - y).norm();

        // (A,i)
        const double gx = c0 * nx - row_growth(sx, bx);
        const double gy = c0 * ny - row_growth(sy, by);
        s.growth_margin = std::min(gx, gy);
        s.growth_ok = leq(row_growth(sx, bx), c0 * nx) && leq(row_growth(sy, by), c0 * ny);

        // (A,ii)
        const double lip = row_growth(sx - sy, bx - by);
        s.lipschitz_margin = c0 * dist - lip;
        s.lipschitz_ok = leq(lip, c0 * dist);

        // (A,iii), orders 1..max_order
        s.derivative_margin = std::numeric_limits<double>::infinity();
        for (const Vector* p : {&x, &y}) {
            if (max_order >= 1) {
                s.derivative_margin = std::min(s.derivative_margin, c0 - first_order_size(model, *p));
            }
            if (max_order >= 2) {
                s.derivative_margin = std::min(s.derivative_margin, c0 - second_order_size(model, *p));
            }
        }
        s.derivative_ok = max_order == 0 || s.derivative_margin >= -kRelSlack * std::max(1.0, c0);

        // (A,iv)
        const Matrix ssx = sx * sx.transpose();
        const Matrix ssy = sy * sy.transpose();
        const double lmax = symmetric_extremes(ssx).max;
        const double lmax_cap = q * c0 * c0 * nx * nx;
        s.lambda_max_margin = lmax_cap - lmax;
        s.lambda_max_ok = leq(lmax, lmax_cap);

        // (A,v): sup over unit xi of |<(S(x) - S(y)) xi, xi>|
        const EigenExtremes diff = symmetric_extremes(ssx - ssy);
        const double qf = std::max(std::abs(diff.min), std::abs(diff.max));
        const double qf_cap = q * c0 * c0 * (2.0 * nx + dist) * dist;
        s.quadratic_form_margin = qf_cap - qf;
        s.quadratic_form_ok = leq(qf, qf_cap);

        // (A,vi)
        const double ddet = std::abs(psd_determinant(ssx) - psd_determinant(ssy));
        const double det_cap = factorial(q) * std::pow(c0, 2 * q) *
                               std::pow(2.0 * nx + dist, 2 * q - 1) * dist;
        s.determinant_margin = det_cap - ddet;
        s.determinant_ok = leq(ddet, det_cap);

        report.samples.push_back(std::move(s));
    }
    return report;
}

}  // namespace ldb
