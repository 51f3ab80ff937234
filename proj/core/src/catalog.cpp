#include "ldb/catalog.hpp"

#include "ldb/error.hpp"

#include <cmath>
#include <map>
#include <mutex>

namespace ldb {

DiffusionModel identity_model(int q, double c0) {
    std::vector<int> eps(static_cast<std::size_t>(q) + 1, 0);
    eps[0] = 1;
    DiffusionModel model(
        "identity-" + std::to_string(q) + "d", q, q,
        [q](const Vector&) { return Matrix::Identity(q, q); },
        [q](const Vector&) { return Vector::Zero(q); }, std::move(eps), c0);
    model.set_sigma_partials([q](const Vector&) {
        return std::vector<Matrix>(static_cast<std::size_t>(q), Matrix::Zero(q, q));
    });
    model.set_drift_jacobian([q](const Vector&) { return Matrix::Zero(q, q); });
    return model;
}

DiffusionModel diagonal_affine_model(Vector offset, Vector slope, Vector drift_offset,
                                     Vector drift_slope, double c0) {
    const auto q = static_cast<int>(offset.size());
    if (slope.size() != q || drift_offset.size() != q || drift_slope.size() != q) {
        throw DimensionError("diagonal_affine_model: coefficient vectors differ in size");
    }
    std::vector<int> eps(static_cast<std::size_t>(q) + 1, 1);
    DiffusionModel model(
        "diagonal-affine-" + std::to_string(q) + "d", q, q,
        [offset, slope](const Vector& x) {
            const Vector diag = offset.array() + slope.array() * x.array();
            return Matrix(diag.asDiagonal());
        },
        [drift_offset, drift_slope](const Vector& x) {
            return Vector(drift_offset.array() + drift_slope.array() * x.array());
        },
        std::move(eps), c0);
    model.set_sigma_partials([slope, q](const Vector&) {
        std::vector<Matrix> out(static_cast<std::size_t>(q), Matrix::Zero(q, q));
        for (int k = 0; k < q; ++k) {
            out[static_cast<std::size_t>(k)](k, k) = slope(k);
        }
        return out;
    });
    model.set_drift_jacobian(
        [drift_slope](const Vector&) { return Matrix(drift_slope.asDiagonal()); });
    return model;
}

DiffusionModel sine_model(double c0) {
    DiffusionModel model(
        "sine-1d", 1, 1,
        [](const Vector& x) { return Matrix::Constant(1, 1, 2.0 + std::sin(x(0))); },
        [](const Vector&) { return Vector::Zero(1); }, {1, 1}, c0);
    model.set_sigma_partials([](const Vector& x) {
        return std::vector<Matrix>{Matrix::Constant(1, 1, std::cos(x(0)))};
    });
    model.set_drift_jacobian([](const Vector&) { return Matrix::Zero(1, 1); });
    return model;
}

DiffusionModel rotation_model(double kappa, double minor, double c0) {
    auto sigma = [kappa, minor](const Vector& x) {
        const double a = kappa * x(0);
        Matrix s(2, 2);
        s << std::cos(a), -minor * std::sin(a),
             std::sin(a), minor * std::cos(a);
        return s;
    };
    DiffusionModel model("rotation-2d", 2, 2, sigma,
                         [](const Vector&) { return Vector::Zero(2); }, {1, 0, 0}, c0);
    model.set_sigma_partials([kappa, minor](const Vector& x) {
        const double a = kappa * x(0);
        Matrix d0(2, 2);
        d0 << -kappa * std::sin(a), -minor * kappa * std::cos(a),
               kappa * std::cos(a), -minor * kappa * std::sin(a);
        return std::vector<Matrix>{d0, Matrix::Zero(2, 2)};
    });
    model.set_drift_jacobian([](const Vector&) { return Matrix::Zero(2, 2); });
    return model;
}

namespace {

std::mutex& registry_mutex() {
    static std::mutex m;
    return m;
}

std::map<std::string, ModelFactory>& registry() {
    static std::map<std::string, ModelFactory> models = {
        {"identity-1d", [] { return identity_model(1); }},
        {"identity-2d", [] { return identity_model(2); }},
        {"identity-3d", [] { return identity_model(3); }},
        {"diagonal-affine-2d",
         [] {
             return diagonal_affine_model(Vector::Ones(2), Vector::Constant(2, 0.5),
                                          Vector::Zero(2), Vector::Constant(2, -0.5), 1.5);
         }},
        {"sine-1d", [] { return sine_model(); }},
        {"rotation-2d", [] { return rotation_model(); }},
    };
    return models;
}

}  // namespace

void register_model(const std::string& name, ModelFactory factory) {
    std::lock_guard lock(registry_mutex());
    registry()[name] = std::move(factory);
}

DiffusionModel make_model(const std::string& name) {
    ModelFactory factory;
    {
        std::lock_guard lock(registry_mutex());
        auto it = registry().find(name);
        if (it == registry().end()) {
            throw PreconditionError("unknown catalog model '" + name + "'");
        }
        factory = it->second;
    }
    return factory();
}

bool has_model(const std::string& name) {
    std::lock_guard lock(registry_mutex());
    return registry().count(name) > 0;
}

std::vector<std::string> model_names() {
    std::lock_guard lock(registry_mutex());
    std::vector<std::string> names;
    for (const auto& [name, factory] : registry()) {
        names.push_back(name);
    }
    return names;
}

}  // namespace ldb
