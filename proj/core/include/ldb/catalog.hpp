#pragma once

#include "ldb/model.hpp"

#include <functional>
#include <string>
#include <vector>

namespace ldb {

// sigma = I_q, b = 0, eps = (1, 0, ..., 0).
[[nodiscard]] DiffusionModel identity_model(int q, double c0 = 1.0);

// sigma(x) = diag(offset_i + slope_i x^i), b(x) = drift_offset + drift_slope * x
// (componentwise), eps = (1, ..., 1).
[[nodiscard]] DiffusionModel diagonal_affine_model(Vector offset, Vector slope,
                                                   Vector drift_offset, Vector drift_slope,
                                                   double c0);

// q = d = 1, sigma(x) = 2 + sin x, b = 0, eps = (1, 1).
[[nodiscard]] DiffusionModel sine_model(double c0 = 2.3);

// q = d = 2, sigma(x) = R(kappa x^1) diag(1, minor), b = 0, eps = (1, 0, 0).
[[nodiscard]] DiffusionModel rotation_model(double kappa = 0.5, double minor = 0.5,
                                            double c0 = 1.2);

// Name-based registry used by the CLI. Built-in names:
// identity-1d, identity-2d, identity-3d, diagonal-affine-2d, sine-1d, rotation-2d.
// Applications add their own models with register_model before invoking the CLI.
using ModelFactory = std::function<DiffusionModel()>;

void register_model(const std::string& name, ModelFactory factory);
[[nodiscard]] DiffusionModel make_model(const std::string& name);
[[nodiscard]] bool has_model(const std::string& name);
[[nodiscard]] std::vector<std::string> model_names();

}  // namespace ldb
