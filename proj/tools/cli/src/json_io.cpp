#include "json_io.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace ldb::cli {

namespace {

std::string join(const std::string& where, const char* key) {
    return where.empty() ? std::string(key) : where + "." + key;
}

std::string type_error(const std::string& field, const char* expected, const json& got) {
    return "field '" + field + "': expected " + expected + ", got " + got.type_name();
}

}  // namespace

json load_json_file(const std::filesystem::path& path, const std::string& what) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw InputError(what + " file '" + path.string() + "' cannot be opened");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    const std::string text = buf.str();
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        // Byte offset to line and column (1-based).
        std::size_t line = 1;
        std::size_t col = 1;
        const std::size_t stop = std::min<std::size_t>(e.byte == 0 ? 0 : e.byte - 1, text.size());
        for (std::size_t i = 0; i < stop; ++i) {
            if (text[i] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        std::string msg = e.what();
        const auto cut = msg.find(": ", msg.find("parse error"));
        if (cut != std::string::npos) {
            msg = msg.substr(cut + 2);
        }
        throw InputError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) +
                         ": malformed " + what + ": " + msg);
    }
}

bool Section::has(const char* key) const {
    return node_ != nullptr && node_->is_object() && node_->contains(key);
}

const json* Section::raw(const char* key) const {
    if (!has(key)) {
        return nullptr;
    }
    return &node_->at(key);
}

std::string Section::field(const char* key) const { return join(where_, key); }

Section Section::child(const char* key) const {
    const json* v = raw(key);
    if (v != nullptr && !v->is_object()) {
        throw InputError(type_error(field(key), "an object", *v));
    }
    return Section(v, field(key));
}

double to_number(const json& value, const std::string& field) {
    if (value.is_number()) {
        return value.get<double>();
    }
    if (value.is_string()) {
        const auto s = value.get<std::string>();
        if (s == "inf" || s == "infinity") {
            return std::numeric_limits<double>::infinity();
        }
        if (s == "-inf" || s == "-infinity") {
            return -std::numeric_limits<double>::infinity();
        }
    }
    throw InputError(type_error(field, "a number", value));
}

double Section::number(const char* key, std::optional<double> fallback) const {
    const json* v = raw(key);
    if (v == nullptr) {
        if (fallback) {
            return *fallback;
        }
        throw InputError("missing field '" + field(key) + "'");
    }
    return to_number(*v, field(key));
}

int Section::integer(const char* key, std::optional<int> fallback) const {
    const json* v = raw(key);
    if (v == nullptr) {
        if (fallback) {
            return *fallback;
        }
        throw InputError("missing field '" + field(key) + "'");
    }
    if (!v->is_number_integer()) {
        throw InputError(type_error(field(key), "an integer", *v));
    }
    return v->get<int>();
}

std::string Section::text(const char* key, std::optional<std::string> fallback) const {
    const json* v = raw(key);
    if (v == nullptr) {
        if (fallback) {
            return *fallback;
        }
        throw InputError("missing field '" + field(key) + "'");
    }
    if (!v->is_string()) {
        throw InputError(type_error(field(key), "a string", *v));
    }
    return v->get<std::string>();
}

std::vector<double> Section::numbers(const char* key) const {
    const json* v = raw(key);
    if (v == nullptr) {
        throw InputError("missing field '" + field(key) + "'");
    }
    if (!v->is_array()) {
        throw InputError(type_error(field(key), "an array of numbers", *v));
    }
    std::vector<double> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(to_number((*v)[i], field(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
}

Vector Section::vector(const char* key, std::optional<Vector> fallback) const {
    if (!has(key) && fallback) {
        return *fallback;
    }
    const auto xs = numbers(key);
    return Eigen::Map<const Vector>(xs.data(), static_cast<Eigen::Index>(xs.size()));
}

Matrix to_matrix(const json& value, const std::string& field) {
    if (value.is_number()) {
        return Matrix::Constant(1, 1, value.get<double>());
    }
    if (!value.is_array() || value.empty()) {
        throw InputError(type_error(field, "a non-empty array of rows", value));
    }
    const std::size_t rows = value.size();
    std::size_t cols = 0;
    for (std::size_t i = 0; i < rows; ++i) {
        if (!value[i].is_array() || value[i].empty()) {
            throw InputError(type_error(field + "[" + std::to_string(i) + "]", "a row array", value[i]));
        }
        if (i == 0) {
            cols = value[i].size();
        } else if (value[i].size() != cols) {
            throw InputError("field '" + field + "': rows have different lengths");
        }
    }
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (std::size_t i = 0; i < rows; ++i) {
        for (std::size_t j = 0; j < cols; ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = to_number(
                value[i][j], field + "[" + std::to_string(i) + "][" + std::to_string(j) + "]");
        }
    }
    return m;
}

Matrix Section::matrix(const char* key) const {
    const json* v = raw(key);
    if (v == nullptr) {
        throw InputError("missing field '" + field(key) + "'");
    }
    return to_matrix(*v, field(key));
}

void Section::allow_only(std::initializer_list<const char*> keys) const {
    if (node_ == nullptr) {
        return;
    }
    if (!node_->is_object()) {
        throw InputError(type_error(where_.empty() ? std::string("<root>") : where_, "an object", *node_));
    }
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& item : node_->items()) {
        if (allowed.count(item.key()) == 0) {
            std::string list;
            for (const char* k : keys) {
                list += list.empty() ? k : std::string(", ") + k;
            }
            throw InputError("unknown field '" + join(where_, item.key().c_str()) +
                             "' (allowed: " + list + ")");
        }
    }
}

json num(double v) {
    if (std::isnan(v)) {
        return "nan";
    }
    if (std::isinf(v)) {
        return v > 0 ? "inf" : "-inf";
    }
    return v;
}

json to_json(const Vector& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(num(v[i]));
    }
    return out;
}

json to_json(const Matrix& m) {
    json out = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out.push_back(to_json(Vector(m.row(i).transpose())));
    }
    return out;
}

json to_json(const std::vector<double>& v) {
    json out = json::array();
    for (double x : v) {
        out.push_back(num(x));
    }
    return out;
}

json to_json(const UniversalConstants& c) {
    return {{"q", c.q},
            {"p_star", num(c.p_star)},
            {"c_star", num(c.c_star)},
            {"mu_k", num(c.mu_k)},
            {"C_mp", num(c.c_mp)},
            {"K_q", num(c.k_q)},
            {"p_q", num(c.p_q)},
            {"log_C_q", num(c.log_c_q)},
            {"log_m_q", num(c.log_m_q)},
            {"m_q", num(c.m_q)}};
}

json to_json(const ThetaParams& t) {
    return {{"mu", num(t.mu)},         {"chi", num(t.chi)}, {"nu", num(t.nu_ctl)},
            {"eta", num(t.eta_ctl)},   {"h", num(t.h_ctl)}, {"T", num(t.T)}};
}

json to_json(const BoundReport& r) {
    json trace = json::object();
    for (const auto& [k, v] : r.trace) {
        trace[k] = num(v);
    }
    return {{"formula", r.formula_id},
            {"log_lower_bound", num(r.log_lower_bound)},
            {"prefactor_log", num(r.prefactor_log)},
            {"exponent_integral", num(r.exponent_integral)},
            {"exponent", num(r.exponent)},
            {"trace", trace},
            {"diagnostics", r.diagnostics}};
}

json to_json(const AdmissibilityReport& r) {
    return {{"feasible", r.feasible()},
            {"endpoint", {{"ok", r.endpoint_ok}, {"miss", num(r.endpoint_miss)}, {"tol", num(r.endpoint_tol)}}},
            {"rho", {{"ok", r.rho_ok}, {"margin", num(r.rho_margin)}}},
            {"lambda", {{"ok", r.lambda_ok}, {"margin", num(r.lambda_margin)}}},
            {"ratio", {{"ok", r.ratio_ok}, {"margin", num(r.ratio_margin)}}},
            {"sup", {{"ok", r.sup_ok}, {"margin", num(r.sup_margin)}}},
            {"eigen_ratio", {{"ok", r.eigen_ratio_ok}, {"margin", num(r.eigen_ratio_margin)}}},
            {"max_control_norm", num(r.max_control_norm)},
            {"observed_eta", num(r.observed_eta)}};
}

json to_json(const TimeGrid& g) {
    json reasons = json::array();
    for (StopReason s : g.stop_reasons) {
        reasons.push_back(to_string(s));
    }
    return {{"N", g.steps()},
            {"times", to_json(g.times)},
            {"stop_reasons", reasons},
            {"tau", to_json(g.tau_values)}};
}

json to_json(const KdeEstimate& k) {
    return {{"estimate", num(k.estimate)}, {"lo", num(k.lo)},          {"hi", num(k.hi)},
            {"bandwidth", to_json(k.bandwidth)}, {"batches", k.batches}, {"n", k.n}};
}

json to_json(const VerifyResult& v) {
    return {{"verdict", to_string(v.verdict)},
            {"log_bound", num(v.log_bound)},
            {"bound", num(v.bound)},
            {"kde", to_json(v.kde)},
            {"excluded_paths", v.excluded}};
}

json to_json(const RemainderScaling& r) {
    return {{"deltas", to_json(r.deltas)},
            {"norms", to_json(r.norms)},
            {"slope", num(r.slope)},
            {"intercept", num(r.intercept)},
            {"degenerate", r.degenerate},
            {"max_identity_residual", num(r.max_identity_residual)},
            {"excluded_paths", r.excluded}};
}

json to_json(const EvolutionStats& s) {
    json tube = json::array();
    for (const ProportionEstimate& e : s.tube) {
        tube.push_back({{"hits", e.hits}, {"p", num(e.p)}, {"se", num(e.se)}, {"lo", num(e.lo)}, {"hi", num(e.hi)}});
    }
    json steps = json::array();
    for (const StepCheck& c : s.steps) {
        steps.push_back({{"k", c.k},
                         {"log_factor", num(c.log_factor)},
                         {"lhs", num(c.lhs)},
                         {"rhs", num(c.rhs)},
                         {"tolerance", num(c.tolerance)},
                         {"pass", c.pass}});
    }
    json dens = json::array();
    for (const DensityCheck& d : s.densities) {
        dens.push_back({{"k", d.k},
                        {"z", to_json(d.z)},
                        {"log_bound", num(d.log_bound)},
                        {"min_value", num(d.min_value)},
                        {"mean_value", num(d.mean_value)},
                        {"paths_checked", d.paths_checked},
                        {"method", d.method},
                        {"pass", d.pass}});
    }
    json rem = json::array();
    for (const RemainderCheck& r : s.remainders) {
        rem.push_back({{"k", r.k},
                       {"log_norm_bound", num(r.log_norm_bound)},
                       {"log_threshold", num(r.log_threshold)},
                       {"relaxed", r.relaxed},
                       {"ok", r.ok}});
    }
    return {{"n_paths", s.n_paths},
            {"tube", tube},
            {"theta_rate", num(s.theta_rate)},
            {"log_tube_bound", num(s.log_tube_bound)},
            {"log_step_product", num(s.log_step_product)},
            {"tube_pass", s.tube_pass},
            {"steps", steps},
            {"densities", dens},
            {"remainders", rem}};
}

json to_json(const GrowthWindow& g) {
    return {{"found", g.found},
            {"h_G", num(g.h_g)},
            {"eta_M", num(g.eta_m)},
            {"h_M", num(g.h_m)},
            {"integral_M2", num(g.integral_m2)},
            {"max_growth_ratio", num(g.max_growth_ratio)},
            {"conclusion_ok", g.conclusion_ok},
            {"diagnostics", g.diagnostics}};
}

json to_json(const BoundInputs& in) {
    return {{"q", in.q},
            {"T", num(in.T)},
            {"pi_min", num(in.pi.min_value())},
            {"m_pi", num(in.m_pi)},
            {"h_pi", num(in.h_pi)},
            {"m_gamma", num(in.m_gamma)},
            {"observed_m_gamma", num(in.observed_m_gamma)},
            {"h_gamma", num(in.h_gamma)},
            {"m_Q", num(in.m_Q)},
            {"h_Q", num(in.h_Q)},
            {"h", num(in.h)},
            {"K_diff", num(in.k_diff)},
            {"alpha", num(in.alpha)},
            {"log_det_Q_T", num(in.log_det_q_t)}};
}

json to_json(const OptimizerConfig& c) {
    return {{"outer_iterations", c.outer_iterations},
            {"initial_penalty", num(c.initial_penalty)},
            {"penalty_growth", num(c.penalty_growth)},
            {"inner_iterations", c.inner_iterations},
            {"restarts", c.restarts},
            {"seed", c.seed},
            {"violation_tol", num(c.violation_tol)},
            {"perturbation", num(c.perturbation)},
            {"substeps", c.substeps},
            {"endpoint_tol", num(c.endpoint_tol)},
            {"method", c.method == InnerMethod::PatternSearch ? "pattern" : "gradient"}};
}

json to_json(const McConfig& c) {
    return {{"n_paths", c.n_paths},
            {"steps_per_unit", num(c.steps_per_unit)},
            {"seed", c.seed},
            {"bandwidth", to_json(c.bandwidth)},
            {"confidence", num(c.confidence)},
            {"batches", c.batches}};
}

}  // namespace ldb::cli
