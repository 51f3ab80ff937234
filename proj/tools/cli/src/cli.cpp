#include "ldb/cli.hpp"

#include "json_io.hpp"

#include <ldb/catalog.hpp>
#include <ldb/error.hpp>
#include <ldb/skeleton.hpp>

#include <CLI11.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>
#include <thread>

namespace ldb::cli {

namespace fs = std::filesystem;

namespace {

constexpr int kSchemaVersion = 1;

struct LoadedModel {
    DiffusionModel model;
    json description;
};

Vector as_point(const json& v, const std::string& field) {
    if (v.is_number()) {
        return Vector::Constant(1, v.get<double>());
    }
    if (!v.is_array()) {
        throw InputError("field '" + field + "': expected a number or an array of numbers");
    }
    Vector out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[static_cast<Eigen::Index>(i)] = to_number(v[i], field + "[" + std::to_string(i) + "]");
    }
    return out;
}

std::vector<int> as_flags(const Section& s, const char* key) {
    const json* v = s.raw(key);
    if (!v->is_array()) {
        throw InputError("field '" + s.field(key) + "': expected an array of 0/1 flags");
    }
    std::vector<int> out;
    for (const json& f : *v) {
        if (!f.is_number_integer()) {
            throw InputError("field '" + s.field(key) + "': flags must be integers");
        }
        out.push_back(f.get<int>());
    }
    return out;
}

DiffusionModel model_from_json(const json& doc) {
    const Section s(&doc, "model");
    s.allow_only({"family", "name", "catalog", "q", "c0", "eps", "offset", "slope", "drift_offset",
                  "drift_slope", "kappa", "minor"});
    const std::string family = s.text("family");
    std::optional<DiffusionModel> m;
    if (family == "catalog") {
        const std::string name = s.text("catalog");
        if (!has_model(name)) {
            throw InputError("field 'model.catalog': unknown catalog model '" + name + "'");
        }
        m = make_model(name);
    } else if (family == "identity") {
        m = identity_model(s.integer("q", 1), s.number("c0", 1.0));
    } else if (family == "diagonal-affine") {
        const Vector offset = s.vector("offset");
        const auto q = offset.size();
        const Vector zero = Vector::Zero(q);
        m = diagonal_affine_model(offset, s.vector("slope", zero), s.vector("drift_offset", zero),
                                  s.vector("drift_slope", zero), s.number("c0"));
    } else if (family == "sine") {
        m = sine_model(s.number("c0", 2.3));
    } else if (family == "rotation") {
        m = rotation_model(s.number("kappa", 0.5), s.number("minor", 0.5), s.number("c0", 1.2));
    } else {
        throw InputError("field 'model.family': unknown family '" + family +
                         "' (expected catalog, identity, diagonal-affine, sine or rotation)");
    }
    if (s.has("c0") && (family == "catalog")) {
        m = m->with_c0(s.number("c0"));
    }
    if (s.has("eps")) {
        m = m->with_eps(as_flags(s, "eps"));
    }
    return *m;
}

json describe(const DiffusionModel& m) {
    json eps = json::array();
    for (int e : m.eps()) {
        eps.push_back(e);
    }
    return {{"name", m.name()}, {"q", m.q()}, {"d", m.d()}, {"c0", num(m.c0())}, {"eps", eps}};
}

LoadedModel load_model(const std::string& ref) {
    if (ref.empty()) {
        throw InputError("this command needs --model (catalog name or JSON model file)");
    }
    std::error_code ec;
    if (fs::is_regular_file(ref, ec)) {
        const json doc = load_json_file(ref, "model");
        try {
            DiffusionModel m = model_from_json(doc);
            json d = describe(m);
            d["source"] = "file";
            d["spec"] = doc;
            return {std::move(m), std::move(d)};
        } catch (const Error& e) {
            throw InputError(ref + ": invalid model: " + e.what());
        }
    }
    if (has_model(ref)) {
        DiffusionModel m = make_model(ref);
        json d = describe(m);
        d["source"] = "catalog";
        return {std::move(m), std::move(d)};
    }
    if (ref.find('/') != std::string::npos || ref.find(".json") != std::string::npos) {
        throw InputError("model file '" + ref + "' does not exist");
    }
    std::string names;
    for (const auto& n : model_names()) {
        names += names.empty() ? n : ", " + n;
    }
    throw InputError("unknown model '" + ref + "' (catalog: " + names + ")");
}

struct Context {
    explicit Context(const RunSpec& s) : spec(s) {}

    const RunSpec& spec;
    json params = json::object();
    Section root{nullptr, ""};
    ConstantOverrides overrides;
};

void parse_overrides(Context& ctx) {
    const Section c = ctx.root.child("constants");
    c.allow_only({"p_star", "c_star", "mu_k", "C_mp", "K_q"});
    for (const char* key : {"p_star", "c_star", "mu_k", "C_mp", "K_q"}) {
        if (c.has(key)) {
            set_override(ctx.overrides, key, c.number(key));
        }
    }
    for (const std::string& kv : ctx.spec.overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) {
            throw InputError("--override expects KEY=VALUE, got '" + kv + "'");
        }
        const std::string key = kv.substr(0, eq);
        const std::string value = kv.substr(eq + 1);
        double v = 0.0;
        std::istringstream in(value);
        in.imbue(std::locale::classic());
        if (!(in >> v) || !in.eof()) {
            throw InputError("--override " + key + ": '" + value + "' is not a number");
        }
        try {
            set_override(ctx.overrides, key, v);
        } catch (const PreconditionError& e) {
            throw InputError(std::string("--override: ") + e.what());
        }
    }
}

UniversalConstants constants_for(const Context& ctx, int q) {
    try {
        return make_constants(q, ctx.overrides);
    } catch (const PreconditionError& e) {
        throw InputError(e.what());
    }
}

json overrides_json(const ConstantOverrides& o) {
    json out = json::object();
    if (o.p_star) out["p_star"] = num(*o.p_star);
    if (o.c_star) out["c_star"] = num(*o.c_star);
    if (o.mu_k) out["mu_k"] = num(*o.mu_k);
    if (o.c_mp) out["C_mp"] = num(*o.c_mp);
    if (o.k_q) out["K_q"] = num(*o.k_q);
    return out;
}

json placeholders(const ConstantOverrides& o) {
    json out = json::array();
    if (!o.p_star) out.push_back("p_star");
    if (!o.c_star) out.push_back("c_star");
    if (!o.mu_k) out.push_back("mu_k");
    if (!o.c_mp) out.push_back("C_mp");
    if (!o.k_q) out.push_back("K_q");
    return out;
}

// Endpoint problem shared by distance, bound, verify and pipeline.
struct Problem {
    Vector x0;
    Vector y;
    double T = 1.0;
    ThetaParams theta;
    int pieces = 4;
    OptimizerConfig optimizer;
    McConfig mc;
};

Problem resolve_problem(const Context& ctx, const DiffusionModel& model) {
    const Section& r = ctx.root;
    Problem p;
    const int q = model.q();
    Vector e1 = Vector::Zero(q);
    e1[0] = 1.0;
    p.x0 = r.has("x0") ? as_point(*r.raw("x0"), "x0") : Vector::Zero(q);
    p.y = r.has("y") ? as_point(*r.raw("y"), "y") : e1;
    if (p.x0.size() != q || p.y.size() != q) {
        throw InputError("fields 'x0' and 'y' must have " + std::to_string(q) + " components");
    }
    p.T = r.number("T", 1.0);
    if (!(p.T > 0.0) || !std::isfinite(p.T)) {
        throw InputError("field 'T' must be positive and finite");
    }

    const Section th = r.child("theta");
    th.allow_only({"mu", "chi", "nu", "eta", "h"});
    p.theta = ThetaParams{th.number("mu", 2.0), th.number("chi", 2.0), th.number("nu", 10.0),
                          th.number("eta", 10.0), th.number("h", p.T), p.T};
    try {
        p.theta.validate();
    } catch (const PreconditionError& e) {
        throw InputError(std::string("field 'theta': ") + e.what());
    }

    p.pieces = ctx.spec.pieces.value_or(r.integer("pieces", 4));
    if (p.pieces < 1) {
        throw InputError("pieces must be >= 1");
    }

    const Section o = r.child("optimizer");
    o.allow_only({"outer_iterations", "initial_penalty", "penalty_growth", "inner_iterations",
                  "restarts", "violation_tol", "perturbation", "substeps", "endpoint_tol", "method"});
    OptimizerConfig& c = p.optimizer;
    c.outer_iterations = o.integer("outer_iterations", c.outer_iterations);
    c.initial_penalty = o.number("initial_penalty", c.initial_penalty);
    c.penalty_growth = o.number("penalty_growth", c.penalty_growth);
    c.inner_iterations = o.integer("inner_iterations", c.inner_iterations);
    c.restarts = o.integer("restarts", c.restarts);
    c.violation_tol = o.number("violation_tol", c.violation_tol);
    c.perturbation = o.number("perturbation", c.perturbation);
    c.substeps = o.integer("substeps", c.substeps);
    c.endpoint_tol = o.number("endpoint_tol", c.endpoint_tol);
    const std::string method = o.text("method", "pattern");
    if (method == "pattern") {
        c.method = InnerMethod::PatternSearch;
    } else if (method == "gradient") {
        c.method = InnerMethod::GradientDescent;
    } else {
        throw InputError("field 'optimizer.method': expected 'pattern' or 'gradient'");
    }
    c.seed = ctx.spec.seed;

    const Section m = r.child("mc");
    m.allow_only({"n_paths", "steps_per_unit", "bandwidth", "confidence", "batches"});
    McConfig& mc = p.mc;
    mc.n_paths = ctx.spec.n_paths.value_or(static_cast<std::size_t>(m.integer("n_paths", 10000)));
    mc.steps_per_unit = m.number("steps_per_unit", mc.steps_per_unit);
    if (m.has("bandwidth")) {
        mc.bandwidth = m.numbers("bandwidth");
    }
    mc.confidence = m.number("confidence", mc.confidence);
    mc.batches = static_cast<std::size_t>(m.integer("batches", static_cast<int>(mc.batches)));
    mc.seed = ctx.spec.seed;
    try {
        mc.validate();
    } catch (const PreconditionError& e) {
        throw InputError(std::string("field 'mc': ") + e.what());
    }
    return p;
}

json problem_json(const Problem& p) {
    return {{"x0", to_json(p.x0)},
            {"y", to_json(p.y)},
            {"T", num(p.T)},
            {"theta", to_json(p.theta)},
            {"pieces", p.pieces},
            {"optimizer", to_json(p.optimizer)},
            {"mc", to_json(p.mc)}};
}

struct Outcome {
    json resolved = json::object();
    json result = json::object();
    std::string status = "ok";
    int code = kExitOk;
    std::vector<std::pair<std::string, std::string>> files;  // name, contents
};

template <typename Writer>
std::string csv(Writer&& w) {
    std::ostringstream out;
    out.imbue(std::locale::classic());
    w(out);
    return out.str();
}

json distance_json(const DistanceResult& d) {
    return {{"d_theta_upper", num(d.d_theta_upper)},
            {"feasible", d.feasible()},
            {"admissibility", to_json(d.report)},
            {"evaluations", d.iterations},
            {"feasible_restarts", d.feasible_restarts},
            {"init_fell_back", d.init_fell_back},
            {"diagnostics", d.diagnostics}};
}

void add_witness_files(Outcome& o, const DistanceResult& d) {
    if (!d.feasible()) {
        return;
    }
    o.files.emplace_back("control.csv", csv([&](std::ostream& s) { write_control_csv(*d.witness, s); }));
    o.files.emplace_back("path.csv", csv([&](std::ostream& s) { write_path_csv(*d.path, s); }));
}

std::vector<double> default_probes() {
    std::vector<double> out;
    for (int i = 1; i < 100; ++i) {
        out.push_back(0.01 * i);
    }
    return out;
}

// ---- commands -------------------------------------------------------------

Outcome cmd_constants(Context& ctx) {
    const int q = ctx.spec.q.value_or(ctx.root.integer("q", 1));
    if (q < 1) {
        throw InputError("--q must be >= 1");
    }
    const UniversalConstants c = constants_for(ctx, q);
    Outcome o;
    o.resolved = {{"q", q}, {"overrides", overrides_json(ctx.overrides)}};
    o.result = {{"constants", to_json(c)}, {"placeholders", placeholders(ctx.overrides)}};
    return o;
}

EnvelopeFn envelope_from(const Section& s, const char* key, double t_end, Interpolation kind) {
    const json* v = s.raw(key);
    if (v == nullptr) {
        throw InputError("missing field '" + s.field(key) + "'");
    }
    if (v->is_number()) {
        return EnvelopeFn::constant(v->get<double>(), t_end);
    }
    const Section e = s.child(key);
    e.allow_only({"times", "values", "window"});
    auto times = e.numbers("times");
    auto values = e.numbers("values");
    const double window = e.number("window", t_end);
    try {
        return EnvelopeFn::fit(std::move(times), std::move(values), window, kind);
    } catch (const PreconditionError& err) {
        throw InputError("field '" + s.field(key) + "': " + err.what());
    }
}

Outcome cmd_grid(Context& ctx) {
    const Section g = ctx.root.child("grid");
    if (g.node() == nullptr) {
        throw InputError("the grid command needs a 'grid' section in --params");
    }
    g.allow_only({"T", "h", "m_Q", "m_pi", "pi", "gamma", "interpolation"});
    const double t_end = g.number("T");
    const std::string interp = g.text("interpolation", "linear");
    if (interp != "linear" && interp != "step") {
        throw InputError("field 'grid.interpolation': expected 'linear' or 'step'");
    }
    const Interpolation kind = interp == "step" ? Interpolation::Step : Interpolation::Linear;
    const EnvelopeFn pi = envelope_from(g, "pi", t_end, kind);
    const EnvelopeFn gamma = envelope_from(g, "gamma", t_end, kind);
    const double h = g.number("h", kInfiniteWindow);
    const double m_q = g.number("m_Q", 1.0);
    const double m_pi = g.number("m_pi", pi.m());
    TimeGrid grid;
    double bound = 0.0;
    std::vector<double> certs;
    try {
        grid = build_grid(pi, gamma, h, m_q, t_end);
        bound = grid_count_bound(pi, gamma, h, m_q, m_pi, t_end);
        certs = step_certificates(grid, pi, gamma, h, m_q, m_pi);
    } catch (const PreconditionError& e) {
        throw InputError(std::string("grid: ") + e.what());
    }
    Outcome o;
    o.resolved = {{"T", num(t_end)}, {"h", num(h)}, {"m_Q", num(m_q)}, {"m_pi", num(m_pi)},
                  {"interpolation", interp}, {"pi_window", num(pi.h())}};
    o.result = {{"grid", to_json(grid)},
                {"count_bound", num(bound)},
                {"N_within_bound", static_cast<double>(grid.steps()) <= bound},
                {"step_certificates", to_json(certs)}};
    o.files.emplace_back("grid.csv", csv([&](std::ostream& s) { write_grid_csv(grid, s); }));
    return o;
}

Outcome cmd_distance(Context& ctx) {
    const LoadedModel lm = load_model(ctx.spec.model);
    const Problem p = resolve_problem(ctx, lm.model);
    const DistanceResult d = minimize_energy(lm.model, p.x0, p.y, p.theta, p.pieces, p.optimizer);
    Outcome o;
    o.resolved = {{"model", lm.description}, {"problem", problem_json(p)}};
    o.result = {{"distance", distance_json(d)}};
    add_witness_files(o, d);
    if (!d.feasible()) {
        o.status = "infeasible";
        o.code = kExitOutcome;
    }
    return o;
}

BoundReport evolution_bound_from(const Section& s) {
    s.allow_only({"N", "q", "a", "H", "a_N", "det_M_N"});
    try {
        return log_bound_evolution(s.integer("N"), s.integer("q", 1), s.numbers("a"), s.numbers("H"),
                                   s.number("a_N"), s.number("det_M_N"));
    } catch (const PreconditionError& e) {
        throw InputError(std::string("field 'evolution_bound': ") + e.what());
    }
}

Outcome cmd_bound(Context& ctx) {
    const std::string formula = ctx.root.text("formula", "thm24");
    Outcome o;
    if (formula == "thm15") {
        const Section s = ctx.root.child("evolution_bound");
        if (s.node() == nullptr) {
            throw InputError("formula thm15 needs an 'evolution_bound' section");
        }
        const BoundReport r = evolution_bound_from(s);
        o.resolved = {{"formula", formula}, {"evolution_bound", *s.node()}};
        o.result = {{"bound", to_json(r)}};
        return o;
    }
    if (formula != "thm17" && formula != "thm21" && formula != "thm24") {
        throw InputError("field 'formula': expected thm15, thm17, thm21 or thm24");
    }
    const LoadedModel lm = load_model(ctx.spec.model);
    const Problem p = resolve_problem(ctx, lm.model);
    const UniversalConstants consts = constants_for(ctx, lm.model.q());
    o.resolved = {{"formula", formula},
                  {"model", lm.description},
                  {"problem", problem_json(p)},
                  {"overrides", overrides_json(ctx.overrides)}};
    o.result["constants"] = to_json(consts);
    o.result["placeholders"] = placeholders(ctx.overrides);

    BoundReport report;
    if (formula == "thm24" && ctx.root.has("d_theta")) {
        const double d = ctx.root.number("d_theta");
        o.resolved["d_theta"] = num(d);
        report = log_bound_thm24(lm.model, p.theta, d, p.T, p.y, consts);
    } else {
        const DistanceResult d = minimize_energy(lm.model, p.x0, p.y, p.theta, p.pieces, p.optimizer);
        o.result["distance"] = distance_json(d);
        add_witness_files(o, d);
        if (formula == "thm24") {
            report = log_bound_thm24(lm.model, p.theta, d.d_theta_upper, p.T, p.y, consts);
        } else if (!d.feasible()) {
            report.formula_id = formula;
            report.log_lower_bound = -std::numeric_limits<double>::infinity();
            report.diagnostics = "no admissible control found";
        } else if (formula == "thm17") {
            const BoundInputs in = derive_envelopes(lm.model, *d.path, *d.witness, p.theta, consts, p.y);
            const double a = ctx.root.number("a", 1.5);
            report = log_bound_thm17(in, a, lm.model.q(), p.T, std::exp(in.log_det_q_t));
            o.result["envelopes"] = to_json(in);
        } else {
            const Section gs = ctx.root.child("growth");
            gs.allow_only({"probes", "rates"});
            const auto probes = gs.has("probes") ? gs.numbers("probes") : default_probes();
            const std::string rates = gs.text("rates", "control");
            std::optional<std::vector<double>> cells;
            if (rates == "control") {
                cells = control_growth_rates(lm.model, *d.witness, *d.path);
            } else if (rates != "path") {
                throw InputError("field 'growth.rates': expected 'control' or 'path'");
            }
            try {
                const GrowthWindow g = growth_window(lm.model, *d.path, lm.model.q(), probes, cells);
                o.result["growth"] = to_json(g);
                report = log_bound_thm21(lm.model, *d.path, g, p.theta.mu, p.theta.chi, consts, p.T, p.y);
            } catch (const HypothesisError& e) {
                report.formula_id = formula;
                report.log_lower_bound = -std::numeric_limits<double>::infinity();
                report.diagnostics = e.what();
            }
        }
    }
    o.result["bound"] = to_json(report);
    if (!std::isfinite(report.log_lower_bound)) {
        o.status = "infeasible";
        o.code = kExitOutcome;
    }
    return o;
}

std::vector<Matrix> matrices(const Section& s, const char* key) {
    const json* v = s.raw(key);
    if (v == nullptr || !v->is_array()) {
        throw InputError("field '" + s.field(key) + "': expected an array of matrices");
    }
    std::vector<Matrix> out;
    for (std::size_t i = 0; i < v->size(); ++i) {
        out.push_back(to_matrix((*v)[i], s.field(key) + "[" + std::to_string(i) + "]"));
    }
    return out;
}

Outcome cmd_simulate_evolution(Context& ctx) {
    const Section e = ctx.root.child("evolution");
    if (e.node() == nullptr) {
        throw InputError("simulate-evolution needs an 'evolution' section in --params");
    }
    e.allow_only({"q", "times", "M", "a", "H", "x", "kernels", "remainders", "relaxed_log_threshold",
                  "eta", "requests", "n_paths", "max_closed_form_paths", "max_nested_paths",
                  "nested_samples"});
    EvolutionConfig cfg;
    cfg.q = e.integer("q", 1);
    cfg.constants = constants_for(ctx, cfg.q);
    cfg.times = e.numbers("times");
    cfg.m = matrices(e, "M");
    cfg.a = e.numbers("a");
    cfg.h_ratio = e.numbers("H");
    cfg.kernels = matrices(e, "kernels");
    const json* xs = e.raw("x");
    if (xs == nullptr || !xs->is_array()) {
        throw InputError("field 'evolution.x': expected an array of waypoints");
    }
    for (std::size_t i = 0; i < xs->size(); ++i) {
        cfg.x.push_back(as_point((*xs)[i], "evolution.x[" + std::to_string(i) + "]"));
    }
    const std::size_t n = cfg.times.empty() ? 0 : cfg.times.size() - 1;
    cfg.remainders.assign(n, RemainderSpec{});
    if (const json* rs = e.raw("remainders")) {
        if (!rs->is_array() || rs->size() != n) {
            throw InputError("field 'evolution.remainders': expected one entry per step");
        }
        for (std::size_t k = 0; k < n; ++k) {
            const Section r(&(*rs)[k], "evolution.remainders[" + std::to_string(k) + "]");
            r.allow_only({"kind", "epsilon"});
            const std::string kind = r.text("kind", "zero");
            if (kind == "quadratic") {
                cfg.remainders[k].kind = RemainderSpec::Kind::Quadratic;
                cfg.remainders[k].epsilon = r.number("epsilon");
            } else if (kind != "zero") {
                throw InputError("field '" + r.field("kind") + "': expected 'zero' or 'quadratic'");
            }
        }
    }
    if (e.has("relaxed_log_threshold")) {
        cfg.relaxed_log_threshold = e.number("relaxed_log_threshold");
    }
    EvolutionRunOptions opt;
    opt.seed = ctx.spec.seed;
    opt.eta = e.number("eta", opt.eta);
    opt.n_paths = ctx.spec.n_paths.value_or(static_cast<std::size_t>(e.integer("n_paths", 100000)));
    opt.max_closed_form_paths = static_cast<std::size_t>(
        e.integer("max_closed_form_paths", static_cast<int>(opt.max_closed_form_paths)));
    opt.max_nested_paths =
        static_cast<std::size_t>(e.integer("max_nested_paths", static_cast<int>(opt.max_nested_paths)));
    opt.nested_samples =
        static_cast<std::size_t>(e.integer("nested_samples", static_cast<int>(opt.nested_samples)));
    std::vector<DensityRequest> requests;
    if (const json* rq = e.raw("requests")) {
        if (!rq->is_array()) {
            throw InputError("field 'evolution.requests': expected an array");
        }
        for (std::size_t i = 0; i < rq->size(); ++i) {
            const Section r(&(*rq)[i], "evolution.requests[" + std::to_string(i) + "]");
            r.allow_only({"k", "z"});
            requests.push_back({r.integer("k"), as_point(*r.raw("z"), r.field("z"))});
        }
    }
    EvolutionStats stats;
    try {
        stats = simulate_evolution(cfg, requests, opt);
    } catch (const Error& err) {
        throw InputError(std::string("evolution: ") + err.what());
    }
    Outcome o;
    o.resolved = {{"evolution", *e.node()},
                  {"n_paths", opt.n_paths},
                  {"seed", opt.seed},
                  {"eta", num(opt.eta)},
                  {"overrides", overrides_json(ctx.overrides)}};
    o.result = {{"stats", to_json(stats)}};
    bool ok = stats.tube_pass;
    for (const auto& s : stats.steps) ok = ok && s.pass;
    for (const auto& d : stats.densities) ok = ok && d.pass;
    for (const auto& r : stats.remainders) ok = ok && r.ok;
    if (!ok) {
        o.status = "check-failed";
        o.code = kExitOutcome;
    }
    return o;
}

void set_verdict(Outcome& o, Verdict v) {
    o.result["verdict"] = to_string(v);
    if (v == Verdict::Vacuous) {
        o.status = "vacuous";
        o.code = kExitOutcome;
    } else if (v == Verdict::Fail) {
        o.status = "fail";
        o.code = kExitOutcome;
    }
}

Outcome cmd_verify(Context& ctx) {
    const LoadedModel lm = load_model(ctx.spec.model);
    const Problem p = resolve_problem(ctx, lm.model);
    BoundReport report;
    report.formula_id = "given";
    report.log_lower_bound = ctx.root.number("log_bound");
    const VerifyResult v = verify_bound(lm.model, p.x0, p.y, p.T, report, p.mc);
    Outcome o;
    o.resolved = {{"model", lm.description}, {"problem", problem_json(p)}, {"log_bound", num(report.log_lower_bound)}};
    o.result["verify"] = to_json(v);
    if (ctx.root.has("remainder")) {
        const Section r = ctx.root.child("remainder");
        r.allow_only({"t", "deltas", "p"});
        try {
            const RemainderScaling rs =
                remainder_scaling(lm.model, p.x0, r.number("t", 0.5), r.numbers("deltas"), r.integer("p", 2), p.mc);
            o.result["remainder"] = to_json(rs);
            o.resolved["remainder"] = *r.node();
        } catch (const PreconditionError& e) {
            throw InputError(std::string("field 'remainder': ") + e.what());
        }
    }
    set_verdict(o, v.verdict);
    return o;
}

// Points y_s = x0 + s (y - x0) around the target, for density-vs-bound plot data.
std::vector<double> curve_scales(int n) {
    std::vector<double> out;
    for (int i = 0; i < n; ++i) {
        out.push_back(n == 1 ? 1.0 : 0.5 + static_cast<double>(i) / (n - 1));
    }
    return out;
}

Outcome cmd_pipeline(Context& ctx) {
    const LoadedModel lm = load_model(ctx.spec.model);
    const DiffusionModel& model = lm.model;
    const Problem p = resolve_problem(ctx, model);
    const UniversalConstants consts = constants_for(ctx, model.q());
    const int curve_points = ctx.root.integer("curve_points", 5);
    if (curve_points < 0) {
        throw InputError("field 'curve_points' must be >= 0");
    }
    Outcome o;
    o.resolved = {{"model", lm.description},
                  {"problem", problem_json(p)},
                  {"overrides", overrides_json(ctx.overrides)},
                  {"curve_points", curve_points}};
    o.result["constants"] = to_json(consts);
    o.result["placeholders"] = placeholders(ctx.overrides);

    const DistanceResult d = minimize_energy(model, p.x0, p.y, p.theta, p.pieces, p.optimizer);
    o.result["distance"] = distance_json(d);
    add_witness_files(o, d);

    if (d.feasible()) {
        const BoundInputs in = derive_envelopes(model, *d.path, *d.witness, p.theta, consts, p.y);
        o.result["envelopes"] = to_json(in);
        const TimeGrid grid = build_grid(in.pi, in.gamma, in.h, in.m_Q, p.T);
        const double count = grid_count_bound(in.pi, in.gamma, in.h, in.m_Q, in.m_pi, p.T);
        o.result["grid"] = {{"N", grid.steps()}, {"count_bound", num(count)}};
        o.files.emplace_back("grid.csv", csv([&](std::ostream& s) { write_grid_csv(grid, s); }));
        o.result["bound_thm17"] = to_json(log_bound_thm17(in, 1.5, model.q(), p.T, std::exp(in.log_det_q_t)));

        const auto probes = default_probes();
        const GrowthWindow g = growth_window(model, *d.path, model.q(), probes,
                                             control_growth_rates(model, *d.witness, *d.path));
        o.result["growth"] = to_json(g);
        try {
            o.result["bound_thm21"] =
                to_json(log_bound_thm21(model, *d.path, g, p.theta.mu, p.theta.chi, consts, p.T, p.y));
        } catch (const HypothesisError& e) {
            o.result["bound_thm21"] = {{"formula", "thm21"}, {"error", e.what()}};
        }
    }

    const BoundReport main = log_bound_thm24(model, p.theta, d.d_theta_upper, p.T, p.y, consts);
    o.result["bound"] = to_json(main);
    const VerifyResult v = verify_bound(model, p.x0, p.y, p.T, main, p.mc);
    o.result["verify"] = to_json(v);

    if (curve_points > 0) {
        const EulerResult em = euler_maruyama(model, p.x0, p.T, p.mc);
        Vector dir = p.y - p.x0;
        if (dir.norm() == 0.0) {
            dir = Vector::Zero(model.q());
            dir[0] = 1.0;
        }
        std::ostringstream rows;
        rows.imbue(std::locale::classic());
        rows << std::setprecision(17) << "s";
        for (int j = 0; j < model.q(); ++j) {
            rows << ",y_" << j + 1;
        }
        rows << ",d_theta,log_bound,kde,kde_lo,kde_hi,verdict\n";
        json curve = json::array();
        for (double s : curve_scales(curve_points)) {
            const Vector ys = p.x0 + s * dir;
            const DistanceResult ds = minimize_energy(model, p.x0, ys, p.theta, p.pieces, p.optimizer);
            const BoundReport bs = log_bound_thm24(model, p.theta, ds.d_theta_upper, p.T, ys, consts);
            const KdeEstimate k = kde_at_point(em.terminal, ys, p.mc.bandwidth, p.mc.confidence, p.mc.batches);
            const Verdict vs = classify_bound(bs.log_lower_bound, k);
            rows << s;
            for (int j = 0; j < model.q(); ++j) {
                rows << ',' << ys[j];
            }
            rows << ',' << ds.d_theta_upper << ',' << bs.log_lower_bound << ',' << k.estimate << ','
                 << k.lo << ',' << k.hi << ',' << to_string(vs) << '\n';
            curve.push_back({{"s", num(s)},
                             {"y", to_json(ys)},
                             {"d_theta_upper", num(ds.d_theta_upper)},
                             {"log_bound", num(bs.log_lower_bound)},
                             {"kde", to_json(k)},
                             {"verdict", to_string(vs)}});
        }
        o.result["curve"] = curve;
        o.files.emplace_back("density_vs_bound.csv", rows.str());
    }

    if (!d.feasible()) {
        o.result["verdict"] = to_string(v.verdict);
        o.status = "infeasible";
        o.code = kExitOutcome;
    } else {
        set_verdict(o, v.verdict);
    }
    return o;
}

std::string iso_now() {
    const auto now = std::chrono::system_clock::now();
    const std::time_t t = std::chrono::system_clock::to_time_t(now);
    std::tm tm{};
    gmtime_r(&t, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    out << text;
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
}

}  // namespace

const std::vector<std::string>& commands() {
    static const std::vector<std::string> names{"constants", "grid",   "distance", "bound",
                                                "simulate-evolution", "verify", "pipeline"};
    return names;
}

int execute(const RunSpec& spec, std::ostream& out, std::ostream& err) {
    const auto started = std::chrono::steady_clock::now();
    const std::string started_at = iso_now();
    Outcome outcome;
    try {
        Context ctx{spec};
        if (spec.params) {
            ctx.params = load_json_file(*spec.params, "parameter file");
            if (!ctx.params.is_object()) {
                throw InputError(*spec.params + ": parameter file must hold a JSON object");
            }
        }
        ctx.root = Section(&ctx.params, "");
        ctx.root.allow_only({"x0", "y", "T", "theta", "pieces", "optimizer", "mc", "constants", "grid",
                             "evolution", "formula", "d_theta", "growth", "a", "evolution_bound",
                             "log_bound", "remainder", "curve_points", "q"});
        parse_overrides(ctx);

        if (spec.command == "constants") {
            outcome = cmd_constants(ctx);
        } else if (spec.command == "grid") {
            outcome = cmd_grid(ctx);
        } else if (spec.command == "distance") {
            outcome = cmd_distance(ctx);
        } else if (spec.command == "bound") {
            outcome = cmd_bound(ctx);
        } else if (spec.command == "simulate-evolution") {
            outcome = cmd_simulate_evolution(ctx);
        } else if (spec.command == "verify") {
            outcome = cmd_verify(ctx);
        } else if (spec.command == "pipeline") {
            outcome = cmd_pipeline(ctx);
        } else {
            throw InputError("unknown command '" + spec.command + "'");
        }
    } catch (const InputError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const DimensionError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    } catch (const PreconditionError& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }

    json report = {{"schema_version", kSchemaVersion},
                   {"command", spec.command},
                   {"seed", spec.seed},
                   {"resolved", outcome.resolved},
                   {"result", outcome.result},
                   {"status", outcome.status},
                   {"exit_code", outcome.code}};
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    json meta = {{"started_at", started_at},
                 {"finished_at", iso_now()},
                 {"wall_seconds", wall},
                 {"hardware_threads", std::thread::hardware_concurrency()},
                 {"version", "0.1.0"}};
    try {
        const fs::path dir(spec.out_dir);
        fs::create_directories(dir);
        write_text(dir / "report.json", report.dump(2) + "\n");
        write_text(dir / "meta.json", meta.dump(2) + "\n");
        for (const auto& [name, text] : outcome.files) {
            write_text(dir / name, text);
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitInputError;
    }
    out << spec.command << ": " << outcome.status << " (report: "
        << (fs::path(spec.out_dir) / "report.json").string() << ")\n";
    return outcome.code;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Certified lower bounds for diffusion transition densities"};
    app.require_subcommand(1);
    RunSpec spec;
    std::string params;
    int q = 0;
    std::size_t n_paths = 0;
    int pieces = 0;
    const std::vector<std::pair<std::string, std::string>> descriptions{
        {"constants", "print the universal constants for dimension --q"},
        {"grid", "build the adaptive time grid from envelope data"},
        {"distance", "estimate the control distance between x0 and y"},
        {"bound", "evaluate a lower-bound formula"},
        {"simulate-evolution", "Monte Carlo check of a Gaussian evolution sequence"},
        {"verify", "compare a log bound against a Monte Carlo density estimate"},
        {"pipeline", "distance, envelopes, grid, bound and verification in one run"}};
    std::vector<CLI::App*> subs;
    for (const auto& [name, text] : descriptions) {
        CLI::App* sub = app.add_subcommand(name, text);
        sub->add_option("--model", spec.model, "catalog model name or JSON model file");
        sub->add_option("--params", params, "JSON parameter file");
        sub->add_option("--out", spec.out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", spec.seed, "random seed")->capture_default_str();
        sub->add_option("--q", q, "dimension (constants)");
        sub->add_option("--override", spec.overrides, "KEY=VALUE for p_star, c_star, mu_k, C_mp, K_q")
            ->take_all();
        sub->add_option("--n-paths", n_paths, "Monte Carlo paths");
        sub->add_option("--pieces", pieces, "control pieces");
        subs.push_back(sub);
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? kExitOk : kExitInputError;
    }
    for (CLI::App* sub : subs) {
        if (sub->parsed()) {
            spec.command = sub->get_name();
            if (sub->count("--params") > 0) spec.params = params;
            if (sub->count("--q") > 0) spec.q = q;
            if (sub->count("--n-paths") > 0) spec.n_paths = n_paths;
            if (sub->count("--pieces") > 0) spec.pieces = pieces;
        }
    }
    return execute(spec, out, err);
}

}  // namespace ldb::cli
