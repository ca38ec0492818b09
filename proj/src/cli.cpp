#include "slowman/cli.hpp"

#include "slowman/errors.hpp"
#include "slowman/harness.hpp"
#include "slowman/rpm.hpp"
#include "slowman/stability.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

namespace slowman::cli {

using Json = nlohmann::ordered_json;

namespace {

constexpr double kPi = std::numbers::pi;

enum class Kind { Real, Int, Text, RealList };

struct KeySpec {
    const char* name;
    const char* flag;
    Kind kind;
    const char* help;
};

const std::vector<KeySpec>& key_table() {
    static const std::vector<KeySpec> keys = {
        {"system", "--system", Kind::Text, "system id: linear, mm or pair"},
        {"eps", "--eps", Kind::Real, "timescale ratio epsilon"},
        {"x0", "--x0", Kind::RealList, "slow coordinate (comma separated)"},
        {"y0", "--y0", Kind::RealList, "fast seed (comma separated)"},
        {"seed_policy", "--seed-policy", Kind::Text, "user-value or critical-manifold"},
        {"m", "--m", Kind::Int, "order m of the zero-derivative condition"},
        {"mode", "--mode", Kind::Text, "analytic or differenced"},
        {"H_over_eps", "--H-over-eps", Kind::Real, "iterative step H / eps (analytic mode)"},
        {"Hhat_over_eps", "--Hhat-over-eps", Kind::Real, "differencing step Hhat / eps"},
        {"eta", "--eta", Kind::Real, "eta = H / Hhat (differenced mode)"},
        {"tol", "--tol", Kind::Real, "tolerance TOL_m (default eps^(m+1))"},
        {"max_iters", "--max-iters", Kind::Int, "iteration cap"},
        {"delta", "--delta", Kind::Real, "RPM radius margin"},
        {"refresh_every", "--refresh-every", Kind::Int, "RPM subspace refresh cadence"},
        {"jacobian_step", "--jacobian-step", Kind::Real, "RPM finite-difference step"},
        {"max_dim", "--max-dim", Kind::Int, "RPM cap on the Newton block size"},
        {"m_max", "--m-max", Kind::Int, "last order of a cascade"},
        {"tol0", "--tol0", Kind::Real, "cascade base tolerance (TOL_m = tol0 eps^m)"},
        {"resolution", "--resolution", Kind::Int, "cells per raster axis"},
        {"theta_min", "--theta-min", Kind::Real, "lower angle (radians)"},
        {"theta_max", "--theta-max", Kind::Real, "upper angle (radians)"},
        {"step_min", "--step-min", Kind::Real, "lower scaled step"},
        {"step_max", "--step-max", Kind::Real, "upper scaled step"},
        {"kind", "--kind", Kind::Text, "sweep kind: order, threshold or compare"},
        {"epsilons", "--epsilons", Kind::RealList, "decreasing eps values for an order sweep"},
        {"lo_over_eps", "--lo-over-eps", Kind::Real, "threshold bracket lower end / eps"},
        {"hi_over_eps", "--hi-over-eps", Kind::Real, "threshold bracket upper end / eps"},
        {"iterations", "--iterations", Kind::Int, "iterations per compared cell"},
        {"band", "--band", Kind::Real, "excluded band around |mu| = 1"},
        {"output", "--output", Kind::Text, "output file (stdout when absent)"},
        {"format", "--format", Kind::Text, "csv or json"},
    };
    return keys;
}

const KeySpec* find_key(const std::string& name) {
    for (const auto& k : key_table())
        if (name == k.name) return &k;
    return nullptr;
}

struct ParamFlag {
    const char* flag;
    const char* key;
};

const std::vector<ParamFlag>& param_flags() {
    static const std::vector<ParamFlag> flags = {
        {"--a", "a"},         {"--c", "c"},   {"--kappa", "kappa"}, {"--lambda", "lambda"},
        {"--theta", "theta"}, {"--lambda-re", "lambda_re"},         {"--extra-real", "extra_real"},
    };
    return flags;
}

// --- value conversion -------------------------------------------------------

double parse_real(const std::string& text, const std::string& what) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const double v = std::strtod(begin, &end);
    if (end == begin || *end != '\0' || !std::isfinite(v))
        throw ValidationError("option '" + what + "' expects a finite real, got '" + text + "'");
    return v;
}

long long parse_int(const std::string& text, const std::string& what) {
    const char* begin = text.c_str();
    char* end = nullptr;
    const long long v = std::strtoll(begin, &end, 10);
    if (end == begin || *end != '\0') throw ValidationError("option '" + what + "' expects an integer, got '" + text + "'");
    return v;
}

Json from_text(const KeySpec& key, const std::string& text) {
    switch (key.kind) {
        case Kind::Real: return parse_real(text, key.name);
        case Kind::Int: return parse_int(text, key.name);
        case Kind::Text: return text;
        case Kind::RealList: {
            Json arr = Json::array();
            std::stringstream ss(text);
            std::string item;
            while (std::getline(ss, item, ',')) arr.push_back(parse_real(item, key.name));
            if (arr.empty()) throw ValidationError(std::string("option '") + key.name + "' expects a list of reals");
            return arr;
        }
    }
    return nullptr;
}

Json check_json_value(const KeySpec& key, const Json& v) {
    const std::string name = key.name;
    if (v.is_null()) return v;
    switch (key.kind) {
        case Kind::Real:
            if (!v.is_number()) throw ValidationError("key '" + name + "' must be a number");
            return v.get<double>();
        case Kind::Int:
            if (!v.is_number_integer()) throw ValidationError("key '" + name + "' must be an integer");
            return v.get<long long>();
        case Kind::Text:
            if (!v.is_string()) throw ValidationError("key '" + name + "' must be a string");
            return v;
        case Kind::RealList: {
            if (v.is_number()) return Json::array({v.get<double>()});
            if (!v.is_array() || v.empty()) throw ValidationError("key '" + name + "' must be a number or a nonempty array");
            Json arr = Json::array();
            for (const auto& e : v) {
                if (!e.is_number()) throw ValidationError("key '" + name + "' must contain numbers only");
                arr.push_back(e.get<double>());
            }
            return arr;
        }
    }
    return v;
}

Json check_params(const Json& v) {
    if (!v.is_object()) throw ValidationError("key 'params' must be an object of numbers");
    Json out = Json::object();
    for (auto it = v.begin(); it != v.end(); ++it) {
        if (!it.value().is_number()) throw ValidationError("parameter '" + it.key() + "' must be a number");
        out[it.key()] = it.value().get<double>();
    }
    return out;
}

// --- defaults per command ----------------------------------------------------

Json system_block(double eps) {
    Json j;
    j["system"] = "linear";
    j["params"] = Json::object();
    j["eps"] = eps;
    j["x0"] = Json::array({1.0});
    j["y0"] = nullptr;
    j["seed_policy"] = nullptr;
    return j;
}

void add_mode_block(Json& j, bool with_h = true) {
    j["mode"] = "analytic";
    if (with_h) {
        j["H_over_eps"] = 1.0;
        j["Hhat_over_eps"] = 1.0;
    }
    j["eta"] = 1.0;
}

Json defaults_for(const std::string& command, const std::string& kind) {
    Json j;
    if (command == "project" || command == "rpm") {
        j = system_block(0.01);
        j["m"] = 0;
        add_mode_block(j);
        j["tol"] = nullptr;
        j["max_iters"] = 10000;
        if (command == "rpm") {
            j["delta"] = 0.2;
            j["refresh_every"] = 5;
            j["jacobian_step"] = 1e-7;
            j["max_dim"] = nullptr;
        }
    } else if (command == "cascade") {
        j = system_block(0.01);
        add_mode_block(j);
        j["max_iters"] = 10000;
        j["m_max"] = 3;
        j["tol0"] = nullptr;
    } else if (command == "stability") {
        j = system_block(0.01);
        j["m"] = 0;
        add_mode_block(j);
    } else if (command == "region") {
        j["m"] = 1;
        j["mode"] = "differenced";
        j["eta"] = 1.0;
        j["resolution"] = 256;
        j["theta_min"] = 0.5 * kPi;
        j["theta_max"] = 1.5 * kPi;
        j["step_min"] = 0.0;
        j["step_max"] = 3.0;
    } else if (command == "sweep") {
        j["kind"] = kind;
        if (kind == "order") {
            j["system"] = "linear";
            j["params"] = Json::object();
            j["x0"] = Json::array({1.0});
            j["y0"] = nullptr;
            j["m"] = 0;
            add_mode_block(j);
            j["max_iters"] = 10000;
            j["epsilons"] = Json::array({1e-2, 5e-3, 2e-3, 1e-3});
        } else if (kind == "threshold") {
            j = system_block(0.01);
            j.erase("seed_policy");
            j["kind"] = kind;
            j["m"] = 0;
            add_mode_block(j, false);
            j["tol"] = nullptr;
            j["max_iters"] = 2000;
            j["lo_over_eps"] = 0.5;
            j["hi_over_eps"] = 3.0;
        } else if (kind == "compare") {
            j["m"] = 1;
            j["eta"] = 1.0;
            j["resolution"] = 64;
            j["eps"] = 1e-3;
            j["theta_min"] = 0.6 * kPi;
            j["theta_max"] = 1.4 * kPi;
            j["step_min"] = 0.05;
            j["step_max"] = 3.0;
            j["iterations"] = 30;
            j["band"] = 0.02;
        } else {
            throw ValidationError("unknown sweep kind '" + kind + "' (expected order, threshold or compare)");
        }
    } else {
        throw ValidationError("unknown command '" + command + "'");
    }
    j["output"] = nullptr;
    j["format"] = command == "region" ? "csv" : "json";
    Json out;
    out["command"] = command;
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value();
    return out;
}

// --- output ------------------------------------------------------------------

void write_json(const Json& j, std::ostream& os, int depth) {
    const std::string pad(2 * (depth + 1), ' ');
    const std::string close_pad(2 * depth, ' ');
    if (j.is_object()) {
        if (j.empty()) {
            os << "{}";
            return;
        }
        os << "{\n";
        bool first = true;
        for (auto it = j.begin(); it != j.end(); ++it) {
            if (!first) os << ",\n";
            first = false;
            os << pad << Json(it.key()).dump() << ": ";
            write_json(it.value(), os, depth + 1);
        }
        os << "\n" << close_pad << "}";
    } else if (j.is_array()) {
        if (j.empty()) {
            os << "[]";
            return;
        }
        bool scalar = true;
        for (const auto& e : j)
            if (e.is_structured()) scalar = false;
        if (scalar) {
            os << "[";
            for (std::size_t i = 0; i < j.size(); ++i) {
                if (i) os << ", ";
                write_json(j[i], os, depth + 1);
            }
            os << "]";
            return;
        }
        os << "[\n";
        for (std::size_t i = 0; i < j.size(); ++i) {
            if (i) os << ",\n";
            os << pad;
            write_json(j[i], os, depth + 1);
        }
        os << "\n" << close_pad << "]";
    } else if (j.is_number_float()) {
        const double v = j.get<double>();
        if (std::isfinite(v))
            os << format_real(v);
        else
            os << "null";
    } else {
        os << j.dump();
    }
}

std::string json_text(const Json& j) {
    std::ostringstream os;
    write_json(j, os, 0);
    os << "\n";
    return os.str();
}

Json real_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

Json vector_json(const Vector& v) {
    Json a = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

class Csv {
public:
    explicit Csv(const std::vector<std::string>& header) {
        for (std::size_t i = 0; i < header.size(); ++i) os_ << (i ? "," : "") << header[i];
        os_ << "\n";
    }
    Csv& cell(double v) { return raw(format_real(v)); }
    Csv& cell(long long v) { return raw(std::to_string(v)); }
    Csv& cell(int v) { return raw(std::to_string(v)); }
    Csv& cell(bool v) { return raw(v ? "1" : "0"); }
    Csv& raw(const std::string& s) {
        os_ << (first_ ? "" : ",") << s;
        first_ = false;
        return *this;
    }
    void end_row() {
        os_ << "\n";
        first_ = true;
    }
    std::string str() const { return os_.str(); }

private:
    std::ostringstream os_;
    bool first_ = true;
};

// --- config access -----------------------------------------------------------

struct Resolved {
    Json cfg;

    double real(const char* k) const { return cfg.at(k).get<double>(); }
    long long integer(const char* k) const { return cfg.at(k).get<long long>(); }
    std::string text(const char* k) const { return cfg.at(k).get<std::string>(); }
    bool has(const char* k) const { return cfg.contains(k) && !cfg.at(k).is_null(); }
    Vector vec(const char* k) const {
        const auto& a = cfg.at(k);
        Vector v(static_cast<Eigen::Index>(a.size()));
        for (std::size_t i = 0; i < a.size(); ++i) v(static_cast<Eigen::Index>(i)) = a[i].get<double>();
        return v;
    }
    std::map<std::string, double> params() const {
        std::map<std::string, double> p;
        for (auto it = cfg.at("params").begin(); it != cfg.at("params").end(); ++it) p[it.key()] = it.value().get<double>();
        return p;
    }
};

int checked_int(const Resolved& r, const char* k, long long lo, long long hi) {
    const long long v = r.integer(k);
    if (v < lo || v > hi) {
        std::ostringstream os;
        os << "'" << k << "' must lie in [" << lo << ", " << hi << "], got " << v;
        throw ValidationError(os.str());
    }
    return static_cast<int>(v);
}

double positive_real(const Resolved& r, const char* k) {
    const double v = r.real(k);
    if (!(v > 0.0)) throw ValidationError(std::string("'") + k + "' must be positive");
    return v;
}

DerivativeVariant variant_of(const Resolved& r) {
    const std::string mode = r.text("mode");
    if (mode == "analytic") return DerivativeVariant::AnalyticRecursive;
    if (mode == "differenced") return DerivativeVariant::ForwardDifference;
    throw ValidationError("mode must be 'analytic' or 'differenced', got '" + mode + "'");
}

DerivativeMode derivative_mode(const Resolved& r, double eps) {
    if (variant_of(r) == DerivativeVariant::AnalyticRecursive)
        return DerivativeMode::analytic(positive_real(r, "H_over_eps") * eps);
    return DerivativeMode::forward_difference(positive_real(r, "Hhat_over_eps") * eps, positive_real(r, "eta"));
}

FastSlowSystem system_of(const Resolved& r, double eps) { return make_system(r.text("system"), r.params(), eps); }

Vector x0_of(const Resolved& r, const FastSlowSystem& sys) {
    const Vector x0 = r.vec("x0");
    if (x0.size() != sys.n_slow()) throw ValidationError("x0 must have " + std::to_string(sys.n_slow()) + " entries");
    return x0;
}

std::optional<Vector> y0_of(const Resolved& r, const FastSlowSystem& sys) {
    if (!r.has("y0")) return std::nullopt;
    const Vector y0 = r.vec("y0");
    if (y0.size() != sys.n_fast()) throw ValidationError("y0 must have " + std::to_string(sys.n_fast()) + " entries");
    return y0;
}

SeedPolicy seed_policy_of(const Resolved& r) {
    const std::string p = r.text("seed_policy");
    if (p == "user-value") return SeedPolicy::UserValue;
    if (p == "critical-manifold") return SeedPolicy::CriticalManifold;
    throw ValidationError("seed_policy must be 'user-value' or 'critical-manifold', got '" + p + "'");
}

// Fills every default that depends on other keys so the echo is self-contained.
void finalize(Json& cfg) {
    if (cfg.contains("params") && cfg.contains("system") && cfg["system"].is_string()) {
        Json p = Json::object();
        for (const auto& [k, v] : system_defaults(cfg["system"].get<std::string>())) p[k] = v;
        for (auto it = cfg["params"].begin(); it != cfg["params"].end(); ++it) p[it.key()] = it.value();
        cfg["params"] = p;
    }
    if (cfg.contains("seed_policy") && cfg["seed_policy"].is_null())
        cfg["seed_policy"] = cfg["y0"].is_null() ? "critical-manifold" : "user-value";
    if (cfg.contains("tol") && cfg["tol"].is_null() && cfg.contains("eps") && cfg.contains("m")) {
        const double eps = cfg["eps"].get<double>();
        const long long m = cfg["m"].get<long long>();
        if (eps > 0.0 && m >= 0 && m < 400) cfg["tol"] = std::pow(eps, static_cast<double>(m + 1));
    }
    if (cfg.contains("tol0") && cfg["tol0"].is_null()) cfg["tol0"] = cfg["eps"];
}

// --- command bodies -------------------------------------------------------------

struct Result {
    std::string text;
    int code = kOk;
};

int code_for(const IterationTrace& tr) {
    if (tr.converged) return kOk;
    return tr.outcome == Outcome::Diverged ? kDivergence : kNonConvergence;
}

Json trace_json(const IterationTrace& tr) {
    Json j;
    j["converged"] = tr.converged;
    j["outcome"] = to_string(tr.outcome);
    j["iterations"] = tr.iterations_used;
    j["tol"] = tr.tol;
    j["output"] = vector_json(tr.output);
    j["last_residual"] = tr.residuals.empty() ? Json(nullptr) : real_or_null(tr.residuals.back());
    j["error_bound"] = tr.error_bound ? real_or_null(*tr.error_bound) : Json(nullptr);
    return j;
}

std::string trace_csv(const IterationTrace& tr, bool with_dims) {
    std::vector<std::string> header{"iteration", "residual"};
    if (with_dims) header.push_back("subspace_dim");
    for (Eigen::Index i = 0; i < tr.output.size(); ++i) header.push_back("y" + std::to_string(i + 1));
    Csv csv(header);
    for (std::size_t r = 0; r < tr.residuals.size(); ++r) {
        csv.cell(static_cast<int>(r + 1)).cell(tr.residuals[r]);
        if (with_dims) csv.cell(r < tr.subspace_dims.size() ? tr.subspace_dims[r] : 0);
        const Vector& y = tr.iterates[r + 1];
        for (Eigen::Index i = 0; i < y.size(); ++i) csv.cell(y(i));
        csv.end_row();
    }
    return csv.str();
}

IterationConfig iteration_config(const Resolved& r, const FastSlowSystem& sys) {
    IterationConfig cfg;
    cfg.m = checked_int(r, "m", 0, 20);
    cfg.mode = derivative_mode(r, sys.epsilon());
    cfg.tol = r.real("tol");
    cfg.max_iters = checked_int(r, "max_iters", 1, 100000000);
    cfg.seed_policy = seed_policy_of(r);
    cfg.validate(sys);
    return cfg;
}

Vector seed_of(const Resolved& r, const FastSlowSystem& sys, const IterationConfig& cfg) {
    const auto y0 = y0_of(r, sys);
    if (cfg.seed_policy == SeedPolicy::UserValue && !y0) throw ValidationError("seed_policy user-value needs y0");
    return y0 ? *y0 : Vector(Vector::Zero(sys.n_fast()));
}

Result run_project(const Resolved& r, bool rpm) {
    const FastSlowSystem sys = system_of(r, r.real("eps"));
    const Vector x0 = x0_of(r, sys);
    const IterationConfig cfg = iteration_config(r, sys);
    const Vector seed = seed_of(r, sys, cfg);
    IterationTrace tr;
    int code = kOk;
    try {
        if (rpm) {
            RpmConfig rc;
            rc.delta = r.real("delta");
            rc.refresh_every = checked_int(r, "refresh_every", 1, 1000000);
            rc.jacobian_step = r.real("jacobian_step");
            if (r.has("max_dim")) rc.max_dim = checked_int(r, "max_dim", 0, sys.n_fast());
            rc.validate();
            tr = rpm_iterate(sys, cfg, rc, x0, seed);
        } else {
            tr = project(sys, cfg, x0, seed);
        }
        code = code_for(tr);
    } catch (const IterationDivergence& e) {
        tr = e.trace();
        code = kDivergence;
    }
    Result res;
    res.code = code;
    if (r.text("format") == "csv") {
        res.text = trace_csv(tr, rpm);
    } else {
        Json j = trace_json(tr);
        if (rpm) j["subspace_dims"] = tr.subspace_dims;
        res.text = json_text(j);
    }
    return res;
}

Result run_cascade(const Resolved& r) {
    const FastSlowSystem sys = system_of(r, r.real("eps"));
    const Vector x0 = x0_of(r, sys);
    IterationConfig base;
    base.mode = derivative_mode(r, sys.epsilon());
    base.max_iters = checked_int(r, "max_iters", 1, 100000000);
    base.seed_policy = seed_policy_of(r);
    const int m_max = checked_int(r, "m_max", 0, 20);
    const double tol0 = positive_real(r, "tol0");
    base.validate(sys);
    const Vector seed = seed_of(r, sys, base);
    const auto stages = project_cascade(sys, std::nullopt, base, x0, seed, m_max, tol0);

    Result res;
    const IterationTrace& last = stages.back();
    res.code = last.converged ? kOk : (last.outcome == Outcome::Diverged ? kDivergence : kNonConvergence);
    if (r.text("format") == "csv") {
        std::vector<std::string> header{"m", "converged", "iterations", "tol", "last_residual"};
        for (int i = 0; i < sys.n_fast(); ++i) header.push_back("y" + std::to_string(i + 1));
        Csv csv(header);
        for (std::size_t k = 0; k < stages.size(); ++k) {
            const auto& s = stages[k];
            csv.cell(static_cast<int>(k)).cell(s.converged).cell(s.iterations_used).cell(s.tol);
            csv.cell(s.residuals.empty() ? std::nan("") : s.residuals.back());
            for (Eigen::Index i = 0; i < s.output.size(); ++i) csv.cell(s.output(i));
            csv.end_row();
        }
        res.text = csv.str();
    } else {
        Json j;
        j["completed"] = static_cast<int>(stages.size()) == m_max + 1 && last.converged;
        Json arr = Json::array();
        for (std::size_t k = 0; k < stages.size(); ++k) {
            Json s;
            s["m"] = static_cast<int>(k);
            const Json t = trace_json(stages[k]);
            for (auto it = t.begin(); it != t.end(); ++it) s[it.key()] = it.value();
            arr.push_back(s);
        }
        j["stages"] = arr;
        res.text = json_text(j);
    }
    return res;
}

Result run_stability(const Resolved& r) {
    const FastSlowSystem sys = system_of(r, r.real("eps"));
    const Vector x0 = x0_of(r, sys);
    IterationConfig cfg;
    cfg.m = checked_int(r, "m", 0, 20);
    cfg.mode = derivative_mode(r, sys.epsilon());
    cfg.validate(sys);
    const auto spectrum = spectrum_at(sys, x0, y0_of(r, sys));
    const StabilityReport rep = verdict(sys, cfg, spectrum);

    Result res;
    if (r.text("format") == "csv") {
        Csv csv({"lambda_re", "lambda_im", "modulus", "angle", "abs_multiplier", "in_sector", "h_max_over_eps"});
        for (const auto& mr : rep.modes) {
            csv.cell(mr.mode.lambda_re).cell(mr.mode.lambda_im).cell(mr.mode.modulus).cell(mr.mode.angle);
            csv.cell(std::abs(mr.multiplier)).cell(mr.in_sector);
            csv.cell(mr.h_max ? *mr.h_max / sys.epsilon() : std::nan(""));
            csv.end_row();
        }
        res.text = csv.str();
        return res;
    }
    Json j;
    j["m"] = rep.m;
    j["mode"] = to_string(rep.mode);
    j["eta"] = rep.eta;
    j["stable"] = rep.stable;
    j["regime"] = to_string(rep.regime);
    j["uniform_bound"] = real_or_null(rep.uniform_bound);
    j["critical_step"] = rep.critical_step ? real_or_null(*rep.critical_step) : Json(nullptr);
    Json modes = Json::array();
    for (const auto& mr : rep.modes) {
        Json m;
        m["lambda_re"] = mr.mode.lambda_re;
        m["lambda_im"] = mr.mode.lambda_im;
        m["modulus"] = mr.mode.modulus;
        m["angle"] = mr.mode.angle;
        m["multiplier_re"] = mr.multiplier.real();
        m["multiplier_im"] = mr.multiplier.imag();
        m["abs_multiplier"] = std::abs(mr.multiplier);
        m["in_sector"] = mr.in_sector;
        m["h_max_over_eps"] = mr.h_max ? Json(*mr.h_max / sys.epsilon()) : Json(nullptr);
        m["scaled_step"] = mr.scaled_step;
        m["scaled_step_hat"] = mr.scaled_step_hat;
        modes.push_back(m);
    }
    j["modes"] = modes;
    res.text = json_text(j);
    return res;
}

Result run_region(const Resolved& r) {
    RasterSpec spec;
    spec.m = checked_int(r, "m", 0, 20);
    spec.mode = variant_of(r);
    spec.eta = positive_real(r, "eta");
    spec.resolution = checked_int(r, "resolution", 1, 4096);
    spec.theta_min = r.real("theta_min");
    spec.theta_max = r.real("theta_max");
    spec.step_min = r.real("step_min");
    spec.step_max = r.real("step_max");
    const auto cells = raster_region(spec);

    Result res;
    if (r.text("format") == "csv") {
        Csv csv({"theta", "step", "abs_mu", "stable"});
        for (const auto& c : cells) {
            csv.cell(c.theta).cell(c.step).cell(c.abs_mu).cell(c.stable);
            csv.end_row();
        }
        res.text = csv.str();
    } else {
        Json arr = Json::array();
        for (const auto& c : cells) arr.push_back(Json{{"theta", c.theta}, {"step", c.step}, {"abs_mu", real_or_null(c.abs_mu)}, {"stable", c.stable}});
        res.text = json_text(Json{{"cells", arr}});
    }
    return res;
}

Json summary(std::optional<double> slope, std::optional<double> r2, std::optional<double> threshold,
             std::optional<double> mismatch) {
    auto opt = [](std::optional<double> v) { return v ? real_or_null(*v) : Json(nullptr); };
    Json j;
    j["slope"] = opt(slope);
    j["r_squared"] = opt(r2);
    j["threshold"] = opt(threshold);
    j["mismatch"] = opt(mismatch);
    return j;
}

Result run_sweep(const Resolved& r) {
    const std::string kind = r.text("kind");
    const bool csv = r.text("format") == "csv";
    Result res;
    if (kind == "order") {
        SweepSpec spec;
        spec.system_id = r.text("system");
        spec.params = r.params();
        spec.epsilons.clear();
        for (const auto& e : r.cfg.at("epsilons")) spec.epsilons.push_back(e.get<double>());
        spec.m_values = {checked_int(r, "m", 0, 20)};
        spec.x0 = r.vec("x0");
        if (r.has("y0")) spec.seed = r.vec("y0");
        spec.mode = variant_of(r);
        spec.H_over_eps = positive_real(r, "H_over_eps");
        spec.Hhat_over_eps = positive_real(r, "Hhat_over_eps");
        spec.eta = positive_real(r, "eta");
        spec.max_iters = checked_int(r, "max_iters", 1, 100000000);
        const OrderFit fit = order_of_accuracy(spec, spec.m_values.front());
        if (csv) {
            Csv c({"epsilon", "error"});
            for (std::size_t i = 0; i < fit.epsilons.size(); ++i) {
                c.cell(fit.epsilons[i]).cell(fit.errors[i]);
                c.end_row();
            }
            res.text = c.str();
        } else {
            res.text = json_text(summary(fit.skipped ? std::nullopt : std::optional(fit.slope),
                                         fit.skipped ? std::nullopt : std::optional(fit.r_squared), std::nullopt,
                                         std::nullopt));
        }
        return res;
    }
    if (kind == "threshold") {
        const double eps = r.real("eps");
        const FastSlowSystem sys = system_of(r, eps);
        const Vector x0 = x0_of(r, sys);
        IterationConfig cfg;
        cfg.m = checked_int(r, "m", 0, 20);
        const bool analytic = variant_of(r) == DerivativeVariant::AnalyticRecursive;
        cfg.mode = analytic ? DerivativeMode::analytic(eps) : DerivativeMode::forward_difference(eps, positive_real(r, "eta"));
        cfg.tol = positive_real(r, "tol");
        cfg.max_iters = checked_int(r, "max_iters", 1, 100000000);
        Vector seed;
        if (const auto y0 = y0_of(r, sys)) {
            seed = *y0;
        } else {
            seed = critical_point(sys, x0);
            seed.array() += 0.1;
        }
        const double lo = positive_real(r, "lo_over_eps"), hi = positive_real(r, "hi_over_eps");
        const ThresholdResult t = empirical_threshold(sys, cfg, x0, seed, lo * eps, hi * eps);
        if (csv) {
            Csv c({"threshold_over_eps", "lower_over_eps", "upper_over_eps", "evaluations"});
            c.cell(t.threshold / eps).cell(t.lower / eps).cell(t.upper / eps).cell(t.evaluations);
            c.end_row();
            res.text = c.str();
        } else {
            res.text = json_text(summary(std::nullopt, std::nullopt, t.threshold / eps, std::nullopt));
        }
        return res;
    }
    if (kind == "compare") {
        RegionSpec spec;
        spec.epsilon = positive_real(r, "eps");
        spec.theta_min = r.real("theta_min");
        spec.theta_max = r.real("theta_max");
        spec.step_min = r.real("step_min");
        spec.step_max = r.real("step_max");
        spec.iterations = checked_int(r, "iterations", 2, 1000000);
        spec.band = r.real("band");
        const RegionComparison cmp =
            compare_regions(spec, checked_int(r, "m", 0, 20), positive_real(r, "eta"), checked_int(r, "resolution", 1, 4096));
        if (csv) {
            Csv c({"theta", "step", "abs_mu", "stable", "observed", "excluded"});
            for (const auto& cell : cmp.cells) {
                c.cell(cell.theta).cell(cell.step).cell(cell.abs_mu).cell(cell.predicted_stable);
                c.cell(cell.observed_stable).cell(cell.excluded);
                c.end_row();
            }
            res.text = c.str();
        } else {
            res.text = json_text(summary(std::nullopt, std::nullopt, std::nullopt, cmp.mismatch));
        }
        return res;
    }
    throw ValidationError("unknown sweep kind '" + kind + "'");
}

Result dispatch(const Resolved& r) {
    const std::string command = r.text("command");
    const std::string format = r.text("format");
    if (format != "csv" && format != "json") throw ValidationError("format must be 'csv' or 'json'");
    if (command == "project") return run_project(r, false);
    if (command == "rpm") return run_project(r, true);
    if (command == "cascade") return run_cascade(r);
    if (command == "stability") return run_stability(r);
    if (command == "region") return run_region(r);
    return run_sweep(r);
}

Json read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot read config file '" + path + "'");
    Json j;
    try {
        j = Json::parse(in);
    } catch (const Json::parse_error& e) {
        throw ValidationError("config file '" + path + "' is not valid JSON: " + e.what());
    }
    if (!j.is_object()) throw ValidationError("config file must hold a JSON object");
    return j;
}

}  // namespace

std::string format_real(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    static const std::vector<std::string> commands = {"project", "cascade", "rpm", "stability", "region", "sweep"};

    CLI::App app{"Slow-manifold projection by zero-derivative functional iteration", "slowman"};
    app.require_subcommand(0, 1);
    std::vector<CLI::App*> subs;
    static const std::vector<std::string> blurbs = {
        "project x0 onto the slow manifold (zero-derivative iteration)",
        "run orders 0..m_max, each seeded by the previous output",
        "iterate with the recursive projection method",
        "report multipliers and the stability regime at (x0, y0)",
        "raster |mu| over (theta, scaled step)",
        "order, threshold or region-comparison sweep",
    };
    for (std::size_t i = 0; i < commands.size(); ++i)
        subs.push_back(app.add_subcommand(commands[i], blurbs[i])->fallthrough());

    std::string config_path;
    bool verbose = false;
    app.add_option("--config", config_path, "JSON config file (unknown keys are rejected)");
    app.add_flag("--verbose", verbose, "echo the resolved config JSON to stdout");
    std::map<std::string, std::string> raw;
    std::map<std::string, CLI::Option*> opts;
    for (const auto& k : key_table()) opts[k.name] = app.add_option(k.flag, raw[k.name], k.help);
    std::map<std::string, std::string> raw_params;
    std::map<std::string, CLI::Option*> param_opts;
    for (const auto& p : param_flags()) param_opts[p.key] = app.add_option(p.flag, raw_params[p.key], "system parameter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }

    Resolved resolved;
    try {
        Json file;
        if (!config_path.empty()) file = read_config_file(config_path);

        std::string command;
        for (std::size_t i = 0; i < commands.size(); ++i)
            if (subs[i]->parsed()) command = commands[i];
        if (file.contains("command")) {
            if (!file["command"].is_string()) throw ValidationError("key 'command' must be a string");
            const std::string fc = file["command"].get<std::string>();
            if (!command.empty() && fc != command)
                throw ValidationError("config command '" + fc + "' conflicts with subcommand '" + command + "'");
            command = fc;
        }
        if (command.empty()) throw ValidationError("no command given (project, cascade, rpm, stability, region, sweep)");

        std::string kind = "order";
        if (file.contains("kind") && file["kind"].is_string()) kind = file["kind"].get<std::string>();
        if (opts["kind"]->count()) kind = raw["kind"];
        Json cfg = defaults_for(command, kind);

        for (auto it = file.begin(); it != file.end(); ++it) {
            const std::string& key = it.key();
            if (key == "command") continue;
            if (!cfg.contains(key)) {
                if (key != "params" && !find_key(key)) throw ValidationError("unknown config key '" + key + "'");
                throw ValidationError("config key '" + key + "' does not apply to command '" + command + "'");
            }
            cfg[key] = key == "params" ? check_params(it.value()) : check_json_value(*find_key(key), it.value());
        }
        for (const auto& k : key_table()) {
            if (!opts[k.name]->count()) continue;
            if (!cfg.contains(k.name))
                throw ValidationError(std::string("option ") + k.flag + " does not apply to command '" + command + "'");
            cfg[k.name] = from_text(k, raw[k.name]);
        }
        for (const auto& p : param_flags()) {
            if (!param_opts[p.key]->count()) continue;
            if (!cfg.contains("params"))
                throw ValidationError(std::string("option ") + p.flag + " does not apply to command '" + command + "'");
            cfg["params"][p.key] = parse_real(raw_params[p.key], p.key);
        }
        if (cfg.contains("system")) {
            const std::string id = cfg["system"].get<std::string>();
            const auto keys = system_parameter_keys(id);
            for (auto it = cfg["params"].begin(); it != cfg["params"].end(); ++it)
                if (std::find(keys.begin(), keys.end(), it.key()) == keys.end())
                    throw ValidationError("parameter '" + it.key() + "' is not valid for system '" + id + "'");
        }
        finalize(cfg);
        resolved.cfg = cfg;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    }

    if (verbose) out << json_text(resolved.cfg);

    Result result;
    try {
        result = dispatch(resolved);
    } catch (const ValidationError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const PrecisionError& e) {
        err << "error: " << e.what() << "\n";
        return kValidation;
    } catch (const DivergenceError& e) {
        err << "error: divergence: " << e.what() << "\n";
        return kDivergence;
    } catch (const DegeneracyError& e) {
        err << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const NumericalError& e) {
        err << "error: " << e.what() << "\n";
        return kDivergence;
    } catch (const Error& e) {
        err << "error: no convergence: " << e.what() << "\n";
        return kNonConvergence;
    }

    if (resolved.has("output")) {
        const std::string path = resolved.text("output");
        std::ofstream f(path, std::ios::binary);
        if (!f) {
            err << "error: cannot write '" << path << "'\n";
            return kValidation;
        }
        f << result.text;
    } else {
        out << result.text;
    }
    if (result.code == kDivergence) err << "error: iteration diverged\n";
    if (result.code == kNonConvergence) err << "error: no convergence within max_iters\n";
    return result.code;
}

}  // namespace slowman::cli
