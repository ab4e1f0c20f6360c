#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kraichnan/coefficients.hpp"

namespace lab {

using json = nlohmann::ordered_json;

inline constexpr int schema_version = 1;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class Study { decay, smoothing, invariant, annuli, poincare, mc_validate, audit };

inline const std::vector<std::pair<std::string, Study>>& study_names() {
    static const std::vector<std::pair<std::string, Study>> v{
        {"decay", Study::decay},       {"smoothing", Study::smoothing},     {"invariant", Study::invariant}, {"annuli", Study::annuli},
        {"poincare", Study::poincare}, {"mc-validate", Study::mc_validate}, {"audit", Study::audit}};
    return v;
}

inline std::string to_string(Study s) {
    for (const auto& [n, v] : study_names())
        if (v == s) return n;
    return "?";
}

inline std::optional<Study> parse_study(const std::string& s) {
    for (const auto& [n, v] : study_names())
        if (n == s) return v;
    return std::nullopt;
}

struct SiteValue {
    std::vector<int> k;
    double value = 0;
};

struct InitialData {
    std::string type = "mode";  // mode | random_even | table
    std::vector<int> k0;
    double value = 1.0;  // a at +-k0
    int radius = 0;  // random_even; 0 means the lattice radius
    double fill = 1.0;
    std::vector<SiteValue> entries;
};

struct Weight {
    double beta = 0.5, m = 2;
};

struct AxisMoment {
    int axis = 0, power = 2;
};

struct Params {
    // decay, smoothing
    std::vector<double> t_grid;
    std::optional<std::pair<double, double>> fit_window;
    double t_final = 1.0;
    std::vector<Weight> weights;
    std::vector<AxisMoment> axis_moments;
    double tol = 1e-10;
    std::string path = "auto";     // auto | uniformization | krylov
    std::string backend = "auto";  // auto | csr | fft
    // invariant, annuli
    double solve_tol = 1e-12;
    int max_iter = 200000;
    std::vector<double> r_list;
    double C = 2.0;
    std::optional<double> m_log;
    double r0_annuli = 1.0;
    std::vector<double> slope_scales;
    double slope_width = 2.0;
    // poincare, audit
    double r0 = 4.0;
    std::vector<double> K_grid{1.0, 1.25, 1.5, 2.0};
    std::vector<double> p_list{1.1, 1.5, 2.0};
    std::optional<double> R;
    int cases = 1000;
    int field_radius = 0;  // 0 means N - J
    int max_support = 20;
    int angles = 4096;
    int directions = 10000;
    // mc-validate
    double dt = 0;
    std::size_t samples = 10000;
    double threshold_se = 4.0;
    double required_fraction = 0.99;
    double basis_rotation = 0.0;
};

struct RunConfig {
    Study study = Study::decay;
    kraichnan::ModelSpec model;
    int N = 0;
    std::vector<double> kappa;
    InitialData initial;
    Params params;
    std::string out_dir = "kraichnan-out";
    std::string format = "csv";  // csv | binary
    std::uint64_t seed = 0;
};

namespace detail {

class Reader {
public:
    Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail("must be an object");
    }

    void allow(std::initializer_list<const char*> keys) {
        std::set<std::string> ok(keys.begin(), keys.end());
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!ok.count(it.key())) throw ConfigError(path_ + "." + it.key() + ": unknown key");
    }

    bool has(const char* k) const { return j_.contains(k) && !j_.at(k).is_null(); }
    const json& at(const char* k) const {
        if (!has(k)) throw ConfigError(path_ + "." + k + ": required");
        return j_.at(k);
    }
    std::string sub(const char* k) const { return path_ + "." + k; }

    double number(const char* k, std::optional<double> def = std::nullopt) const {
        if (!has(k)) {
            if (def) return *def;
            at(k);
        }
        const auto& v = j_.at(k);
        if (!v.is_number()) throw ConfigError(sub(k) + ": expected a number");
        return v.get<double>();
    }
    long long integer(const char* k, std::optional<long long> def = std::nullopt) const {
        if (!has(k)) {
            if (def) return *def;
            at(k);
        }
        const auto& v = j_.at(k);
        if (!v.is_number_integer()) throw ConfigError(sub(k) + ": expected an integer");
        return v.get<long long>();
    }
    std::string string(const char* k, std::optional<std::string> def = std::nullopt) const {
        if (!has(k)) {
            if (def) return *def;
            at(k);
        }
        const auto& v = j_.at(k);
        if (!v.is_string()) throw ConfigError(sub(k) + ": expected a string");
        return v.get<std::string>();
    }
    bool boolean(const char* k, bool def) const {
        if (!has(k)) return def;
        const auto& v = j_.at(k);
        if (!v.is_boolean()) throw ConfigError(sub(k) + ": expected true or false");
        return v.get<bool>();
    }
    std::vector<double> numbers(const char* k) const {
        const auto& v = at(k);
        if (!v.is_array()) throw ConfigError(sub(k) + ": expected an array of numbers");
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number()) throw ConfigError(sub(k) + ": expected an array of numbers");
            out.push_back(x.get<double>());
        }
        return out;
    }
    [[noreturn]] void fail(const std::string& msg) const { throw ConfigError(path_ + ": " + msg); }

private:
    const json& j_;
    std::string path_;
};

inline std::vector<int> int_vector(const json& v, const std::string& path) {
    if (!v.is_array()) throw ConfigError(path + ": expected an array of integers");
    std::vector<int> out;
    for (const auto& x : v) {
        if (!x.is_number_integer()) throw ConfigError(path + ": expected an array of integers");
        out.push_back(x.get<int>());
    }
    return out;
}

inline void require(bool ok, const std::string& path, const std::string& msg) {
    if (!ok) throw ConfigError(path + ": " + msg);
}

inline void increasing(const std::vector<double>& v, const std::string& path, bool strict = true) {
    for (std::size_t i = 1; i < v.size(); ++i)
        require(strict ? v[i] > v[i - 1] : v[i] >= v[i - 1], path, "must be increasing");
}

inline bool in_ball(const std::vector<int>& k, int d, int N) {
    if (int(k.size()) != d) return false;
    long long n2 = 0;
    for (int v : k) n2 += 1LL * v * v;
    return n2 > 0 && n2 <= 1LL * N * N;
}

}  // namespace detail

inline RunConfig parse_config(const json& root, Study study) {
    using detail::require;
    detail::Reader top(root, "$");
    top.allow({"schema_version", "study", "model", "lattice", "kappa", "initial", "params", "output", "seed"});
    RunConfig c;
    c.study = study;
    require(top.integer("schema_version", schema_version) == schema_version, "$.schema_version",
            "unsupported version (this build reads " + std::to_string(schema_version) + ")");
    if (top.has("study")) {
        const auto s = top.string("study");
        require(parse_study(s).has_value(), "$.study", "unknown study '" + s + "'");
        require(*parse_study(s) == study, "$.study", "config is for study '" + s + "', not '" + to_string(study) + "'");
    }

    {
        detail::Reader m(top.at("model"), "$.model");
        m.allow({"d", "alpha", "family", "J", "J_Z", "normalization", "literal_plane_support", "custom_table"});
        auto& s = c.model;
        s.d = int(m.integer("d", 2));
        require(s.d >= 2 && s.d <= 4, "$.model.d", "must be 2, 3 or 4");
        s.alpha = m.number("alpha");
        require(s.alpha > 0 && s.alpha < 1, "$.model.alpha", "must lie in (0,1)");
        const auto fam = m.string("family");
        if (fam == "isotropic")
            s.family = kraichnan::Family::isotropic;
        else if (fam == "shear")
            s.family = kraichnan::Family::shear;
        else if (fam == "custom")
            s.family = kraichnan::Family::custom;
        else
            m.fail("family must be isotropic, shear or custom");
        if (s.family == kraichnan::Family::custom) {
            const auto& t = m.at("custom_table");
            require(t.is_array(), "$.model.custom_table", "expected an array");
            int reach = 1;
            for (std::size_t i = 0; i < t.size(); ++i) {
                const std::string p = "$.model.custom_table[" + std::to_string(i) + "]";
                detail::Reader e(t[i], p);
                e.allow({"j", "w"});
                kraichnan::CustomMode cm;
                cm.j = detail::int_vector(e.at("j"), p + ".j");
                cm.w = e.number("w");
                require(int(cm.j.size()) == s.d, p + ".j", "length must equal d");
                long long n2 = 0;
                for (int v : cm.j) n2 += 1LL * v * v;
                require(n2 > 0, p + ".j", "must be nonzero");
                reach = std::max(reach, int(std::ceil(std::sqrt(double(n2)) - 1e-12)));
                s.custom_table.push_back(cm);
            }
            s.J = int(m.integer("J", reach));
        } else {
            require(!m.has("custom_table"), "$.model.custom_table", "only allowed for the custom family");
            s.J = int(m.integer("J"));
        }
        require(s.J >= 1, "$.model.J", "must be >= 1");
        s.J_Z = int(m.integer("J_Z", s.J));
        require(s.J_Z >= s.J, "$.model.J_Z", "must be >= J");
        const auto norm = m.string("normalization", "untruncated");
        require(norm == "untruncated" || norm == "truncated", "$.model.normalization", "must be untruncated or truncated");
        s.normalization = norm == "truncated" ? kraichnan::Normalization::truncated : kraichnan::Normalization::untruncated;
        s.literal_plane_support = m.boolean("literal_plane_support", false);
    }

    const bool needs_lattice = study != Study::audit;
    if (needs_lattice) {
        detail::Reader l(top.at("lattice"), "$.lattice");
        l.allow({"N"});
        c.N = int(l.integer("N"));
        require(c.N >= 1 && c.N <= 4096, "$.lattice.N", "must lie in [1, 4096]");
        require(c.model.J <= 2 * c.N, "$.model.J", "noise reach J must not exceed 2N");
    } else if (top.has("lattice")) {
        detail::Reader l(top.at("lattice"), "$.lattice");
        l.allow({"N"});
        c.N = int(l.integer("N"));
    }

    const bool needs_kappa = study != Study::audit && study != Study::poincare;
    if (top.has("kappa")) {
        const auto& k = root.at("kappa");
        if (k.is_number())
            c.kappa = {k.get<double>()};
        else
            c.kappa = top.numbers("kappa");
        for (double v : c.kappa) require(v >= 0 && std::isfinite(v), "$.kappa", "values must be finite and >= 0");
    }
    if (needs_kappa) require(!c.kappa.empty(), "$.kappa", "required");
    if (study == Study::invariant || study == Study::annuli)
        for (double v : c.kappa) require(v > 0, "$.kappa", "stationary studies need kappa > 0");

    const bool needs_initial = needs_kappa;
    if (needs_initial) {
        detail::Reader in(top.at("initial"), "$.initial");
        in.allow({"type", "k0", "value", "radius", "fill", "entries"});
        auto& I = c.initial;
        I.type = in.string("type");
        if (I.type == "mode") {
            I.k0 = detail::int_vector(in.at("k0"), "$.initial.k0");
            require(detail::in_ball(I.k0, c.model.d, c.N), "$.initial.k0", "must be a nonzero site of the lattice");
            I.value = in.number("value", 1.0);
            require(I.value > 0 && std::isfinite(I.value), "$.initial.value", "must be finite and > 0");
        } else if (I.type == "random_even") {
            I.radius = int(in.integer("radius", c.N));
            require(I.radius >= 1 && I.radius <= c.N, "$.initial.radius", "must lie in [1, N]");
            I.fill = in.number("fill", 1.0);
            require(I.fill > 0 && I.fill <= 1, "$.initial.fill", "must lie in (0,1]");
        } else if (I.type == "table") {
            const auto& t = in.at("entries");
            require(t.is_array() && !t.empty(), "$.initial.entries", "expected a nonempty array");
            for (std::size_t i = 0; i < t.size(); ++i) {
                const std::string p = "$.initial.entries[" + std::to_string(i) + "]";
                detail::Reader e(t[i], p);
                e.allow({"k", "value"});
                SiteValue sv;
                sv.k = detail::int_vector(e.at("k"), p + ".k");
                require(detail::in_ball(sv.k, c.model.d, c.N), p + ".k", "must be a nonzero site of the lattice");
                sv.value = e.number("value");
                require(sv.value >= 0 && std::isfinite(sv.value), p + ".value", "must be finite and >= 0");
                I.entries.push_back(sv);
            }
        } else {
            in.fail("type must be mode, random_even or table");
        }
    }

    {
        static const json empty = json::object();
        detail::Reader p(top.has("params") ? root.at("params") : empty, "$.params");
        auto& P = c.params;
        auto path_opts = [&] {
            P.tol = p.number("tol", 1e-10);
            require(P.tol > 0 && P.tol < 1, "$.params.tol", "must lie in (0,1)");
            P.path = p.string("path", "auto");
            require(P.path == "auto" || P.path == "uniformization" || P.path == "krylov", "$.params.path",
                    "must be auto, uniformization or krylov");
            P.backend = p.string("backend", "auto");
            require(P.backend == "auto" || P.backend == "csr" || P.backend == "fft", "$.params.backend", "must be auto, csr or fft");
        };
        auto solve_opts = [&] {
            P.solve_tol = p.number("solve_tol", 1e-12);
            require(P.solve_tol > 0 && P.solve_tol < 1, "$.params.solve_tol", "must lie in (0,1)");
            P.max_iter = int(p.integer("max_iter", 200000));
            require(P.max_iter >= 1, "$.params.max_iter", "must be >= 1");
            P.backend = p.string("backend", "auto");
            require(P.backend == "auto" || P.backend == "csr" || P.backend == "fft", "$.params.backend", "must be auto, csr or fft");
        };
        auto audit_opts = [&] {
            P.r0 = p.number("r0", 4.0);
            require(P.r0 >= 4 && P.r0 <= c.model.J, "$.params.r0", "must lie in [4, J]");
            if (p.has("K_grid")) P.K_grid = p.numbers("K_grid");
            require(!P.K_grid.empty(), "$.params.K_grid", "must be nonempty");
            for (double K : P.K_grid) require(K >= 1, "$.params.K_grid", "values must be >= 1");
            detail::increasing(P.K_grid, "$.params.K_grid");
            P.angles = int(p.integer("angles", 4096));
            require(P.angles >= 16, "$.params.angles", "must be >= 16");
            P.directions = int(p.integer("directions", 10000));
            require(P.directions >= 16, "$.params.directions", "must be >= 16");
        };
        switch (study) {
            case Study::decay: {
                p.allow({"t_grid", "fit_window", "tol", "path", "backend"});
                P.t_grid = p.numbers("t_grid");
                require(!P.t_grid.empty(), "$.params.t_grid", "must be nonempty");
                require(P.t_grid[0] >= 0, "$.params.t_grid", "times must be >= 0");
                detail::increasing(P.t_grid, "$.params.t_grid");
                if (p.has("fit_window")) {
                    auto w = p.numbers("fit_window");
                    require(w.size() == 2 && w[0] < w[1], "$.params.fit_window", "expected [t0, t1] with t0 < t1");
                    std::size_t inside = 0;
                    for (double t : P.t_grid) inside += (t >= w[0] && t <= w[1]);
                    require(inside >= 5, "$.params.fit_window", "needs at least 5 grid times inside");
                    P.fit_window = std::pair{w[0], w[1]};
                }
                path_opts();
                break;
            }
            case Study::smoothing: {
                p.allow({"t_final", "weights", "axis_moments", "tol", "path", "backend"});
                P.t_final = p.number("t_final", 1.0);
                require(P.t_final > 0, "$.params.t_final", "must be > 0");
                if (p.has("weights")) {
                    const auto& ws = p.at("weights");
                    require(ws.is_array(), "$.params.weights", "expected an array");
                    for (std::size_t i = 0; i < ws.size(); ++i) {
                        const std::string q = "$.params.weights[" + std::to_string(i) + "]";
                        detail::Reader e(ws[i], q);
                        e.allow({"beta", "m"});
                        Weight w{e.number("beta"), e.number("m")};
                        require(w.beta >= 0 && w.beta <= 1, q + ".beta", "must lie in [0,1]");
                        require(w.m >= 0, q + ".m", "must be >= 0");
                        P.weights.push_back(w);
                    }
                } else {
                    P.weights = {{1 - c.model.alpha, 2}, {1 - c.model.alpha, 3}};
                }
                if (p.has("axis_moments")) {
                    const auto& as = p.at("axis_moments");
                    require(as.is_array(), "$.params.axis_moments", "expected an array");
                    for (std::size_t i = 0; i < as.size(); ++i) {
                        const std::string q = "$.params.axis_moments[" + std::to_string(i) + "]";
                        detail::Reader e(as[i], q);
                        e.allow({"axis", "power"});
                        AxisMoment a{int(e.integer("axis")), int(e.integer("power", 2))};
                        require(a.axis >= 0 && a.axis < c.model.d, q + ".axis", "must lie in [0, d)");
                        require(a.power >= 0, q + ".power", "must be >= 0");
                        P.axis_moments.push_back(a);
                    }
                }
                path_opts();
                break;
            }
            case Study::invariant:
                p.allow({"solve_tol", "max_iter", "backend"});
                solve_opts();
                break;
            case Study::annuli: {
                p.allow({"solve_tol", "max_iter", "backend", "r_list", "C", "m", "r0", "slope_scales", "slope_width"});
                solve_opts();
                P.r_list = p.numbers("r_list");
                require(!P.r_list.empty(), "$.params.r_list", "must be nonempty");
                for (double r : P.r_list) require(r > 0 && r < 1, "$.params.r_list", "values must lie in (0,1)");
                P.C = p.number("C", 2.0);
                require(P.C >= 1, "$.params.C", "must be >= 1");
                if (p.has("m")) {
                    P.m_log = p.number("m");
                    require(*P.m_log >= 0, "$.params.m", "must be >= 0");
                }
                P.r0_annuli = p.number("r0", 1.0);
                require(P.r0_annuli > 0 && P.r0_annuli <= 1, "$.params.r0", "must lie in (0,1]");
                if (p.has("slope_scales")) {
                    P.slope_scales = p.numbers("slope_scales");
                    require(P.slope_scales.size() >= 2, "$.params.slope_scales", "needs at least two scales");
                    detail::increasing(P.slope_scales, "$.params.slope_scales");
                    for (double k : P.slope_scales) require(k > 0, "$.params.slope_scales", "values must be > 0");
                }
                P.slope_width = p.number("slope_width", 2.0);
                require(P.slope_width > 1, "$.params.slope_width", "must be > 1");
                break;
            }
            case Study::poincare: {
                p.allow({"r0", "K_grid", "angles", "directions", "p_list", "R", "cases", "field_radius", "max_support"});
                audit_opts();
                if (p.has("p_list")) P.p_list = p.numbers("p_list");
                require(!P.p_list.empty(), "$.params.p_list", "must be nonempty");
                for (double q : P.p_list) require(q > 1 && q <= 2, "$.params.p_list", "values must lie in (1,2]");
                if (p.has("R")) {
                    P.R = p.number("R");
                    require(*P.R >= P.r0, "$.params.R", "must be >= r0");
                }
                P.cases = int(p.integer("cases", 1000));
                require(P.cases >= 1, "$.params.cases", "must be >= 1");
                P.field_radius = int(p.integer("field_radius", c.N - c.model.J));
                require(P.field_radius >= 1 && P.field_radius <= c.N - c.model.J, "$.params.field_radius",
                        "must lie in [1, N - J] (fields must stay J away from the truncation)");
                P.max_support = int(p.integer("max_support", 20));
                require(P.max_support >= 1, "$.params.max_support", "must be >= 1");
                break;
            }
            case Study::mc_validate: {
                p.allow({"dt", "t_grid", "samples", "threshold_se", "required_fraction", "basis_rotation", "tol"});
                P.dt = p.number("dt");
                require(P.dt > 0, "$.params.dt", "must be > 0");
                P.t_grid = p.numbers("t_grid");
                require(!P.t_grid.empty(), "$.params.t_grid", "must be nonempty");
                detail::increasing(P.t_grid, "$.params.t_grid");
                for (double t : P.t_grid) {
                    const double s = std::round(t / P.dt);
                    require(t > 0 && std::abs(s * P.dt - t) <= 1e-9 * std::max(1.0, t), "$.params.t_grid",
                            "times must be positive multiples of dt");
                }
                const auto n = p.integer("samples", 10000);
                require(n >= 2, "$.params.samples", "must be >= 2 (standard errors need two samples)");
                P.samples = std::size_t(n);
                P.threshold_se = p.number("threshold_se", 4.0);
                require(P.threshold_se > 0, "$.params.threshold_se", "must be > 0");
                P.required_fraction = p.number("required_fraction", 0.99);
                require(P.required_fraction > 0 && P.required_fraction <= 1, "$.params.required_fraction", "must lie in (0,1]");
                P.basis_rotation = p.number("basis_rotation", 0.0);
                P.tol = p.number("tol", 1e-12);
                require(P.tol > 0 && P.tol < 1, "$.params.tol", "must lie in (0,1)");
                break;
            }
            case Study::audit:
                p.allow({"r0", "K_grid", "angles", "directions"});
                audit_opts();
                break;
        }
    }

    if (top.has("output")) {
        detail::Reader o(root.at("output"), "$.output");
        o.allow({"directory", "format"});
        c.out_dir = o.string("directory", c.out_dir);
        c.format = o.string("format", "csv");
        require(c.format == "csv" || c.format == "binary", "$.output.format", "must be csv or binary");
        require(c.format == "csv" || study == Study::decay, "$.output.format", "binary output exists only for decay trajectories");
    }

    if (top.has("seed")) {
        const auto& s = root.at("seed");
        require(s.is_number_unsigned() || (s.is_number_integer() && s.get<long long>() >= 0), "$.seed", "must be an unsigned 64-bit integer");
        c.seed = s.get<std::uint64_t>();
    }
    return c;
}

// fully resolved config, defaults filled in; output directory omitted so reruns elsewhere echo the same manifest
inline json resolved(const RunConfig& c) {
    json j;
    j["schema_version"] = schema_version;
    j["study"] = to_string(c.study);
    json m;
    m["d"] = c.model.d;
    m["alpha"] = c.model.alpha;
    m["family"] = c.model.family == kraichnan::Family::isotropic ? "isotropic"
                  : c.model.family == kraichnan::Family::shear  ? "shear"
                                                                 : "custom";
    m["J"] = c.model.J;
    m["J_Z"] = c.model.J_Z;
    m["normalization"] = c.model.normalization == kraichnan::Normalization::truncated ? "truncated" : "untruncated";
    m["literal_plane_support"] = c.model.literal_plane_support;
    if (c.model.family == kraichnan::Family::custom) {
        json t = json::array();
        for (const auto& e : c.model.custom_table) t.push_back({{"j", e.j}, {"w", e.w}});
        m["custom_table"] = t;
    }
    j["model"] = m;
    if (c.N > 0) j["lattice"] = {{"N", c.N}};
    if (!c.kappa.empty()) j["kappa"] = c.kappa;
    const bool has_initial = c.study != Study::audit && c.study != Study::poincare;
    if (has_initial) {
        const auto& I = c.initial;
        json in{{"type", I.type}};
        if (I.type == "mode") {
            in["k0"] = I.k0;
            in["value"] = I.value;
        } else if (I.type == "random_even") {
            in["radius"] = I.radius;
            in["fill"] = I.fill;
        } else {
            json e = json::array();
            for (const auto& s : I.entries) e.push_back({{"k", s.k}, {"value", s.value}});
            in["entries"] = e;
        }
        j["initial"] = in;
    }
    const auto& P = c.params;
    json p = json::object();
    switch (c.study) {
        case Study::decay:
            p["t_grid"] = P.t_grid;
            if (P.fit_window) p["fit_window"] = {P.fit_window->first, P.fit_window->second};
            p["tol"] = P.tol, p["path"] = P.path, p["backend"] = P.backend;
            break;
        case Study::smoothing: {
            p["t_final"] = P.t_final;
            json w = json::array(), a = json::array();
            for (const auto& x : P.weights) w.push_back({{"beta", x.beta}, {"m", x.m}});
            for (const auto& x : P.axis_moments) a.push_back({{"axis", x.axis}, {"power", x.power}});
            p["weights"] = w, p["axis_moments"] = a;
            p["tol"] = P.tol, p["path"] = P.path, p["backend"] = P.backend;
            break;
        }
        case Study::invariant:
            p["solve_tol"] = P.solve_tol, p["max_iter"] = P.max_iter, p["backend"] = P.backend;
            break;
        case Study::annuli:
            p["solve_tol"] = P.solve_tol, p["max_iter"] = P.max_iter, p["backend"] = P.backend;
            p["r_list"] = P.r_list, p["C"] = P.C;
            if (P.m_log) p["m"] = *P.m_log;
            p["r0"] = P.r0_annuli;
            if (!P.slope_scales.empty()) p["slope_scales"] = P.slope_scales;
            p["slope_width"] = P.slope_width;
            break;
        case Study::poincare:
            p["r0"] = P.r0, p["K_grid"] = P.K_grid, p["angles"] = P.angles, p["directions"] = P.directions;
            p["p_list"] = P.p_list;
            if (P.R) p["R"] = *P.R;
            p["cases"] = P.cases, p["field_radius"] = P.field_radius, p["max_support"] = P.max_support;
            break;
        case Study::mc_validate:
            p["dt"] = P.dt, p["t_grid"] = P.t_grid, p["samples"] = P.samples, p["threshold_se"] = P.threshold_se;
            p["required_fraction"] = P.required_fraction, p["basis_rotation"] = P.basis_rotation, p["tol"] = P.tol;
            break;
        case Study::audit:
            p["r0"] = P.r0, p["K_grid"] = P.K_grid, p["angles"] = P.angles, p["directions"] = P.directions;
            break;
    }
    j["params"] = p;
    j["output"] = {{"format", c.format}};
    j["seed"] = c.seed;
    return j;
}

}  // namespace lab
