#pragma once

#include <bit>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "config.hpp"
#include "kraichnan/coefficients.hpp"
#include "kraichnan/errors.hpp"
#include "kraichnan/generator.hpp"
#include "kraichnan/integrate.hpp"
#include "kraichnan/lattice.hpp"
#include "kraichnan/montecarlo.hpp"
#include "kraichnan/philox.hpp"
#include "kraichnan/poincare.hpp"
#include "kraichnan/spectra.hpp"
#include "kraichnan/summation.hpp"

namespace lab {

namespace fs = std::filesystem;

// a guaranteed inequality or validation failed; the payload goes into the manifest
class CertificateFailure : public std::runtime_error {
public:
    CertificateFailure(const std::string& msg, json detail) : std::runtime_error(msg), detail(std::move(detail)) {}
    json detail;
};

class Outputs {
public:
    explicit Outputs(fs::path dir) : dir_(std::move(dir)) {}

    const fs::path& dir() const { return dir_; }

    void text(const std::string& name, const std::string& body) {
        std::ofstream f(open(name), std::ios::binary);
        f << body;
        finish(f, name);
    }
    void json_file(const std::string& name, const json& j) { text(name, j.dump(2) + "\n"); }
    void binary(const std::string& name, const std::vector<char>& body) {
        std::ofstream f(open(name), std::ios::binary);
        f.write(body.data(), std::streamsize(body.size()));
        finish(f, name);
    }

    // files written so far, in order
    const std::vector<std::string>& files() const { return files_; }

    void remove_all() {
        std::error_code ec;
        for (const auto& f : files_) fs::remove(dir_ / f, ec);
        files_.clear();
    }

    json listing() const {
        json out = json::array();
        for (const auto& f : files_) out.push_back({{"file", f}, {"bytes", fs::file_size(dir_ / f)}});
        return out;
    }

private:
    fs::path open(const std::string& name) {
        files_.push_back(name);
        return dir_ / name;
    }
    void finish(std::ofstream& f, const std::string& name) {
        f.close();
        if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
    }

    fs::path dir_;
    std::vector<std::string> files_;
};

struct Context {
    const RunConfig& cfg;
    unsigned threads = 1;
    Outputs& out;
};

inline std::string num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

namespace detail {

inline json coefficients_summary(const kraichnan::NoiseCoefficients& c) {
    return {{"modes", c.size()},           {"Z", c.Z},
            {"z_sq", c.z_sq},              {"z_sq_lattice", c.z_sq_lattice},
            {"tail_lo", c.tail_lo},        {"tail_hi", c.tail_hi},
            {"regularity_sum", c.regularity_sum}, {"deficit", c.deficit},
            {"deficit_lo", c.deficit_lo}};
}

inline json audit_json(const kraichnan::AssumptionAudit& a) {
    json pareto = json::array(), psi = json::array();
    for (const auto& p : a.pareto) pareto.push_back({{"beta", p.beta}, {"delta", p.delta}});
    for (const auto& [K, v] : a.psi) psi.push_back({{"K", K}, {"psi", v}});
    return {{"ok", a.ok},
            {"message", a.message},
            {"r0", a.r0},
            {"J", a.J},
            {"alpha", a.alpha},
            {"beta", a.beta},
            {"delta_S", a.delta_S},
            {"nondegeneracy_ratio", a.nondegeneracy_ratio},
            {"delta", a.delta},
            {"pareto", pareto},
            {"psi", psi},
            {"psi_unavailable", a.psi_unavailable},
            {"psi_power_prefactor", a.psi_power_prefactor},
            {"witness_v", a.witness_v},
            {"witness_r", a.witness_r},
            {"deficit", a.deficit},
            {"seed", a.seed}};
}

inline kraichnan::AssembleOptions assemble_options(const Context& ctx) {
    kraichnan::AssembleOptions o;
    o.threads = ctx.threads;
    const auto& b = ctx.cfg.params.backend;
    if (b == "csr") o.backend = kraichnan::Backend::csr;
    if (b == "fft") o.backend = kraichnan::Backend::fft;
    return o;
}

inline kraichnan::IntegrateOptions integrate_options(const Params& p) {
    kraichnan::IntegrateOptions o;
    o.tol = p.tol;
    if (p.path == "uniformization") o.path = kraichnan::IntegrationPath::uniformization;
    if (p.path == "krylov") o.path = kraichnan::IntegrationPath::krylov;
    return o;
}

inline double uniform01(std::uint32_t x) { return (double(x) + 0.5) * 0x1p-32; }

inline kraichnan::Philox4x32::Key key_of(std::uint64_t seed) { return {std::uint32_t(seed), std::uint32_t(seed >> 32)}; }

// even nonnegative field a_k = a_{-k}
inline std::vector<double> initial_field(const RunConfig& cfg, const kraichnan::Lattice& L) {
    std::vector<double> a(L.size(), 0.0);
    const auto& I = cfg.initial;
    auto set = [&](const std::vector<int>& k, double v, const std::string& where) {
        const auto i = L.find(k);
        if (i < 0) throw ConfigError(where + ": site outside the lattice");
        const auto n = L.neg(std::size_t(i));
        for (auto s : {std::size_t(i), n}) {
            if (a[s] != 0 && a[s] != v) throw ConfigError(where + ": conflicting values for a site and its negative");
            a[s] = v;
        }
    };
    if (I.type == "mode") {
        set(I.k0, I.value, "$.initial.k0");
    } else if (I.type == "table") {
        for (std::size_t e = 0; e < I.entries.size(); ++e)
            set(I.entries[e].k, I.entries[e].value, "$.initial.entries[" + std::to_string(e) + "]");
    } else {
        const auto key = key_of(cfg.seed);
        std::uint32_t rep = 0;
        for (std::size_t k = 0; k < L.size(); ++k) {
            auto ks = L.site(k);
            if (!kraichnan::detail::lex_positive(ks)) continue;
            const auto r = kraichnan::Philox4x32::generate({rep++, 0, 0x696e6974u, 0}, key);
            if (L.norm(k) > I.radius) continue;
            if (uniform01(r[0]) >= I.fill) continue;
            a[k] = a[L.neg(k)] = uniform01(r[1]);
        }
    }
    return a;
}

inline double total(const std::vector<double>& a) { return kraichnan::compensated_sum(a.size(), [&](std::size_t i) { return a[i]; }); }

inline std::string site_header(int d) {
    std::string h;
    for (int i = 0; i < d; ++i) h += ",k" + std::to_string(i);
    return h;
}

inline void site_columns(std::string& s, const kraichnan::Lattice& L, std::size_t k) {
    for (int v : L.site(k)) s += "," + std::to_string(v);
}

}  // namespace detail

inline kraichnan::NoiseCoefficients coefficients(const RunConfig& cfg) { return kraichnan::build(cfg.model); }

inline json run_decay(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& P = cfg.params;
    auto c = coefficients(cfg);
    auto L = std::make_shared<const kraichnan::Lattice>(cfg.model.d, cfg.N);
    const auto a0 = detail::initial_field(cfg, *L);
    const double m0 = detail::total(a0);
    double k2 = 0;
    for (std::size_t k = 0; k < L->size(); ++k) k2 += double(L->norm2(k)) * a0[k];

    json runs = json::array();
    std::vector<kraichnan::Trajectory> trajs;
    for (double kappa : cfg.kappa) {
        auto g = kraichnan::assemble(c, L, kappa, detail::assemble_options(ctx));
        auto tr = kraichnan::integrate(g, a0, P.t_grid, detail::integrate_options(P));
        json r;
        r["kappa"] = kappa;
        r["backend"] = kraichnan::to_string(g.backend());
        r["path"] = kraichnan::to_string(tr.path);
        r["matvecs"] = tr.matvecs;
        r["error_bound"] = tr.error_bound;
        r["max_rate"] = g.max_rate();
        std::vector<double> l1;
        for (const auto& v : tr.values) l1.push_back(detail::total(v));
        r["times"] = tr.times;
        r["l1"] = l1;
        r["outflow"] = tr.outflow;
        r["heat"] = tr.heat;
        // l1 decay rate of pure diffusion acting on the same data
        r["heat_rate"] = m0 > 0 ? 8.0 * std::numbers::pi * std::numbers::pi * kappa * k2 / m0 : 0.0;
        if (P.fit_window) {
            std::vector<double> t, v;
            for (std::size_t i = 0; i < tr.times.size(); ++i)
                if (tr.times[i] >= P.fit_window->first && tr.times[i] <= P.fit_window->second) t.push_back(tr.times[i]), v.push_back(l1[i]);
            json fit{{"window", {P.fit_window->first, P.fit_window->second}}};
            try {
                auto f = kraichnan::fit_decay_rate(t, v);
                fit["rate"] = f.rate, fit["prefactor"] = f.prefactor, fit["residual"] = f.residual;
            } catch (const std::invalid_argument& e) {
                fit["rate"] = nullptr, fit["error"] = e.what();
            }
            r["fit"] = fit;
        }
        runs.push_back(r);
        trajs.push_back(std::move(tr));
    }

    const int d = cfg.model.d;
    if (cfg.format == "binary") {
        // KRL1: little-endian header, site coordinates, kappas, times, then a[kappa][time][site]
        static_assert(std::endian::native == std::endian::little, "KRL1 writer assumes a little-endian host");
        std::vector<char> buf;
        auto put = [&](const auto& v) {
            const char* p = reinterpret_cast<const char*>(&v);
            buf.insert(buf.end(), p, p + sizeof v);
        };
        buf.insert(buf.end(), {'K', 'R', 'L', '1'});
        put(std::uint32_t(1));
        put(std::uint32_t(d));
        put(std::uint64_t(L->size()));
        put(std::uint64_t(cfg.kappa.size()));
        put(std::uint64_t(P.t_grid.size()));
        for (std::size_t k = 0; k < L->size(); ++k)
            for (int v : L->site(k)) put(std::int32_t(v));
        for (double kp : cfg.kappa) put(kp);
        for (double t : P.t_grid) put(t);
        for (const auto& tr : trajs)
            for (const auto& v : tr.values)
                for (double x : v) put(x);
        ctx.out.binary("trajectory.krl", buf);
    } else {
        std::string s = "kappa,t,id" + detail::site_header(d) + ",a\n";
        for (std::size_t i = 0; i < trajs.size(); ++i)
            for (std::size_t ti = 0; ti < trajs[i].times.size(); ++ti)
                for (std::size_t k = 0; k < L->size(); ++k) {
                    s += num(cfg.kappa[i]) + "," + num(trajs[i].times[ti]) + "," + std::to_string(k);
                    detail::site_columns(s, *L, k);
                    s += "," + num(trajs[i].values[ti][k]) + "\n";
                }
        ctx.out.text("trajectory.csv", s);
    }
    json summary{{"study", "decay"}, {"sites", L->size()}, {"initial_mass", m0}, {"coefficients", detail::coefficients_summary(c)},
                 {"runs", runs}};
    ctx.out.json_file("decay.json", summary);
    return summary;
}

inline json run_smoothing(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& P = cfg.params;
    auto c = coefficients(cfg);
    auto L = std::make_shared<const kraichnan::Lattice>(cfg.model.d, cfg.N);
    const auto a0 = detail::initial_field(cfg, *L);
    const double m0 = detail::total(a0);
    if (!(m0 > 0)) throw ConfigError("$.initial: the initial field is identically zero");
    std::vector<double> t{P.t_final};

    json runs = json::array();
    std::vector<std::vector<double>> columns(P.weights.size() + P.axis_moments.size());
    for (double kappa : cfg.kappa) {
        auto g = kraichnan::assemble(c, L, kappa, detail::assemble_options(ctx));
        auto tr = kraichnan::integrate(g, a0, t, detail::integrate_options(P));
        json r{{"kappa", kappa}, {"path", kraichnan::to_string(tr.path)}, {"l1_final", detail::total(tr.values[0]) / m0}};
        json ws = json::array(), as = json::array();
        std::size_t col = 0;
        for (const auto& w : P.weights) {
            const double v = kraichnan::sigma_norm_sq(*L, tr.integrals[0], kraichnan::SigmaWeight::power_log(w.beta, w.m)) / m0;
            ws.push_back({{"beta", w.beta}, {"m", w.m}, {"ratio", v}});
            columns[col++].push_back(v);
        }
        for (const auto& a : P.axis_moments) {
            const double v = kraichnan::axis_moment(*L, tr.values[0], a.axis, a.power) / m0;
            as.push_back({{"axis", a.axis}, {"power", a.power}, {"ratio", v}, {"initial_ratio", kraichnan::axis_moment(*L, a0, a.axis, a.power) / m0}});
            columns[col++].push_back(v);
        }
        r["weighted_integrals"] = ws;
        r["axis_moments"] = as;
        runs.push_back(r);
    }
    // spread across kappa: max / min of each quantity
    json spread = json::array();
    for (const auto& v : columns) {
        const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
        spread.push_back(*lo > 0 ? *hi / *lo : std::numeric_limits<double>::infinity());
    }
    json summary{{"study", "smoothing"}, {"t_final", P.t_final}, {"initial_mass", m0}, {"coefficients", detail::coefficients_summary(c)},
                 {"runs", runs}, {"kappa_spread", spread}};
    ctx.out.json_file("smoothing.json", summary);
    return summary;
}

namespace detail {

struct Stationary {
    double kappa;
    kraichnan::InvariantSpectrum inv;
};

inline std::vector<Stationary> stationary(Context& ctx, const kraichnan::NoiseCoefficients& c, std::shared_ptr<const kraichnan::Lattice> L,
                                          const std::vector<double>& f) {
    std::vector<Stationary> out;
    kraichnan::SolveOptions so;
    so.tol = ctx.cfg.params.solve_tol;
    so.max_iter = ctx.cfg.params.max_iter;
    for (double kappa : ctx.cfg.kappa) {
        auto g = kraichnan::assemble(c, L, kappa, assemble_options(ctx));
        out.push_back({kappa, kraichnan::invariant_spectrum(g, f, so)});
    }
    return out;
}

inline void spectrum_csv(Context& ctx, const kraichnan::Lattice& L, const std::vector<Stationary>& st) {
    std::string s = "kappa,id" + site_header(L.dim()) + ",x\n";
    for (const auto& r : st)
        for (std::size_t k = 0; k < L.size(); ++k) {
            s += num(r.kappa) + "," + std::to_string(k);
            site_columns(s, L, k);
            s += "," + num(r.inv.x[k]) + "\n";
        }
    ctx.out.text("spectrum.csv", s);
}

inline json stationary_json(const Stationary& r) {
    const auto& v = r.inv;
    return {{"kappa", r.kappa},         {"iterations", v.iterations}, {"residual", v.residual},
            {"heat", v.heat},           {"outflow", v.outflow},       {"input", v.input},
            {"balance_error", v.input > 0 ? (v.heat + v.outflow - v.input) / v.input : 0.0}};
}

}  // namespace detail

inline json run_invariant(Context& ctx) {
    const auto& cfg = ctx.cfg;
    auto c = coefficients(cfg);
    auto L = std::make_shared<const kraichnan::Lattice>(cfg.model.d, cfg.N);
    const auto f = detail::initial_field(cfg, *L);
    auto st = detail::stationary(ctx, c, L, f);
    detail::spectrum_csv(ctx, *L, st);
    json runs = json::array();
    for (const auto& r : st) runs.push_back(detail::stationary_json(r));
    json summary{{"study", "invariant"}, {"sites", L->size()}, {"coefficients", detail::coefficients_summary(c)}, {"runs", runs}};
    ctx.out.json_file("invariant.json", summary);
    return summary;
}

inline json run_annuli(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& P = cfg.params;
    auto c = coefficients(cfg);
    auto L = std::make_shared<const kraichnan::Lattice>(cfg.model.d, cfg.N);
    const auto f = detail::initial_field(cfg, *L);
    const double F2 = detail::total(f);
    auto st = detail::stationary(ctx, c, L, f);
    detail::spectrum_csv(ctx, *L, st);
    json runs = json::array();
    for (const auto& r : st) {
        kraichnan::AnnulusConstants cst;
        cst.C = P.C;
        cst.m = P.m_log;
        auto rep = kraichnan::annulus_report(*L, r.inv.x, cfg.model.alpha, r.kappa, F2, P.r_list, cst, P.r0_annuli);
        json rows = json::array();
        for (const auto& row : rep.rows)
            rows.push_back({{"r", row.r},
                            {"k_lo", row.k_lo},
                            {"k_hi", row.k_hi},
                            {"sum", row.sum},
                            {"count", row.count},
                            {"lower_ok", row.lower_ok},
                            {"upper_ok", row.upper_ok},
                            {"fitted_C", std::isfinite(row.fitted_C) ? json(row.fitted_C) : json(nullptr)},
                            {"escapes_truncation", row.escapes_truncation},
                            {"outside_range", row.outside_range}});
        json j = detail::stationary_json(r);
        j["forcing_norm_sq"] = F2;
        j["C"] = rep.C;
        j["m"] = rep.m;
        j["dissipation_wavenumber"] = std::pow(r.kappa, -1.0 / (2.0 * cfg.model.alpha));
        j["rows"] = rows;
        if (!P.slope_scales.empty()) {
            auto s = kraichnan::fit_shell_slope(*L, r.inv.x, P.slope_scales, P.slope_width);
            j["slope"] = {{"slope_vs_K", s.slope},
                          {"slope_vs_r", -s.slope},
                          {"predicted_slope_vs_r", 2.0 * (1.0 - cfg.model.alpha)},
                          {"intercept", s.intercept},
                          {"scales", s.scales},
                          {"sums", s.sums},
                          {"counts", s.counts},
                          {"width", P.slope_width}};
        }
        runs.push_back(j);
    }
    json summary{{"study", "annuli"}, {"sites", L->size()}, {"alpha", cfg.model.alpha}, {"coefficients", detail::coefficients_summary(c)},
                 {"runs", runs}};
    ctx.out.json_file("spectrum_report.json", summary);
    return summary;
}

inline kraichnan::AuditOptions audit_options(const RunConfig& cfg) {
    kraichnan::AuditOptions o;
    o.angles = cfg.params.angles;
    o.directions = cfg.params.directions;
    o.seed = cfg.seed;
    return o;
}

inline json run_audit(Context& ctx) {
    const auto& cfg = ctx.cfg;
    auto c = coefficients(cfg);
    auto a = kraichnan::audit_assumption(c, cfg.params.r0, cfg.params.K_grid, audit_options(cfg));
    json summary{{"study", "audit"}, {"coefficients", detail::coefficients_summary(c)}, {"audit", detail::audit_json(a)}};
    ctx.out.json_file("audit.json", summary);
    return summary;
}

inline json run_poincare(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& P = cfg.params;
    auto c = coefficients(cfg);
    const kraichnan::Lattice L(cfg.model.d, cfg.N);
    const auto audit = kraichnan::audit_assumption(c, P.r0, P.K_grid, audit_options(cfg));
    const kraichnan::StructureFunction S(c, {});
    const double R = P.R.value_or(P.r0);
    const auto key = detail::key_of(cfg.seed);

    std::vector<std::size_t> ball;
    for (std::size_t k = 0; k < L.size(); ++k)
        if (L.norm(k) <= P.field_radius) ball.push_back(k);

    std::string csv = "case,p,support,lhs,rhs,explicit_constant,empirical_constant,holds,psi,psi_extrapolated\n";
    std::map<double, double> worst;
    std::size_t violations = 0, extrapolated = 0;
    json witness;
    for (int cs = 0; cs < P.cases; ++cs) {
        std::vector<double> a(L.size(), 0.0);
        auto head = kraichnan::Philox4x32::generate({std::uint32_t(cs), 0, 0x706f696eu, 0}, key);
        const int support = 1 + int(head[0] % std::uint32_t(P.max_support));
        for (int i = 0; i < support; ++i) {
            auto r = kraichnan::Philox4x32::generate({std::uint32_t(cs), std::uint32_t(i + 1), 0x706f696eu, 0}, key);
            const auto site = ball[std::size_t(detail::uniform01(r[0]) * double(ball.size()))];
            a[site] = 0.01 + 0.99 * detail::uniform01(r[1]);
        }
        for (double p : P.p_list) {
            auto v = kraichnan::verify(L, c, S, audit, a, p, R);
            csv += std::to_string(cs) + "," + num(p) + "," + std::to_string(support) + "," + num(v.lhs) + "," + num(v.rhs) + "," +
                   num(v.explicit_constant) + "," + num(v.empirical_best_constant) + "," + (v.holds_with_explicit_constant ? "1" : "0") +
                   "," + num(v.psi) + "," + (v.extrapolated_psi ? "1" : "0") + "\n";
            worst[p] = std::max(worst[p], v.empirical_best_constant);
            extrapolated += v.extrapolated_psi;
            if (!v.holds_with_explicit_constant && witness.is_null()) {
                json field = json::array();
                for (std::size_t k = 0; k < L.size(); ++k)
                    if (a[k] != 0) field.push_back({{"k", std::vector<int>(L.site(k).begin(), L.site(k).end())}, {"value", a[k]}});
                witness = {{"case", cs}, {"p", p}, {"R", R}, {"lhs", v.lhs}, {"rhs", v.rhs}, {"explicit_constant", v.explicit_constant},
                           {"field", field}};
            }
            violations += !v.holds_with_explicit_constant;
        }
    }
    json per_p = json::array();
    for (const auto& [p, w] : worst) per_p.push_back({{"p", p}, {"max_empirical_constant", w}});
    json summary{{"study", "poincare"},
                 {"R", R},
                 {"cases", P.cases},
                 {"field_radius", P.field_radius},
                 {"checks", std::size_t(P.cases) * P.p_list.size()},
                 {"violations", violations},
                 {"psi_extrapolated_checks", extrapolated},
                 {"per_p", per_p},
                 {"coefficients", detail::coefficients_summary(c)},
                 {"audit", detail::audit_json(audit)}};
    ctx.out.text("poincare.csv", csv);
    ctx.out.json_file("poincare.json", summary);
    if (violations) {
        ctx.out.json_file("witness.json", witness);
        throw CertificateFailure(std::to_string(violations) + " Poincare checks violate the inequality with the explicit constant",
                                 {{"witness", witness}, {"violations", violations}});
    }
    return summary;
}

inline json run_mc_validate(Context& ctx) {
    const auto& cfg = ctx.cfg;
    const auto& P = cfg.params;
    auto c = coefficients(cfg);
    auto L = std::make_shared<const kraichnan::Lattice>(cfg.model.d, cfg.N);
    const auto a0 = detail::initial_field(cfg, *L);
    std::vector<std::complex<double>> f(L->size());
    for (std::size_t k = 0; k < L->size(); ++k) f[k] = std::sqrt(a0[k]);

    const int d = cfg.model.d;
    std::string csv = "kappa,t,id" + detail::site_header(d) + ",a,se,n_samples,master,z\n";
    json runs = json::array();
    bool pass = true;
    for (double kappa : cfg.kappa) {
        kraichnan::McOptions mo;
        mo.threads = ctx.threads;
        mo.basis_rotation = P.basis_rotation;
        auto ens = kraichnan::simulate(c, L, kappa, f, P.dt, P.t_grid, P.samples, cfg.seed, mo);
        auto g = kraichnan::assemble(c, L, kappa, detail::assemble_options(ctx));
        kraichnan::IntegrateOptions io;
        io.tol = P.tol;
        auto ref = kraichnan::integrate(g, a0, P.t_grid, io);
        json snaps = json::array();
        for (std::size_t ti = 0; ti < P.t_grid.size(); ++ti) {
            const double t = P.t_grid[ti];
            auto m = kraichnan::empirical_second_moments(ens, t);
            std::size_t within = 0;
            double max_z = 0;
            for (std::size_t k = 0; k < L->size(); ++k) {
                const double diff = std::abs(m.mean[k] - ref.values[ti][k]);
                const double z = m.se[k] > 0 ? diff / m.se[k] : (diff == 0 ? 0.0 : std::numeric_limits<double>::infinity());
                within += z < P.threshold_se;
                max_z = std::max(max_z, z);
                csv += num(kappa) + "," + num(t) + "," + std::to_string(k);
                detail::site_columns(csv, *L, k);
                csv += "," + num(m.mean[k]) + "," + num(m.se[k]) + "," + std::to_string(m.n_samples) + "," + num(ref.values[ti][k]) + "," +
                       num(z) + "\n";
            }
            const double frac = double(within) / double(L->size());
            const bool ok = frac >= P.required_fraction;
            pass = pass && ok;
            snaps.push_back({{"t", t},
                             {"fraction_within", frac},
                             {"max_z", std::isfinite(max_z) ? json(max_z) : json(nullptr)},
                             {"pass", ok}});
        }
        runs.push_back({{"kappa", kappa},
                        {"stability_number", kraichnan::mc_stability_number(c, *L, kappa, P.dt)},
                        {"master_path", kraichnan::to_string(ref.path)},
                        {"snapshots", snaps}});
    }
    json summary{{"study", "mc-validate"}, {"sites", L->size()},   {"samples", P.samples}, {"dt", P.dt},
                 {"threshold_se", P.threshold_se}, {"required_fraction", P.required_fraction}, {"seed", cfg.seed},
                 {"coefficients", detail::coefficients_summary(c)}, {"runs", runs}, {"pass", pass}};
    ctx.out.text("mc.csv", csv);
    ctx.out.json_file("mc.json", summary);
    if (!pass) throw CertificateFailure("Monte Carlo moments disagree with the master equation", {{"runs", runs}});
    return summary;
}

inline json run_study(Context& ctx) {
    switch (ctx.cfg.study) {
        case Study::decay: return run_decay(ctx);
        case Study::smoothing: return run_smoothing(ctx);
        case Study::invariant: return run_invariant(ctx);
        case Study::annuli: return run_annuli(ctx);
        case Study::poincare: return run_poincare(ctx);
        case Study::mc_validate: return run_mc_validate(ctx);
        case Study::audit: return run_audit(ctx);
    }
    throw std::logic_error("unknown study");
}

}  // namespace lab
