#pragma once

#include "habitretire/config.hpp"
#include "habitretire/csv.hpp"
#include "habitretire/dual_boundary.hpp"
#include "habitretire/fbp_solver.hpp"
#include "habitretire/model.hpp"
#include "habitretire/primal_map.hpp"
#include "habitretire/simulator.hpp"
#include "habitretire/validation.hpp"

#include <cmath>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace habitretire {

/// A table destined for `<stem>.csv`.
struct NamedTable {
    std::string stem;
    Table table;
};

/// What a product needs before it can run.
struct ProductNeeds {
    bool boundary = false;
    bool obstacle = false;
};

inline ProductNeeds needs_of(const std::string& kind) {
    if (kind == "dual_boundary" || kind == "yw_boundary" || kind == "xhw_plane" || kind == "xh_slice")
        return {true, false};
    if (kind == "h_curve" || kind == "x_curve") return {false, false};
    return {true, true};
}

/// Evenly spaced values lo, ..., hi (n >= 2).
inline std::vector<double> linspace(double lo, double hi, int n) {
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[i] = lo + (hi - lo) * i / (n - 1);
    v.back() = hi;
    return v;
}

/// Solved artifacts for one configuration plus the figure-data products built from them.
///
/// Artifacts are built in dependency order (model, boundary, obstacle solution,
/// policy engine) by `prepare`; afterwards every product is a const query and
/// products may run concurrently.
class Scenario {
public:
    explicit Scenario(ScenarioConfig cfg) : cfg_(std::move(cfg)), model_(cfg_.model) {}

    const ScenarioConfig& config() const { return cfg_; }
    const Model& model() const { return model_; }

    TimeGrid time_grid() const { return TimeGrid::uniform(0.0, model_.params().T1, cfg_.grids.n_steps); }

    void prepare(const ProductNeeds& n) {
        if ((n.boundary || n.obstacle) && !zstar_) {
            BoundarySolverOptions bo;
            bo.refine = cfg_.grids.refine;
            zstar_ = solve_boundary(model_, time_grid(), bo);
        }
        if (n.obstacle && !engine_) {
            FbpOptions fo;
            fo.substeps = cfg_.grids.substeps;
            const ObstacleSolution sol = solve_lcp(model_, Grid2D::for_model(model_, time_grid(), cfg_.grids.nz), fo);
            engine_ = std::make_unique<PolicyEngine>(model_, *zstar_, sol);
        }
    }

    void prepare(const std::vector<ProductRequest>& reqs) {
        ProductNeeds all;
        for (const auto& r : reqs) {
            const ProductNeeds n = needs_of(r.kind);
            all.boundary = all.boundary || n.boundary;
            all.obstacle = all.obstacle || n.obstacle;
        }
        prepare(all);
    }

    const BoundaryCurve& boundary() const {
        if (!zstar_) throw Error("Scenario: boundary not prepared");
        return *zstar_;
    }
    const PolicyEngine& engine() const {
        if (!engine_) throw Error("Scenario: obstacle solution not prepared");
        return *engine_;
    }

    /// Provenance comment for one product (without the leading '#').
    std::string provenance(const ProductRequest& r, const std::string& version) const {
        std::string s = "habitretire " + version + " product=" + r.text + " preset=" + cfg_.preset
                      + " params=" + parameter_hash(cfg_.model, cfg_.grids);
        if (r.kind == "simulation" || r.kind == "validate") s += " seed=" + std::to_string(cfg_.sim.seed);
        return s;
    }

    /// Runs one product; requires `prepare` for its needs.
    std::vector<NamedTable> build(const ProductRequest& r) const {
        const std::string& k = r.kind;
        if (k == "dual_boundary") return {{r.stem(), dual_boundary_table()}};
        if (k == "yw_boundary") return {{r.stem(), yw_boundary_table(r.list("w", linspace(0.5, 2.0, 7)))}};
        if (k == "xhw_plane") return {{r.stem(), xhw_plane_table(r.list("t", {0.0, 5.0, 8.0}))}};
        if (k == "xh_slice")
            return {{r.stem(), xh_slice_table(r.arg("w", 1.0), r.list("t", {0.0, 5.0, 8.0, 12.0, 16.0}))}};
        if (k == "h_curve")
            return {{r.stem(), h_curve_table(r.arg("x", 80.0), r.arg("w", 1.0), r.list("alpha", {0.1, 0.2, 0.3}))}};
        if (k == "x_curve")
            return {{r.stem(), x_curve_table(r.arg("h", 6.0), r.arg("w", 1.0), r.list("alpha", {0.1, 0.2, 0.3}))}};
        if (k == "c_surface") return {{r.stem(), c_surface_table(r.arg("t", 8.0))}};
        if (k == "pi_surface") return {{r.stem(), pi_surface_table(r.arg("t", 8.0), r.arg("h", 1.0))}};
        if (k == "wz_slice") return {{r.stem(), wz_slice_table(r.arg("t", 8.0))}};
        if (k == "simulation") return simulation_tables();
        if (k == "validate") return {{r.stem(), validate_table()}};
        throw ConfigError({"unknown product '" + k + "'"});
    }

    /// t, z_star, running_bound on the solver nodes.
    Table dual_boundary_table() const {
        Table t{{"t", "z_star", "running_bound"}, {}};
        const BoundaryCurve& zs = boundary();
        for (std::size_t i = 0; i < zs.grid.size(); ++i)
            t.add({zs.grid.nodes[i], zs.values[i], model_.running_bound(zs.grid.nodes[i])});
        return t;
    }

    /// Boundary in (y, w): y*(t, w) with z*(t) = y^{1/(1-gamma)} w^{gamma/(1-gamma)}.
    Table yw_boundary_table(const std::vector<double>& ws) const {
        Table t{{"t", "w", "y_star"}, {}};
        const BoundaryCurve& zs = boundary();
        const double g = model_.params().gamma;
        for (std::size_t i = 0; i < zs.grid.size(); ++i)
            for (double w : ws)
                t.add({zs.grid.nodes[i], w, std::pow(zs.values[i] * std::pow(w, -g / (1.0 - g)), 1.0 - g)});
        return t;
    }

    /// Coefficients of the plane x = pT(t) h + G*(t) w.
    Table xhw_plane_table(const std::vector<double>& ts) const {
        Table t{{"t", "p_T", "G_star", "q"}, {}};
        for (double s : ts) {
            check_time(s, "xhw_plane");
            t.add({s, model_.habit_cost(s), retirement_multiple(model_, boundary(), s), model_.wage_annuity(s)});
        }
        return t;
    }

    /// Boundary line in (x, h) at a fixed wage for several times.
    Table xh_slice_table(double w, const std::vector<double>& ts) const {
        Table t{{"t", "w", "h", "x_boundary"}, {}};
        for (double s : ts) {
            check_time(s, "xh_slice");
            const double pT = model_.habit_cost(s), G = retirement_multiple(model_, boundary(), s);
            for (double h : linspace(0.0, 10.0, 21)) t.add({s, w, h, pT * h + G * w});
        }
        return t;
    }

    /// Critical habit level h*(t) = (x - G*(t) w) / pT(t) for several alpha.
    Table h_curve_table(double x, double w, const std::vector<double>& alphas) const {
        const AlphaSweep s = alpha_sweep(cfg_.model, alphas, x, 0.0, w, cfg_.grids.n_steps, cfg_.grids.refine);
        Table t{{"alpha", "t", "h_star"}, {}};
        for (std::size_t a = 0; a < alphas.size(); ++a)
            for (std::size_t i = 0; i < s.times.size(); ++i) t.add({alphas[a], s.times[i], s.h_star[a][i]});
        return t;
    }

    /// Critical wealth x*(t) = pT(t) h + G*(t) w for several alpha.
    Table x_curve_table(double h, double w, const std::vector<double>& alphas) const {
        const AlphaSweep s = alpha_sweep(cfg_.model, alphas, 0.0, h, w, cfg_.grids.n_steps, cfg_.grids.refine);
        Table t{{"alpha", "t", "x_star"}, {}};
        for (std::size_t a = 0; a < alphas.size(); ++a)
            for (std::size_t i = 0; i < s.times.size(); ++i) t.add({alphas[a], s.times[i], s.x_star[a][i]});
        return t;
    }

    /// Excess consumption c* - h over de facto wealth and wage.
    Table c_surface_table(double s) const {
        Table t{{"defacto_wealth", "w", "c_star", "region"}, {}};
        policy_grid(s, 1.0, [&](double d, double w, double, const PolicyOutput& o) {
            t.add({d, w, o.c - 1.0, std::string(to_string(o.region))});
        });
        return t;
    }

    /// Risky amount and proportion pi*/x at a fixed habit level.
    Table pi_surface_table(double s, double h) const {
        Table t{{"defacto_wealth", "w", "x", "pi_star", "pi_ratio", "region"}, {}};
        policy_grid(s, h, [&](double d, double w, double x, const PolicyOutput& o) {
            t.add({d, w, x, o.pi, o.pi / x, std::string(to_string(o.region))});
        });
        return t;
    }

    /// z-derivatives of the reduced dual value and of the post-retirement value near z*(t).
    Table wz_slice_table(double s) const {
        check_time(s, "wz_slice");
        Table t{{"z", "what_z", "vtilde_z"}, {}};
        const DualValueSurface& S = engine().surface();
        const double gt = model_.derived().gamma_tilde, H = model_.post_value_H(s);
        const double lzs = std::log(boundary().at(s));
        for (double dl : linspace(-1.5, 1.5, 301)) {
            const double z = std::exp(lzs + dl);
            const ReducedDerivs d = S.reduced(s, z);
            t.add({z, d.phi_x / z, -gt * H * std::pow(z, -gt - 1.0)});
        }
        return t;
    }

    /// Summary statistics, retirement-time histogram and optional path dump.
    std::vector<NamedTable> simulation_tables() const {
        const SimReport r = simulate(engine(), cfg_.sim);
        Table sum{{"metric", "value"}, {}};
        auto ms = [&](const std::string& name, const MeanSE& m) {
            sum.add({name + "_mean", m.mean});
            sum.add({name + "_se", m.se});
        };
        ms("habit_lhs", r.habit_lhs);
        ms("habit_rhs", r.habit_rhs);
        ms("habit_identity_residual", r.habit_identity_residual);
        ms("budget_gap", r.budget_gap);
        ms("tau", r.tau);
        ms("terminal_abs_X", r.terminal_abs_X);
        ms("stop_time_abs_diff", r.stop_time_abs_diff);
        sum.add({"terminal_abs_X_max", r.terminal_abs_X_max});
        sum.add({"stop_time_mismatch", r.stop_time_mismatch});
        sum.add({"stop_time_compared", static_cast<long>(r.stop_time_compared)});
        sum.add({"violations_wealth_floor", static_cast<long>(r.violations.wealth_floor)});
        sum.add({"violations_consumption_floor", static_cast<long>(r.violations.consumption_floor)});
        sum.add({"violations_defacto_at_tau", static_cast<long>(r.violations.defacto_at_tau)});
        sum.add({"violations_habit_positive", static_cast<long>(r.violations.habit_positive)});
        sum.add({"violations_stopped", static_cast<long>(r.violations.stopped)});
        std::vector<NamedTable> out{{"simulation_summary", sum}};

        Table hist{{"bin_start", "bin_end", "count"}, {}};
        const TauHistogram& th = r.tau_histogram;
        for (std::size_t i = 0; i < th.counts.size(); ++i)
            hist.add({th.t0 + i * th.bin_width, th.t0 + (i + 1) * th.bin_width, static_cast<long>(th.counts[i])});
        hist.add({model_.params().T1, model_.params().T1, static_cast<long>(th.at_T1)});
        out.push_back({"simulation_tau_histogram", hist});

        if (!r.paths.empty()) {
            Table p{{"path_id", "t", "X", "h", "W", "c", "pi", "retired"}, {}};
            for (const PathRow& row : r.paths)
                p.add({static_cast<long>(row.path_id), row.t, row.X, row.h, row.W, row.c, row.pi,
                       static_cast<long>(row.retired)});
            out.push_back({"simulation_paths", p});
        }
        return out;
    }

    /// Invariant suite on this scenario's artifacts; the Monte Carlo checks use the configured sim block.
    std::vector<CheckResult> validate() const {
        std::vector<CheckResult> out;
        const PolicyEngine& pe = engine();
        out.push_back(check_terminal_boundary(model_, boundary()));
        out.push_back(check_cross_method(model_, 50, 400, cfg_.grids.refine));
        out.push_back(check_structural_bounds(model_, boundary()));
        FbpOptions fo;
        fo.substeps = cfg_.grids.substeps;
        out.push_back(check_obstacle_invariants(
            solve_lcp(model_, Grid2D::for_model(model_, time_grid(), cfg_.grids.nz), fo)));
        out.push_back(check_smooth_pasting(model_));
        out.push_back(check_derivatives(pe));
        out.push_back(check_habit_identity(pe, cfg_.sim));
        out.push_back(check_stopping(pe, cfg_.sim));
        out.push_back(check_jump_signs(pe));
        out.push_back(check_merton(cfg_.model));
        ModelParams bench = cfg_.model;
        bench.beta = 0.4;
        out.push_back(check_alpha_monotone(bench));
        return out;
    }

    Table validate_table() const {
        Table t{{"check", "result", "detail"}, {}};
        for (const CheckResult& c : validate())
            t.add({c.name, std::string(c.pass ? "PASS" : "FAIL"), csv_quote(c.detail)});
        return t;
    }

private:
    void check_time(double s, const char* what) const {
        if (!(s >= 0.0 && s <= model_.params().T1))
            throw DomainError(std::string(what) + ": t must lie in [0, T1]");
    }

    static std::string csv_quote(const std::string& s) {
        std::string q = "\"";
        for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }

    /// Policy on a (de facto wealth, wage) grid; states outside the solved range are skipped.
    template <class F>
    void policy_grid(double s, double h, F&& emit) const {
        if (!(s >= 0.0 && s < model_.params().T1)) throw DomainError("policy surface: t must lie in [0, T1)");
        const PolicyEngine& pe = engine();
        const TimeCoefficients c = pe.coefficients(s);
        const std::vector<double> ws = linspace(0.5, 2.0, 16);
        const double d_max = 3.0 * c.G_star * ws.back();
        for (double w : ws) {
            ZHint hint;
            for (double d : linspace(d_max / 60.0, d_max, 60)) {
                const double x = d + c.pT * h;
                try {
                    emit(d, w, x, pe.policy(c, x, h, w, &hint));
                } catch (const ExtrapolationError&) {
                    hint = ZHint{};
                }
            }
        }
    }

    ScenarioConfig cfg_;
    Model model_;
    std::optional<BoundaryCurve> zstar_;
    std::unique_ptr<PolicyEngine> engine_;
};

}  // namespace habitretire
