// Acceptance run: one PASS/FAIL line per criterion, both gamma presets per line.
//
// Usage: acceptance [--expect-fail N]...
// Exit status is 0 when every criterion passes or is listed with --expect-fail.

#include "habitretire/validation.hpp"

#include <boost/multiprecision/cpp_bin_float.hpp>

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <thread>
#include <vector>

using namespace habitretire;

namespace {

using Big = boost::multiprecision::cpp_bin_float_50;

/// (-Delta(T1))^{1/gamma_tilde} / mu_T(T1) evaluated from the raw parameters in 50-digit arithmetic.
Big terminal_boundary_reference(const ModelParams& p) {
    const Big g = p.gamma;
    const Big gt = (Big(1) - g) / g;
    const Big eps = std::get<ExponentialLeisure>(p.leisure).epsilon0;
    const Big K = exp(eps * gt * (Big(p.T) - Big(p.T1)));
    const Big delta = (Big(1) - pow(K, Big(1) / g)) / gt;
    const Big rate = Big(p.alpha) - Big(p.beta) - Big(p.r);
    const Big pT = (exp(rate * (Big(p.T) - Big(p.T1))) - Big(1)) / rate;
    const Big muT = Big(1) + Big(p.alpha) * pT;
    return pow(-delta, Big(1) / gt) / muT;
}

struct Line {
    bool pass = true;
    std::string detail;

    void add(const std::string& preset, const CheckResult& r) {
        pass = pass && r.pass;
        detail += (detail.empty() ? "" : " | ") + preset + ": " + r.detail;
    }
};

SimConfig sim_config(const ModelParams& p, std::size_t n_paths, double dt) {
    SimConfig c;
    c.n_paths = n_paths;
    c.dt = dt;
    c.seed = 20240601;
    c.initial = PrimalState{0.0, p.gamma > 1.0 ? 34.0 : 10.0, 0.5, 1.0};
    c.threads = std::max(1u, std::thread::hardware_concurrency());
    return c;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> expect_fail;
    for (int i = 1; i < argc; ++i) {
        const std::string a = argv[i];
        if (a == "--expect-fail" && i + 1 < argc) {
            expect_fail.insert(std::atoi(argv[++i]));
        } else {
            std::fprintf(stderr, "usage: acceptance [--expect-fail N]...\n");
            return 2;
        }
    }

    const std::vector<std::string> presets = {"gamma05", "gamma15"};
    std::vector<SolvedModel> solved;
    for (const auto& name : presets) solved.push_back(solve_all(preset(name), 50, 20, 6400, 20));

    using Criterion = std::function<Line()>;
    const std::vector<std::pair<std::string, Criterion>> criteria = {
        {"terminal boundary closed form", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) {
                 const ModelParams& p = solved[k].model.params();
                 const Big ref = terminal_boundary_reference(p);
                 const double diff = static_cast<double>(abs(Big(solved[k].zstar.values.back()) - ref));
                 const double scale = std::max(1.0, static_cast<double>(abs(ref)));
                 CheckResult r{"terminal", diff <= 1e-12 * scale, {}};
                 r.detail = "z*(T1)=" + format_double(solved[k].zstar.values.back()) + " |diff|="
                          + detail::fmt(diff) + " rel=" + detail::fmt(diff / scale);
                 l.add(presets[k], r);
             }
             return l;
         }},
        {"cross-method boundary agreement (50x400, <= 2 cells)", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) {
                 CheckResult r = check_cross_method(solved[k].model, 50, 400, 20);
                 r.detail += " (unrefined " + detail::fmt(cross_method_gap(solved[k].model, 50, 400, 1).worst_cells)
                           + " cells)";
                 l.add(presets[k], r);
             }
             return l;
         }},
        {"structural bounds", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k)
                 l.add(presets[k], check_structural_bounds(solved[k].model, solved[k].zstar));
             return l;
         }},
        {"obstacle-solution invariants and smooth pasting", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) {
                 const Model& m = solved[k].model;
                 const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, 50);
                 FbpOptions fo;
                 fo.substeps = 20;
                 l.add(presets[k], check_obstacle_invariants(solve_lcp(m, Grid2D::for_model(m, tg, 400), fo)));
                 l.add(presets[k], check_obstacle_invariants(solved[k].sol));
                 l.add(presets[k], check_smooth_pasting(m));
             }
             return l;
         }},
        {"derivative oracle (100 points, rel < 1e-4, W_yy > 0)", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) l.add(presets[k], check_derivatives(solved[k].engine, 100, 7));
             return l;
         }},
        {"habit-reduction identity (1e5 paths, dt = 0.01)", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k)
                 l.add(presets[k], check_habit_identity(solved[k].engine, sim_config(solved[k].model.params(), 100000, 0.01)));
             return l;
         }},
        {"stopping-time equivalence (1e4 paths, dt = T1/2000, < 1%)", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) {
                 const ModelParams& p = solved[k].model.params();
                 l.add(presets[k], check_stopping(solved[k].engine, sim_config(p, 10000, p.T1 / 2000.0)));
             }
             return l;
         }},
        {"policy jump signs on 20 rays", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) l.add(presets[k], check_jump_signs(solved[k].engine, 20));
             return l;
         }},
        {"Merton degeneracy (alpha = 0, K = 1)", [&] {
             Line l;
             for (std::size_t k = 0; k < presets.size(); ++k) l.add(presets[k], check_merton(preset(presets[k])));
             return l;
         }},
        {"critical habit falls as alpha rises (beta = 0.4, x = 80, w = 1)", [&] {
             Line l;
             for (const auto& name : presets) {
                 ModelParams p = preset(name);
                 p.beta = 0.4;
                 l.add(name, check_alpha_monotone(p, {0.1, 0.2, 0.3}, 80.0, 1.0));
             }
             return l;
         }},
    };

    int unexpected = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        const auto t0 = std::chrono::steady_clock::now();
        Line l;
        try {
            l = criteria[i].second();
        } catch (const std::exception& e) {
            l.pass = false;
            l.detail = std::string("exception: ") + e.what();
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const bool expected = expect_fail.count(id) > 0;
        std::string tag;
        if (!l.pass && expected) tag = " [expected failure]";
        if (l.pass && expected) tag = " [unexpected pass]";
        if (l.pass == expected) ++unexpected;
        std::printf("[%2d] %s  %s%s  (%.1f s)\n     %s\n", id, l.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                    tag.c_str(), secs, l.detail.c_str());
        std::fflush(stdout);
    }
    return unexpected == 0 ? 0 : 1;
}
