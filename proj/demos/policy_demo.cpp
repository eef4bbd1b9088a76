// Feedback consumption and investment along a wealth ray that crosses the retirement plane.

#include "habitretire/primal_map.hpp"

#include <cstdio>
#include <string>

using namespace habitretire;

int main(int argc, char** argv) {
    const std::string name = argc > 1 ? argv[1] : "gamma05";
    const double t = argc > 2 ? std::stod(argv[2]) : 8.0;
    const Model m(preset(name));
    const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, 50);
    BoundarySolverOptions bo;
    bo.refine = 20;
    FbpOptions fo;
    fo.substeps = 20;
    const PolicyEngine pe(m, solve_boundary(m, tg, bo), solve_lcp(m, Grid2D::for_model(m, tg, 6400), fo));

    const double h = 1.0, w = 1.0;
    const TimeCoefficients c = pe.coefficients(t);
    const double x_star = c.pT * h + c.G_star * w;
    std::printf("%s, t = %g, h = %g, w = %g: pT = %g, G* = %g, q = %g, boundary at x* = %g\n", name.c_str(), t, h, w,
                c.pT, c.G_star, c.q, x_star);
    std::printf("%10s %10s %12s %12s %10s\n", "x", "region", "c - h", "pi", "pi / x");
    ZHint hint;
    for (int k = 1; k <= 24; ++k) {
        const double x = c.pT * h + (x_star - c.pT * h) * k / 16.0;
        const PolicyOutput o = pe.policy(c, x, h, w, &hint);
        std::printf("%10.4g %10s %12.6g %12.6g %10.4g\n", x, to_string(o.region), o.c - h, o.pi, o.pi / x);
    }
}
