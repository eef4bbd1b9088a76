// Solves the dual retirement boundary by both methods and prints them side by side.

#include "habitretire/dual_boundary.hpp"
#include "habitretire/fbp_solver.hpp"

#include <cstdio>
#include <string>

using namespace habitretire;

int main(int argc, char** argv) {
    const std::string name = argc > 1 ? argv[1] : "gamma15";
    const Model m(preset(name));
    const TimeGrid tg = TimeGrid::uniform(0.0, m.params().T1, 20);

    BoundarySolverOptions bo;
    bo.refine = 20;
    const BoundaryCurve ie = solve_boundary(m, tg, bo);

    FbpOptions fo;
    fo.substeps = 20;
    const ObstacleSolution sol = solve_lcp(m, Grid2D::for_model(m, tg, 1600), fo);
    const ExtractedBoundary pde = extract_boundary(m, sol);

    std::printf("%s (%s): z*(t) from the integral equation and from the obstacle problem\n", name.c_str(),
                to_string(m.regime()));
    std::printf("%6s %14s %14s %14s\n", "t", "integral eq.", "obstacle", "running bound");
    for (std::size_t i = 0; i < tg.size(); ++i)
        std::printf("%6.2f %14.6g %14.6g %14.6g\n", tg.nodes[i], ie.values[i], pde.curve.values[i],
                    m.running_bound(tg.nodes[i]));
    std::printf("Lipschitz witness: %g\n", ie.lipschitz_witness());
}
