#pragma once

#include "habitretire/error.hpp"
#include "habitretire/model.hpp"

#include <cmath>
#include <numbers>

namespace habitretire {

/// Which side of the threshold the indicator selects.
enum class Side { below, above };

/// Standard normal cumulative distribution function.
inline double normal_cdf(double x) {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

/// Geometric Brownian motion dZ/Z = mu_z dt + sigma_z dB under the tilted measure.
struct ReducedProcess {
    double mu_z = 0.0;
    double sigma_z = 0.0;

    static ReducedProcess of(const Model& m) {
        const ZCoefficients zc = m.z_coeffs();
        return ReducedProcess{zc.mu_z, zc.sigma_z};
    }

    /// E[Z(u)^p 1{Z(u) < k}] (or > k) given Z(t) = z.
    ///
    /// At zero lag the indicator is evaluated with strict inequality.
    double partial_moment(double z, double t, double u, double k, double p, Side side) const {
        if (!(z > 0.0) || !(k > 0.0)) throw DomainError("partial_moment: z and k must be positive");
        if (u < t) throw DomainError("partial_moment: u must not precede t");
        const double lag = u - t;
        if (lag == 0.0) {
            const bool in = side == Side::below ? z < k : z > k;
            return in ? std::pow(z, p) : 0.0;
        }
        if (sigma_z == 0.0) throw DegenerateProcess("partial_moment: sigma_z = 0");
        const double m = (mu_z - 0.5 * sigma_z * sigma_z) * lag;
        const double s = std::abs(sigma_z) * std::sqrt(lag);
        const double d = (std::log(k) - std::log(z) - m - p * s * s) / s;
        const double scale = std::pow(z, p) * std::exp(p * m + 0.5 * p * p * s * s);
        return scale * normal_cdf(side == Side::below ? d : -d);
    }
};

}  // namespace habitretire
