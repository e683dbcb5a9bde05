#pragma once

#include <cstddef>
#include <vector>

#include "bsei/wind_model.hpp"

namespace bsei {

inline constexpr double kSpeedOfLightKms = 299792.458;

/// Numerical resolution of a single-star synthesis. `refined(k)` scales every
/// resolution knob by k at once.
struct GridConfig {
    double x_step = 0.01;      ///< frequency resolution in units of v_inf/c
    int core_rays = 48;        ///< Gauss-Legendre nodes in p^2 over [0, 1)
    int halo_rays = 64;        ///< log-spaced nodes in p - 1 over [1, p_max]
    int z_samples = 256;       ///< samples per ray segment
    double r_cap = 100.0;      ///< outer wind radius when w1 is (close to) 1
    double w_floor = 0.01;     ///< minimum Gaussian width in the formal solution
    bool occultation = true;   ///< false: wind behind the disk also reaches the observer
    int threads = 0;           ///< 0 = hardware concurrency

    GridConfig refined(int factor) const;
    bool operator==(const GridConfig&) const = default;
};

/// Dimensionless frequency axis x = (c/v_inf)(lambda - lambda_ref)/lambda_ref.
struct FrequencyGrid {
    std::vector<double> x;
    double lambda_ref = 0.0;
    double v_inf = 0.0;

    /// Symmetric grid x_i = i * step covering every place a doublet member
    /// can absorb or emit, with a 4 w_gauss margin.
    static FrequencyGrid covering(const WindLawParams& params, const DoubletSpec& doublet, double step);

    double wavelength_of(double xi) const { return lambda_ref * (1.0 + xi * v_inf / kSpeedOfLightKms); }
    double x_of(double lambda) const { return (lambda / lambda_ref - 1.0) * kSpeedOfLightKms / v_inf; }
    std::vector<double> wavelengths() const;
};

struct RayQuadrature {
    std::vector<double> p_core;        ///< in [0, 1)
    std::vector<double> core_weights;  ///< sum to 1: integral of 2 p dp over [0, 1)
    std::vector<double> p_halo;        ///< in [1, p_max], first node 1, last p_max
    int z_samples_per_ray = 256;
    double p_max = 0.0;
    double w_floor = 0.01;
    bool occultation = true;

    static RayQuadrature make(const WindLawParams& params, const GridConfig& config);
};

struct SingleStarProfile {
    FrequencyGrid grid;
    std::vector<double> f_core;  ///< p < 1 rays, including transmitted photospheric light
    std::vector<double> f_halo;  ///< p >= 1 rays, pure wind emission
    std::vector<double> f_total;
};

/// Angle-averaged Sobolev escape probability for a directional depth
/// tau(mu) = tau_r (1 + sigma) / (1 + sigma mu^2).
double escape_probability(double tau_r, double sigma);

/// Same integrand restricted to the cone subtended by the stellar disk.
double penetration_probability(double tau_r, double sigma, double r);

/// delta_c / delta * i_star for explicit Sobolev depth and gradient parameter.
double sobolev_source(double tau_r, double sigma, double r, double i_star);

/// Two-level-atom Sobolev source function with no thermal term.
double source_function(double r, const WindLawParams& params, Component component, double i_star);

/// Incident photospheric intensity at frequency x: unit continuum minus a
/// Gaussian absorption line at each doublet member.
double photospheric_input(double x, const WindLawParams& params, const DoubletSpec& doublet);

/// Frequency offset of the red member relative to the blue one.
double red_offset(const WindLawParams& params, const DoubletSpec& doublet);

/// Emergent intensity of one ray at one frequency.
double formal_integrate_ray(double p, double x, const WindLawParams& params, const DoubletSpec& doublet,
                            const RayQuadrature& quad);

SingleStarProfile single_star_profile(const WindLawParams& params, const DoubletSpec& doublet,
                                      const FrequencyGrid& grid, const RayQuadrature& quad, int threads = 0);

/// Convenience: grid and quadrature from a GridConfig.
SingleStarProfile single_star_profile(const WindLawParams& params, const DoubletSpec& doublet,
                                      const GridConfig& config = {});

/// Equivalent width in x units, trapezoid: integral of (1 - f) dx.
double equivalent_width(const std::vector<double>& x, const std::vector<double>& flux, double continuum = 1.0);

}  // namespace bsei
