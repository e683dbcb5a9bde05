#pragma once

#include <vector>

#include "bsei/sei_engine.hpp"
#include "bsei/wind_model.hpp"

namespace bsei {

/// Keplerian elements, RV semi-amplitudes and UV light ratio.
struct OrbitalSolution {
    double period_days = 1.0;
    double t0 = 0.0;  ///< HJD of phase zero
    double eccentricity = 0.0;
    double omega_deg = 90.0;
    double k1_kms = 0.0;
    double k2_kms = 0.0;
    double gamma_kms = 0.0;
    double l1 = 0.6;
    double l2 = 0.4;

    void validate() const;
    bool operator==(const OrbitalSolution&) const = default;
};

enum class EclipseKind { none, primary_eclipsed, secondary_eclipsed };

struct EclipseState {
    EclipseKind kind = EclipseKind::none;
    double lc = 1.0;  ///< normalized continuum flux at this phase

    void validate() const;
    bool operator==(const EclipseState&) const = default;
};

/// `adopted` keeps the continuum equal to LC; `printed` uses the subtrahends
/// as they appear in the original weighting scheme ([LC - L1, L2] and [L1, LC - L2]).
enum class WeightRule { adopted, printed };

struct EclipseWeights {
    double w1 = 0.0;
    double w2 = 0.0;
    bool clipped = false;  ///< a negative weight was raised to 0
};

/// Core and halo fluxes of one star resampled onto a wavelength grid.
struct WavelengthProfile {
    std::vector<double> wavelength;
    std::vector<double> core;
    std::vector<double> halo;
};

struct BseiProfile {
    double phase = 0.0;
    std::vector<double> wavelength;
    std::vector<double> flux;
    double w1 = 0.0, w2 = 0.0;
    double rv1 = 0.0, rv2 = 0.0;
    bool weights_clipped = false;
};

struct PhasePoint {
    double phase = 0.0;
    EclipseState eclipse;
};

/// Eccentric anomaly E with E - e sin E = M.
double solve_kepler(double mean_anomaly, double e);

/// km/s, positive receding. Phase zero is a conjunction; for e = 0 star 1
/// follows gamma + K1 sin(2 pi phase).
double radial_velocity(double phase, int star, const OrbitalSolution& orbit);

/// Shifts the wavelength axis by (1 + rv/c) and resamples linearly onto the
/// input grid; points that fall off the ends take `fill`.
std::vector<double> doppler_shift(const std::vector<double>& wavelength, const std::vector<double>& flux, double rv_kms,
                                  double fill = 1.0);

EclipseWeights eclipse_weights(const EclipseState& state, const OrbitalSolution& orbit,
                               WeightRule rule = WeightRule::adopted);

/// Uniform wavelength grid with the step of `a`'s frequency grid, extended on
/// the same lattice to cover `b` plus `margin_kms` of Doppler shift either way.
/// When `a` alone is covered the grid reproduces a.grid.wavelengths().
std::vector<double> common_wavelength_grid(const SingleStarProfile& a, const SingleStarProfile& b,
                                           double margin_kms = 0.0);

/// Linear resampling; core is filled with 1 and halo with 0 off the ends.
WavelengthProfile on_wavelength_grid(const SingleStarProfile& profile, const std::vector<double>& wavelength);

BseiProfile amalgamate(const WavelengthProfile& f1, const WavelengthProfile& f2, double phase,
                       const OrbitalSolution& orbit, const EclipseState& state,
                       WeightRule rule = WeightRule::adopted);

/// Both profiles must share one frequency grid (same x, lambda_ref and v_inf).
BseiProfile amalgamate(const SingleStarProfile& f1, const SingleStarProfile& f2, double phase,
                       const OrbitalSolution& orbit, const EclipseState& state,
                       WeightRule rule = WeightRule::adopted);

/// Shifting and weighting only; the single-star profiles are computed once by the caller.
std::vector<BseiProfile> phase_sequence(const SingleStarProfile& f1, const SingleStarProfile& f2,
                                        const OrbitalSolution& orbit, const std::vector<PhasePoint>& phases,
                                        WeightRule rule = WeightRule::adopted, int threads = 0);

std::vector<BseiProfile> phase_sequence(const WindLawParams& params1, const WindLawParams& params2,
                                        const DoubletSpec& doublet, const OrbitalSolution& orbit,
                                        const std::vector<PhasePoint>& phases, const GridConfig& config = {},
                                        WeightRule rule = WeightRule::adopted);

}  // namespace bsei
