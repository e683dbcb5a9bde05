#include "bsei/binary_synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "bsei/errors.hpp"
#include "parallel.hpp"

namespace bsei {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double reduce_phase(double phase) {
    double f = phase - std::floor(phase);
    return f >= 1.0 ? 0.0 : f;
}

// Mean anomaly at phase zero: star 1 at argument of latitude 3 pi / 2, where
// its radial velocity crosses gamma going up.
double mean_anomaly_at_conjunction(double e, double omega) {
    const double nu = 1.5 * std::numbers::pi - omega;
    const double ecc_anom = 2.0 * std::atan(std::sqrt((1.0 - e) / (1.0 + e)) * std::tan(0.5 * nu));
    return ecc_anom - e * std::sin(ecc_anom);
}

std::vector<double> interpolate(const std::vector<double>& xs, const std::vector<double>& ys,
                                const std::vector<double>& at, double fill) {
    std::vector<double> out(at.size(), fill);
    if (xs.size() < 2) return out;
    for (std::size_t i = 0; i < at.size(); ++i) {
        const double a = at[i];
        if (a < xs.front() || a > xs.back()) continue;
        auto it = std::upper_bound(xs.begin(), xs.end(), a);
        std::size_t hi = static_cast<std::size_t>(it - xs.begin());
        if (hi == xs.size()) {
            out[i] = ys.back();
            continue;
        }
        const std::size_t lo = hi - 1;
        const double t = (a - xs[lo]) / (xs[hi] - xs[lo]);
        out[i] = t == 0.0 ? ys[lo] : ys[lo] + t * (ys[hi] - ys[lo]);
    }
    return out;
}

}  // namespace

void OrbitalSolution::validate() const {
    std::vector<std::string> bad;
    if (!(std::isfinite(period_days) && period_days > 0.0)) bad.emplace_back("period_days");
    if (!std::isfinite(t0)) bad.emplace_back("t0");
    if (!(eccentricity >= 0.0 && eccentricity < 1.0)) bad.emplace_back("eccentricity");
    if (!std::isfinite(omega_deg)) bad.emplace_back("omega_deg");
    if (!(std::isfinite(k1_kms) && k1_kms >= 0.0)) bad.emplace_back("k1_kms");
    if (!(std::isfinite(k2_kms) && k2_kms >= 0.0)) bad.emplace_back("k2_kms");
    if (!std::isfinite(gamma_kms)) bad.emplace_back("gamma_kms");
    if (!(std::isfinite(l1) && l1 > 0.0)) bad.emplace_back("l1");
    if (!(std::isfinite(l2) && l2 > 0.0)) bad.emplace_back("l2");
    if (!bad.empty()) {
        std::string msg = "invalid orbit field(s):";
        for (const auto& f : bad) msg += " " + f;
        throw ValidationError(msg, bad);
    }
    if (std::abs(l1 + l2 - 1.0) > 1e-9) throw ValidationError("l1 + l2 must equal 1", {"l1", "l2"}, true);
}

void EclipseState::validate() const {
    if (!(lc > 0.0 && lc <= 1.0 + 1e-6)) throw ValidationError("lc must be in (0, 1]", {"lc"});
}

double solve_kepler(double mean_anomaly, double e) {
    if (!(e >= 0.0 && e < 1.0)) throw DomainError("solve_kepler: eccentricity must be in [0, 1)");
    if (!std::isfinite(mean_anomaly)) throw DomainError("solve_kepler: mean anomaly must be finite");
    if (e == 0.0) return mean_anomaly;
    // Solve on [-pi, pi] where E - e sin E - m is monotone and brackets its root.
    const double turns = std::round(mean_anomaly / kTwoPi);
    const double m = mean_anomaly - turns * kTwoPi;
    double lo = -std::numbers::pi, hi = std::numbers::pi;
    double ecc = e > 0.8 ? (m >= 0.0 ? std::numbers::pi : -std::numbers::pi) : m + e * std::sin(m);
    for (int it = 0; it < 60; ++it) {
        const double f = ecc - e * std::sin(ecc) - m;
        if (std::abs(f) <= 1e-15 * (1.0 + std::abs(m))) return ecc + turns * kTwoPi;
        (f < 0.0 ? lo : hi) = ecc;
        const double next = ecc - f / (1.0 - e * std::cos(ecc));
        ecc = (next > lo && next < hi) ? next : 0.5 * (lo + hi);
        if (hi - lo < 1e-16) return ecc + turns * kTwoPi;
    }
    const double f = ecc - e * std::sin(ecc) - m;
    if (std::abs(f) <= 1e-12) return ecc + turns * kTwoPi;
    throw NumericError("solve_kepler did not converge for M = " + std::to_string(mean_anomaly));
}

double radial_velocity(double phase, int star, const OrbitalSolution& orbit) {
    if (star != 1 && star != 2) throw ContractError("radial_velocity: star must be 1 or 2");
    const double e = orbit.eccentricity;
    const double omega = orbit.omega_deg * std::numbers::pi / 180.0;
    const double m = mean_anomaly_at_conjunction(e, omega) + kTwoPi * reduce_phase(phase);
    const double ecc = solve_kepler(m, e);
    const double nu = 2.0 * std::atan2(std::sqrt(1.0 + e) * std::sin(0.5 * ecc), std::sqrt(1.0 - e) * std::cos(0.5 * ecc));
    // Star 2's argument of periastron is omega + pi, which flips the sign.
    const double shape = std::cos(nu + omega) + e * std::cos(omega);
    return star == 1 ? orbit.gamma_kms + orbit.k1_kms * shape : orbit.gamma_kms - orbit.k2_kms * shape;
}

std::vector<double> doppler_shift(const std::vector<double>& wavelength, const std::vector<double>& flux, double rv_kms,
                                  double fill) {
    if (wavelength.size() != flux.size()) throw ContractError("doppler_shift: size mismatch");
    for (std::size_t i = 1; i < wavelength.size(); ++i)
        if (!(wavelength[i] > wavelength[i - 1]))
            throw ContractError("doppler_shift: wavelength grid must be strictly increasing");
    if (rv_kms == 0.0) return flux;
    const double factor = 1.0 + rv_kms / kSpeedOfLightKms;
    // The shifted spectrum at lambda is the rest spectrum at lambda / factor.
    std::vector<double> rest(wavelength.size());
    std::transform(wavelength.begin(), wavelength.end(), rest.begin(), [&](double l) { return l / factor; });
    return interpolate(wavelength, flux, rest, fill);
}

EclipseWeights eclipse_weights(const EclipseState& state, const OrbitalSolution& orbit, WeightRule rule) {
    state.validate();
    EclipseWeights w{orbit.l1, orbit.l2, false};
    const bool printed = rule == WeightRule::printed;
    switch (state.kind) {
        case EclipseKind::none:
            return w;
        case EclipseKind::primary_eclipsed:
            w.w1 = state.lc - (printed ? orbit.l1 : orbit.l2);
            break;
        case EclipseKind::secondary_eclipsed:
            w.w2 = state.lc - (printed ? orbit.l2 : orbit.l1);
            break;
    }
    if (w.w1 < 0.0 || w.w2 < 0.0) {
        w.clipped = true;
        w.w1 = std::max(0.0, w.w1);
        w.w2 = std::max(0.0, w.w2);
    }
    return w;
}

std::vector<double> common_wavelength_grid(const SingleStarProfile& a, const SingleStarProfile& b, double margin_kms) {
    const auto& x = a.grid.x;
    if (x.size() < 2) throw ContractError("common_wavelength_grid: profile grid too short");
    const double step = (x.back() - x.front()) / static_cast<double>(x.size() - 1);
    const double scale = a.grid.v_inf / kSpeedOfLightKms;
    const auto wb = b.grid.wavelengths();
    const double stretch = 1.0 + std::abs(margin_kms) / kSpeedOfLightKms;
    const double want_lo = std::min(a.grid.wavelength_of(x.front()), wb.empty() ? 1e300 : wb.front()) / stretch;
    const double want_hi = std::max(a.grid.wavelength_of(x.back()), wb.empty() ? 0.0 : wb.back()) * stretch;
    // Index lattice x_i = x_0 + i * step, the same one that produced a's grid.
    const double x_lo = (want_lo / a.grid.lambda_ref - 1.0) / scale;
    const double x_hi = (want_hi / a.grid.lambda_ref - 1.0) / scale;
    const long i_lo = std::min(0L, static_cast<long>(std::floor((x_lo - x.front()) / step + 1e-6)));
    const long i_hi = std::max(static_cast<long>(x.size()) - 1, static_cast<long>(std::ceil((x_hi - x.front()) / step - 1e-6)));
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(i_hi - i_lo + 1));
    for (long i = i_lo; i <= i_hi; ++i) {
        const double xi = (i >= 0 && i < static_cast<long>(x.size())) ? x[static_cast<std::size_t>(i)]
                                                                       : x.front() + static_cast<double>(i) * step;
        out.push_back(a.grid.wavelength_of(xi));
    }
    return out;
}

WavelengthProfile on_wavelength_grid(const SingleStarProfile& profile, const std::vector<double>& wavelength) {
    const auto own = profile.grid.wavelengths();
    WavelengthProfile out;
    out.wavelength = wavelength;
    out.core = interpolate(own, profile.f_core, wavelength, 1.0);
    out.halo = interpolate(own, profile.f_halo, wavelength, 0.0);
    return out;
}

BseiProfile amalgamate(const WavelengthProfile& f1, const WavelengthProfile& f2, double phase,
                       const OrbitalSolution& orbit, const EclipseState& state, WeightRule rule) {
    orbit.validate();
    if (f1.wavelength != f2.wavelength) throw ContractError("amalgamate: profiles are on different wavelength grids");
    if (f1.core.size() != f1.wavelength.size() || f1.halo.size() != f1.wavelength.size() ||
        f2.core.size() != f2.wavelength.size() || f2.halo.size() != f2.wavelength.size())
        throw ContractError("amalgamate: profile arrays do not match the wavelength grid");

    const auto weights = eclipse_weights(state, orbit, rule);
    BseiProfile out;
    out.phase = reduce_phase(phase);
    out.wavelength = f1.wavelength;
    out.w1 = weights.w1;
    out.w2 = weights.w2;
    out.weights_clipped = weights.clipped;
    out.rv1 = radial_velocity(out.phase, 1, orbit);
    out.rv2 = radial_velocity(out.phase, 2, orbit);

    const auto c1 = doppler_shift(f1.wavelength, f1.core, out.rv1, 1.0);
    const auto h1 = doppler_shift(f1.wavelength, f1.halo, out.rv1, 0.0);
    const auto c2 = doppler_shift(f2.wavelength, f2.core, out.rv2, 1.0);
    const auto h2 = doppler_shift(f2.wavelength, f2.halo, out.rv2, 0.0);
    out.flux.resize(out.wavelength.size());
    // Halo weights stay at the intrinsic light ratio at every phase.
    for (std::size_t i = 0; i < out.flux.size(); ++i)
        out.flux[i] = (out.w1 * c1[i] + orbit.l1 * h1[i]) + (out.w2 * c2[i] + orbit.l2 * h2[i]);
    return out;
}

BseiProfile amalgamate(const SingleStarProfile& f1, const SingleStarProfile& f2, double phase,
                       const OrbitalSolution& orbit, const EclipseState& state, WeightRule rule) {
    if (f1.grid.x != f2.grid.x || f1.grid.lambda_ref != f2.grid.lambda_ref || f1.grid.v_inf != f2.grid.v_inf)
        throw ContractError("amalgamate: single-star profiles are on different frequency grids");
    const auto wl = f1.grid.wavelengths();
    return amalgamate(WavelengthProfile{wl, f1.f_core, f1.f_halo}, WavelengthProfile{wl, f2.f_core, f2.f_halo}, phase,
                      orbit, state, rule);
}

std::vector<BseiProfile> phase_sequence(const SingleStarProfile& f1, const SingleStarProfile& f2,
                                        const OrbitalSolution& orbit, const std::vector<PhasePoint>& phases,
                                        WeightRule rule, int threads) {
    orbit.validate();
    for (std::size_t i = 1; i < phases.size(); ++i)
        if (!(phases[i].phase >= phases[i - 1].phase)) throw ContractError("phase_sequence: phases must be sorted");
    for (const auto& ph : phases) ph.eclipse.validate();

    const double e = orbit.eccentricity;
    const double margin = std::abs(orbit.gamma_kms) + std::max(orbit.k1_kms, orbit.k2_kms) * (1.0 + e);
    const auto grid = common_wavelength_grid(f1, f2, margin);
    const auto a = on_wavelength_grid(f1, grid);
    const auto b = on_wavelength_grid(f2, grid);

    std::vector<BseiProfile> out(phases.size());
    detail::parallel_for(phases.size(), threads,
                         [&](std::size_t i) { out[i] = amalgamate(a, b, phases[i].phase, orbit, phases[i].eclipse, rule); });
    return out;
}

std::vector<BseiProfile> phase_sequence(const WindLawParams& params1, const WindLawParams& params2,
                                        const DoubletSpec& doublet, const OrbitalSolution& orbit,
                                        const std::vector<PhasePoint>& phases, const GridConfig& config,
                                        WeightRule rule) {
    orbit.validate();
    const auto f1 = single_star_profile(params1, doublet, config);
    const auto f2 = params2 == params1 ? f1 : single_star_profile(params2, doublet, config);
    return phase_sequence(f1, f2, orbit, phases, rule, config.threads);
}

}  // namespace bsei
