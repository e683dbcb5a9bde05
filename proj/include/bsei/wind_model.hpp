#pragma once

#include <string>

namespace bsei {

/// Doublet member. Blue is the shorter-wavelength transition.
enum class Component { blue, red };

/// Full parameter vector of a single-star wind line. Speeds are in units of
/// the terminal speed v_inf; radii in stellar radii.
struct WindLawParams {
    double w0 = 0.01;       ///< speed at the wind base
    double beta = 1.0;      ///< velocity-law exponent
    double w_gauss = 0.05;  ///< turbulence half-width
    double w1 = 1.0;        ///< line formation ceases beyond this speed
    double alpha1 = 0.0;
    double alpha2 = 1.0;
    double t_tot_blue = 1.0;  ///< integrated radial optical depth, blue member
    double t_tot_red = 0.5;
    double a_phot_blue = 0.0;  ///< photospheric depth in normalized flux
    double a_phot_red = 0.0;
    double w_phot_blue = 0.05;  ///< photospheric half-width
    double w_phot_red = 0.05;
    double v_inf = 2500.0;  ///< km/s
    double epsilon = 0.0;   ///< collisional/radiative ratio; only 0 is supported

    /// Throws ValidationError naming the offending field(s). Cross-field
    /// violations such as w0 >= w1 are flagged as invariant failures.
    void validate() const;

    double t_tot(Component c) const { return c == Component::blue ? t_tot_blue : t_tot_red; }

    bool operator==(const WindLawParams&) const = default;
};

struct DoubletSpec {
    double lambda_blue = 1548.187;  ///< Angstrom
    double lambda_red = 1550.772;
    std::string ion_label = "CIV";

    void validate() const;

    bool operator==(const DoubletSpec&) const = default;
};

/// w(r) = w0 + (1 - w0)(1 - 1/r)^beta. Throws DomainError for r < 1.
double velocity(double r, const WindLawParams& params);

/// Inverse of the velocity law on [w0, 1).
double radius_at_speed(double w, const WindLawParams& params);

/// d ln w / d ln r, for r > 1.
double dlnw_dlnr(double r, const WindLawParams& params);

/// dw/dr of the velocity law (no domain check; r >= 1).
double velocity_gradient(double r, const WindLawParams& params);

/// Normalization integral over y = w/w1: int_{w0/w1}^{1} y^a1 (1 - y^(1/beta))^a2 dy.
double norm_integral(const WindLawParams& params);

/// Radial Sobolev optical depth where the wind speed equals w. Normalized so
/// that its integral over [w0, w1] in w equals the component's T_tot; zero
/// beyond w1.
double tau_radial(double w, Component component, const WindLawParams& params);

/// Cached evaluator of the wind laws for one validated parameter set. The
/// normalization integral is computed once at construction.
class WindModel {
public:
    explicit WindModel(const WindLawParams& params);

    const WindLawParams& params() const noexcept { return params_; }
    double norm() const noexcept { return norm_; }

    double velocity(double r) const;
    double velocity_gradient(double r) const;
    double tau_radial(double w, Component component) const;

private:
    WindLawParams params_;
    double norm_;
};

}  // namespace bsei
