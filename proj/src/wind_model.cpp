#include "bsei/wind_model.hpp"

#include <cmath>
#include <string>
#include <vector>

#include <boost/math/quadrature/tanh_sinh.hpp>

#include "bsei/errors.hpp"

namespace bsei {

namespace {

void require(bool ok, const char* field, const std::string& what, std::vector<std::string>& bad,
             std::string& msg) {
    if (ok) return;
    bad.emplace_back(field);
    if (!msg.empty()) msg += "; ";
    msg += std::string(field) + " " + what;
}

}  // namespace

void WindLawParams::validate() const {
    std::vector<std::string> bad;
    std::string msg;
    require(std::isfinite(w0) && w0 > 0.0, "w0", "must be > 0", bad, msg);
    require(std::isfinite(w1) && w1 <= 1.0 && w1 > 0.0, "w1", "must be in (0, 1]", bad, msg);
    require(std::isfinite(beta) && beta > 0.0, "beta", "must be > 0", bad, msg);
    require(std::isfinite(w_gauss) && w_gauss >= 0.0, "w_gauss", "must be >= 0", bad, msg);
    require(std::isfinite(alpha1) && alpha1 >= 0.0, "alpha1", "must be >= 0", bad, msg);
    require(std::isfinite(alpha2) && alpha2 >= 0.0, "alpha2", "must be >= 0", bad, msg);
    require(std::isfinite(t_tot_blue) && t_tot_blue >= 0.0, "t_tot_blue", "must be >= 0", bad, msg);
    require(std::isfinite(t_tot_red) && t_tot_red >= 0.0, "t_tot_red", "must be >= 0", bad, msg);
    require(a_phot_blue >= 0.0 && a_phot_blue <= 1.0, "a_phot_blue", "must be in [0, 1]", bad, msg);
    require(a_phot_red >= 0.0 && a_phot_red <= 1.0, "a_phot_red", "must be in [0, 1]", bad, msg);
    require(std::isfinite(w_phot_blue) && w_phot_blue > 0.0, "w_phot_blue", "must be > 0", bad, msg);
    require(std::isfinite(w_phot_red) && w_phot_red > 0.0, "w_phot_red", "must be > 0", bad, msg);
    require(std::isfinite(v_inf) && v_inf > 0.0, "v_inf", "must be > 0", bad, msg);
    require(epsilon == 0.0, "epsilon", "must be 0 (thermal term unsupported)", bad, msg);
    if (!bad.empty()) throw ValidationError(msg, bad, false);
    if (!(w0 < w1)) throw ValidationError("w0 must be < w1", {"w0", "w1"}, true);
}

void DoubletSpec::validate() const {
    if (!(std::isfinite(lambda_blue) && lambda_blue > 0.0))
        throw ValidationError("lambda_blue must be > 0", {"lambda_blue"});
    if (!(std::isfinite(lambda_red) && lambda_red > 0.0))
        throw ValidationError("lambda_red must be > 0", {"lambda_red"});
    if (!(lambda_blue < lambda_red))
        throw ValidationError("lambda_blue must be < lambda_red", {"lambda_blue", "lambda_red"}, true);
}

double velocity(double r, const WindLawParams& params) {
    if (!(r >= 1.0)) throw DomainError("velocity: r = " + std::to_string(r) + " is inside photosphere");
    return params.w0 + (1.0 - params.w0) * std::pow(1.0 - 1.0 / r, params.beta);
}

double radius_at_speed(double w, const WindLawParams& params) {
    if (!(w >= params.w0 && w < 1.0))
        throw DomainError("radius_at_speed: w = " + std::to_string(w) + " outside [w0, 1)");
    const double y = (w - params.w0) / (1.0 - params.w0);
    return 1.0 / (1.0 - std::pow(y, 1.0 / params.beta));
}

double velocity_gradient(double r, const WindLawParams& params) {
    const double s = 1.0 - 1.0 / r;
    return (1.0 - params.w0) * params.beta * std::pow(s, params.beta - 1.0) / (r * r);
}

double dlnw_dlnr(double r, const WindLawParams& params) {
    if (!(r > 1.0)) throw DomainError("dlnw_dlnr: r must be > 1");
    return r / velocity(r, params) * velocity_gradient(r, params);
}

double norm_integral(const WindLawParams& params) {
    const double y0 = params.w0 / params.w1;
    const double a1 = params.alpha1;
    const double a2 = params.alpha2;
    const double inv_beta = 1.0 / params.beta;
    // tanh-sinh copes with the (1 - y^(1/beta))^alpha2 singularity at y = 1;
    // yc is the distance to the nearer endpoint, used to keep the bracket accurate.
    auto integrand = [=](double y, double yc) {
        const double one_minus_y = y > 0.5 * (1.0 + y0) ? yc : 1.0 - y;
        const double bracket = -std::expm1(std::log1p(-one_minus_y) * inv_beta);
        const double tail = a2 == 0.0 ? 1.0 : (bracket > 0.0 ? std::pow(bracket, a2) : 0.0);
        return std::pow(y, a1) * tail;
    };
    boost::math::quadrature::tanh_sinh<double> rule(15);
    double err = 0.0;
    const double value = rule.integrate(integrand, y0, 1.0, 1e-13, &err);
    if (!std::isfinite(value)) throw NumericError("norm_integral did not converge");
    return value;
}

double tau_radial(double w, Component component, const WindLawParams& params) {
    return WindModel(params).tau_radial(w, component);
}

WindModel::WindModel(const WindLawParams& params) : params_(params), norm_(0.0) {
    params_.validate();
    norm_ = norm_integral(params_);
    if (!(norm_ > 0.0) || !std::isfinite(norm_)) throw NumericError("norm_integral is not positive");
}

double WindModel::velocity(double r) const { return bsei::velocity(r, params_); }

double WindModel::velocity_gradient(double r) const { return bsei::velocity_gradient(r, params_); }

double WindModel::tau_radial(double w, Component component) const {
    if (w < params_.w0) throw DomainError("tau_radial: w below wind base speed w0");
    if (w > params_.w1) return 0.0;
    const double y = w / params_.w1;
    const double bracket = 1.0 - std::pow(y, 1.0 / params_.beta);
    double shape = std::pow(y, params_.alpha1);
    if (params_.alpha2 != 0.0) shape *= bracket > 0.0 ? std::pow(bracket, params_.alpha2) : 0.0;
    // The y-substitution contributes a Jacobian w1, so the w-integral is T_tot.
    return params_.t_tot(component) / (params_.w1 * norm_) * shape;
}

}  // namespace bsei
