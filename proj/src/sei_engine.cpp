#include "bsei/sei_engine.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>

#include "bsei/errors.hpp"
#include "bsei/quadrature.hpp"
#include "parallel.hpp"

namespace bsei {

namespace {

constexpr double kSigmaCap = 1e12;

// (1 - e^-t)/t, finite at t = 0.
double beta_escape(double t) {
    if (t < 1e-8) return 1.0 - 0.5 * t;
    return -std::expm1(-t) / t;
}

double directional_integral(double tau_r, double sigma, double mu_lo) {
    const double s = std::min(sigma, kSigmaCap);
    auto integrand = [=](double mu) { return beta_escape(tau_r * (1.0 + s) / (1.0 + s * mu * mu)); };
    return quad::adaptive_simpson(integrand, mu_lo, 1.0, 1e-11, 1e-14, 40);
}

double cone_edge(double r) { return r <= 1.0 ? 0.0 : std::sqrt(1.0 - 1.0 / (r * r)); }

}  // namespace

GridConfig GridConfig::refined(int factor) const {
    GridConfig out = *this;
    out.x_step = x_step / factor;
    out.core_rays = core_rays * factor;
    out.halo_rays = halo_rays * factor;
    out.z_samples = z_samples * factor;
    return out;
}

double red_offset(const WindLawParams& params, const DoubletSpec& doublet) {
    return kSpeedOfLightKms / params.v_inf * (doublet.lambda_red - doublet.lambda_blue) / doublet.lambda_blue;
}

FrequencyGrid FrequencyGrid::covering(const WindLawParams& params, const DoubletSpec& doublet, double step) {
    if (!(step > 0.0)) throw ValidationError("x_step must be > 0", {"x_step"});
    const double width = std::max({params.w_gauss, 0.01, params.w_phot_blue, params.w_phot_red});
    const double extent = red_offset(params, doublet) + 1.0 + 4.0 * width;
    const auto n = static_cast<long>(std::ceil(extent / step));
    FrequencyGrid grid;
    grid.lambda_ref = doublet.lambda_blue;
    grid.v_inf = params.v_inf;
    grid.x.reserve(2 * n + 1);
    for (long i = -n; i <= n; ++i) grid.x.push_back(static_cast<double>(i) * step);
    return grid;
}

std::vector<double> FrequencyGrid::wavelengths() const {
    std::vector<double> out(x.size());
    std::transform(x.begin(), x.end(), out.begin(), [this](double xi) { return wavelength_of(xi); });
    return out;
}

RayQuadrature RayQuadrature::make(const WindLawParams& params, const GridConfig& config) {
    params.validate();
    if (config.core_rays < 2 || config.halo_rays < 3 || config.z_samples < 64)
        throw ValidationError("quadrature too coarse (core_rays >= 2, halo_rays >= 3, z_samples >= 64)",
                              {"core_rays", "halo_rays", "z_samples"});
    RayQuadrature q;
    q.z_samples_per_ray = config.z_samples;
    q.w_floor = config.w_floor;
    q.occultation = config.occultation;
    const double r_w1 = params.w1 < 1.0 ? radius_at_speed(params.w1, params) : config.r_cap;
    q.p_max = std::min(r_w1, config.r_cap);
    if (!(q.p_max > 1.0)) throw ValidationError("outer wind radius must exceed 1", {"w1"}, true);

    const auto gl = quad::gauss_legendre(config.core_rays, 0.0, 1.0);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        q.p_core.push_back(std::sqrt(gl.nodes[i]));
        q.core_weights.push_back(gl.weights[i]);
    }

    const double span = q.p_max - 1.0;
    const double d_min = std::min(1e-3, span / 10.0);
    const int n = config.halo_rays;
    q.p_halo.push_back(1.0);
    for (int i = 1; i < n - 1; ++i) {
        const double t = static_cast<double>(i - 1) / (n - 2);
        q.p_halo.push_back(1.0 + d_min * std::pow(span / d_min, t));
    }
    q.p_halo.push_back(q.p_max);
    return q;
}

double escape_probability(double tau_r, double sigma) {
    if (tau_r == 0.0) return 1.0;
    return directional_integral(tau_r, sigma, 0.0);
}

double penetration_probability(double tau_r, double sigma, double r) {
    const double mu_star = cone_edge(r);
    if (tau_r == 0.0) return 0.5 * (1.0 - mu_star);
    return 0.5 * directional_integral(tau_r, sigma, mu_star);
}

double sobolev_source(double tau_r, double sigma, double r, double i_star) {
    const double mu_star = cone_edge(r);
    if (tau_r == 0.0) return 0.5 * (1.0 - mu_star) * i_star;
    const double delta = directional_integral(tau_r, sigma, 0.0);
    if (!(delta > 0.0)) throw NumericError("escape probability vanished");
    // delta_c shares the integrand; only the lower limit differs.
    const double delta_c = 0.5 * (mu_star == 0.0 ? delta : directional_integral(tau_r, sigma, mu_star));
    return delta_c / delta * i_star;
}

double source_function(double r, const WindLawParams& params, Component component, double i_star) {
    if (!(r >= 1.0)) throw DomainError("source_function: r must be >= 1");
    if (params.epsilon != 0.0) throw ValidationError("epsilon must be 0", {"epsilon"});
    const WindModel model(params);
    const double w = model.velocity(r);
    const double dwdr = model.velocity_gradient(r);
    const double sigma = std::isfinite(dwdr) ? r * dwdr / w - 1.0 : kSigmaCap;
    return sobolev_source(model.tau_radial(w, component), sigma, r, i_star);
}

double photospheric_input(double x, const WindLawParams& params, const DoubletSpec& doublet) {
    const double xr = red_offset(params, doublet);
    const double db = (x / params.w_phot_blue);
    const double dr = ((x - xr) / params.w_phot_red);
    const double i = 1.0 - params.a_phot_blue * std::exp(-db * db) - params.a_phot_red * std::exp(-dr * dr);
    return std::max(0.0, i);
}

namespace {

// Samples along one straight piece of a ray, uniform in s = u + mu where
// u = mu w is the line-of-sight speed toward the observer and mu = z/r.
// g[c] is the line opacity per unit s excluding the intrinsic profile.
struct Segment {
    std::vector<double> s, u;
    std::array<std::vector<double>, 2> g, src;
};

struct RayPath {
    std::vector<Segment> segments;
    int star_before = -1;  // add I* before integrating this segment
};

class PathBuilder {
public:
    PathBuilder(const WindModel& model, const DoubletSpec& doublet, const RayQuadrature& quad)
        : model_(model), doublet_(doublet), quad_(quad), xr_(red_offset(model.params(), doublet)) {}

    RayPath build(double p) const {
        RayPath path;
        const double pmax = quad_.p_max;
        if (p >= pmax) return path;
        const double z_out = std::sqrt(std::max(0.0, pmax * pmax - p * p));
        if (p < 1.0) {
            const double z_star = std::sqrt(1.0 - p * p);
            if (!quad_.occultation) path.segments.push_back(segment(p, -z_out, -z_star));
            path.star_before = static_cast<int>(path.segments.size());
            path.segments.push_back(segment(p, z_star, z_out));
        } else {
            path.segments.push_back(segment(p, -z_out, z_out));
        }
        return path;
    }

private:
    double s_of(double p, double z) const {
        const double r = std::max(std::hypot(p, z), 1.0);
        const double mu = z / r;
        return mu * model_.velocity(r) + mu;
    }

    Segment segment(double p, double za, double zb) const {
        const int n = quad_.z_samples_per_ray;
        Segment seg;
        seg.s.resize(n);
        seg.u.resize(n);
        for (auto& v : seg.g) v.resize(n);
        for (auto& v : seg.src) v.resize(n);
        const double sa = s_of(p, za);
        const double sb = s_of(p, zb);
        double lo = za;
        for (int k = 0; k < n; ++k) {
            double z;
            if (k == 0) {
                z = za;
            } else if (k == n - 1) {
                z = zb;
            } else {
                const double target = sa + (sb - sa) * k / (n - 1);
                double a = lo, b = zb;
                for (int it = 0; it < 200 && b - a > 1e-15 * (1.0 + std::abs(b)); ++it) {
                    const double m = 0.5 * (a + b);
                    (s_of(p, m) < target ? a : b) = m;
                }
                z = 0.5 * (a + b);
                lo = z;
            }
            fill(seg, k, p, z);
        }
        return seg;
    }

    void fill(Segment& seg, int k, double p, double z) const {
        const auto& prm = model_.params();
        const double r = std::max(std::hypot(p, z), 1.0 + 1e-12);
        const double mu = z / r;
        const double w = model_.velocity(r);
        const double dwdr = model_.velocity_gradient(r);
        seg.s[k] = mu * w + mu;
        seg.u[k] = mu * w;
        // dz/ds Jacobian times dw/dr; the ratio stays finite where dw/dr blows up (beta < 1 at r = 1).
        double jac;
        const double denom = (w / r) * (1.0 - mu * mu) + mu * mu * dwdr + p * p / (r * r * r);
        if (!std::isfinite(dwdr)) {
            jac = 1.0 / (mu * mu);
        } else if (denom > 0.0) {
            jac = dwdr / denom;
        } else {
            jac = mu != 0.0 ? 1.0 / (mu * mu) : 0.0;
        }
        const double sigma = std::isfinite(dwdr) ? r * dwdr / w - 1.0 : kSigmaCap;
        for (int c = 0; c < 2; ++c) {
            const auto comp = c == 0 ? Component::blue : Component::red;
            const double tau = model_.tau_radial(std::max(w, prm.w0), comp);
            seg.g[c][k] = tau * jac;
            if (tau > 0.0) {
                const double xc = c == 0 ? 0.0 : xr_;
                const double i_star = photospheric_input(xc - w, prm, doublet_);
                seg.src[c][k] = sobolev_source(tau, sigma, r, i_star);
            } else {
                seg.src[c][k] = 0.0;
            }
        }
    }

    const WindModel& model_;
    const DoubletSpec& doublet_;
    const RayQuadrature& quad_;
    double xr_;
};

class RayIntegrator {
public:
    RayIntegrator(const WindLawParams& params, const DoubletSpec& doublet, const RayQuadrature& quad)
        : params_(params), doublet_(doublet), xr_(red_offset(params, doublet)),
          width_(std::max(params.w_gauss, quad.w_floor)), norm_(std::numbers::inv_sqrtpi / width_) {}

    double integrate(const RayPath& path, double x, double p) const {
        double intensity = 0.0;
        for (std::size_t i = 0; i < path.segments.size(); ++i) {
            if (static_cast<int>(i) == path.star_before) intensity += photospheric_input(x, params_, doublet_);
            intensity = march(path.segments[i], x, intensity);
        }
        if (path.segments.empty() && path.star_before >= 0) intensity = photospheric_input(x, params_, doublet_);
        if (!std::isfinite(intensity))
            throw NumericError("non-finite intensity on ray p=" + std::to_string(p) + " x=" + std::to_string(x));
        return intensity;
    }

private:
    double profile(double arg) const {
        const double a = arg / width_;
        if (std::abs(a) > 6.0) return 0.0;
        return std::exp(-a * a) * norm_;
    }

    double march(const Segment& seg, double x, double intensity) const {
        const std::size_t n = seg.s.size();
        auto local = [&](std::size_t k, double& kappa, double& eta) {
            kappa = 0.0;
            eta = 0.0;
            for (int c = 0; c < 2; ++c) {
                if (seg.g[c][k] == 0.0) continue;
                // Material approaching the observer (u > 0) resonates blueward: x = x_c - u.
                const double xc = c == 0 ? 0.0 : xr_;
                const double op = seg.g[c][k] * profile(x - xc + seg.u[k]);
                kappa += op;
                eta += op * seg.src[c][k];
            }
        };
        double k_prev, e_prev;
        local(0, k_prev, e_prev);
        for (std::size_t k = 1; k < n; ++k) {
            double k_cur, e_cur;
            local(k, k_cur, e_cur);
            const double ds = seg.s[k] - seg.s[k - 1];
            const double dtau = 0.5 * (k_prev + k_cur) * ds;
            const double emit = 0.5 * (e_prev + e_cur) * ds;
            if (dtau > 1e-10) {
                const double att = std::exp(-dtau);
                intensity = intensity * att + emit / dtau * (1.0 - att);
            } else {
                intensity = intensity * (1.0 - dtau) + emit;
            }
            k_prev = k_cur;
            e_prev = e_cur;
        }
        return intensity;
    }

    const WindLawParams& params_;
    const DoubletSpec& doublet_;
    double xr_;
    double width_;
    double norm_;
};

}  // namespace

double formal_integrate_ray(double p, double x, const WindLawParams& params, const DoubletSpec& doublet,
                            const RayQuadrature& quad) {
    if (!(p >= 0.0)) throw DomainError("formal_integrate_ray: p must be >= 0");
    const WindModel model(params);
    doublet.validate();
    const PathBuilder builder(model, doublet, quad);
    const RayIntegrator integrator(params, doublet, quad);
    return integrator.integrate(builder.build(p), x, p);
}

SingleStarProfile single_star_profile(const WindLawParams& params, const DoubletSpec& doublet,
                                      const FrequencyGrid& grid, const RayQuadrature& quad, int threads) {
    const WindModel model(params);
    doublet.validate();
    for (std::size_t i = 1; i < grid.x.size(); ++i)
        if (!(grid.x[i] > grid.x[i - 1])) throw ContractError("frequency grid must be strictly increasing");

    const PathBuilder builder(model, doublet, quad);
    std::vector<RayPath> core(quad.p_core.size()), halo(quad.p_halo.size());
    for (std::size_t i = 0; i < core.size(); ++i) core[i] = builder.build(quad.p_core[i]);
    for (std::size_t i = 0; i < halo.size(); ++i) halo[i] = builder.build(quad.p_halo[i]);

    double weight_sum = 0.0;
    for (double w : quad.core_weights) weight_sum += w;

    const RayIntegrator integrator(params, doublet, quad);
    SingleStarProfile out;
    out.grid = grid;
    out.f_core.assign(grid.x.size(), 0.0);
    out.f_halo.assign(grid.x.size(), 0.0);
    out.f_total.assign(grid.x.size(), 0.0);

    detail::parallel_for(grid.x.size(), threads, [&](std::size_t j) {
        const double x = grid.x[j];
        double core_sum = 0.0;
        for (std::size_t i = 0; i < core.size(); ++i)
            core_sum += quad.core_weights[i] * integrator.integrate(core[i], x, quad.p_core[i]);
        // Trapezoid in p on [1, p_1]; beyond, nodes are geometric in p - 1 so
        // the trapezoid runs in ln(p - 1) on 2 p I (p - 1).
        const auto& ph = quad.p_halo;
        std::vector<double> dens(ph.size());
        for (std::size_t i = 0; i < ph.size(); ++i) dens[i] = 2.0 * ph[i] * integrator.integrate(halo[i], x, ph[i]);
        double halo_sum = 0.5 * (dens[0] + dens[1]) * (ph[1] - ph[0]);
        for (std::size_t i = 2; i < ph.size(); ++i) {
            const double a = ph[i - 1] - 1.0, b = ph[i] - 1.0;
            halo_sum += 0.5 * (dens[i - 1] * a + dens[i] * b) * std::log(b / a);
        }
        out.f_core[j] = core_sum / weight_sum;
        out.f_halo[j] = halo_sum / weight_sum;
        out.f_total[j] = out.f_core[j] + out.f_halo[j];
    });
    return out;
}

SingleStarProfile single_star_profile(const WindLawParams& params, const DoubletSpec& doublet,
                                      const GridConfig& config) {
    params.validate();
    doublet.validate();
    const auto grid = FrequencyGrid::covering(params, doublet, config.x_step);
    const auto quad = RayQuadrature::make(params, config);
    return single_star_profile(params, doublet, grid, quad, config.threads);
}

double equivalent_width(const std::vector<double>& x, const std::vector<double>& flux, double continuum) {
    if (x.size() != flux.size()) throw ContractError("equivalent_width: size mismatch");
    double ew = 0.0;
    for (std::size_t i = 1; i < x.size(); ++i)
        ew += 0.5 * ((continuum - flux[i - 1]) + (continuum - flux[i])) * (x[i] - x[i - 1]);
    return ew;
}

}  // namespace bsei
