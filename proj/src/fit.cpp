#include "bsei/fit.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <iomanip>

#include "bsei/errors.hpp"
#include "bsei/numfmt.hpp"
#include "parallel.hpp"

namespace bsei {

namespace {

struct Prepared {
    const ObservedSpectrum* source = nullptr;
    double phase = 0.0;
    std::vector<double> wavelength;  // inside the window
    std::vector<double> flux;        // normalized
    std::vector<double> sigma;       // normalized units
};

std::vector<Prepared> prepare(const FitContext& ctx, const std::vector<ObservedSpectrum>& observed) {
    if (observed.empty()) throw ContractError("fit needs at least one observed spectrum");
    if (!ctx.eclipses.empty() && ctx.eclipses.size() != observed.size())
        throw ContractError("eclipse states must match the observations one to one");
    ctx.window.validate();
    std::vector<Prepared> out;
    for (const auto& obs : observed) {
        obs.validate();
        Prepared p;
        p.source = &obs;
        p.phase = obs.phase ? *obs.phase : phase_fold(obs.hjd, ctx.orbit);
        const auto line = fit_continuum(obs, ctx.continuum_windows);
        ObservedSpectrum norm = obs;
        for (std::size_t i = 0; i < norm.flux.size(); ++i) norm.flux[i] = obs.flux[i] / line(obs.wavelength[i]);
        double sigma_const = 0.0;
        if (!ctx.sigma) {
            sigma_const = continuum_sigma(norm, ctx.continuum_windows);
            // Rounding noise alone means noise-free input; chi2 would be meaningless.
            if (!(sigma_const > 1e-9))
                throw ContractError("continuum scatter of " + obs.id + " is zero; supply sigma explicitly");
        } else if (!(*ctx.sigma > 0.0)) {
            throw ValidationError("sigma must be > 0", {"sigma"});
        }
        for (std::size_t i = 0; i < norm.flux.size(); ++i) {
            const double wl = norm.wavelength[i];
            if (wl < ctx.window.lambda_min || wl > ctx.window.lambda_max) continue;
            p.wavelength.push_back(wl);
            p.flux.push_back(norm.flux[i]);
            p.sigma.push_back(ctx.sigma ? *ctx.sigma / line(wl) : sigma_const);
        }
        if (p.wavelength.empty()) throw CoverageError("fit window contains no samples of " + obs.id);
        out.push_back(std::move(p));
    }
    return out;
}

FitReport score(const FitContext& ctx, const std::vector<Prepared>& prepared, const SingleStarProfile& f1,
                const SingleStarProfile& f2) {
    std::vector<std::size_t> order(prepared.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return prepared[a].phase < prepared[b].phase; });
    std::vector<PhasePoint> pts;
    for (auto i : order) pts.push_back({prepared[i].phase, ctx.eclipses.empty() ? EclipseState{} : ctx.eclipses[i]});
    const auto models = phase_sequence(f1, f2, ctx.orbit, pts, ctx.rule, 1);

    FitReport report;
    report.phases.resize(prepared.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
        const auto& p = prepared[order[k]];
        const auto g = compare(resample_model(models[k], p.wavelength), p.flux, p.sigma);
        report.phases[order[k]] = {p.phase, p.source->id, g.rms, g.chi2_reduced, g.n};
    }
    for (const auto& ph : report.phases) {
        report.aggregate += ph.chi2_reduced / static_cast<double>(report.phases.size());
        report.aggregate_rms += ph.rms / static_cast<double>(report.phases.size());
    }
    return report;
}

const std::vector<std::string>& free_names() {
    static const std::vector<std::string> names{"w0",         "beta",       "w_gauss",     "w1",
                                                "alpha1",     "alpha2",     "t_tot_blue",  "t_tot_red",
                                                "a_phot_blue", "a_phot_red", "w_phot_blue", "w_phot_red",
                                                "v_inf"};
    return names;
}

double* field(WindLawParams& p, const std::string& name) {
    if (name == "w0") return &p.w0;
    if (name == "beta") return &p.beta;
    if (name == "w_gauss") return &p.w_gauss;
    if (name == "w1") return &p.w1;
    if (name == "alpha1") return &p.alpha1;
    if (name == "alpha2") return &p.alpha2;
    if (name == "t_tot_blue") return &p.t_tot_blue;
    if (name == "t_tot_red") return &p.t_tot_red;
    if (name == "a_phot_blue") return &p.a_phot_blue;
    if (name == "a_phot_red") return &p.a_phot_red;
    if (name == "w_phot_blue") return &p.w_phot_blue;
    if (name == "w_phot_red") return &p.w_phot_red;
    if (name == "v_inf") return &p.v_inf;
    std::string known;
    for (const auto& n : free_names()) known += (known.empty() ? "" : ", ") + n;
    throw ValidationError("unknown wind parameter '" + name + "' (expected one of " + known + ")", {name});
}

}  // namespace

std::vector<double> resample_model(const BseiProfile& model, const std::vector<double>& wavelength) {
    const double continuum = model.w1 + model.w2;
    const auto& xs = model.wavelength;
    std::vector<double> out(wavelength.size(), continuum);
    for (std::size_t i = 0; i < wavelength.size(); ++i) {
        const double a = wavelength[i];
        if (xs.empty() || a < xs.front() || a > xs.back()) continue;
        const auto hi = static_cast<std::size_t>(std::upper_bound(xs.begin(), xs.end(), a) - xs.begin());
        if (hi == xs.size()) {
            out[i] = model.flux.back();
            continue;
        }
        const double t = (a - xs[hi - 1]) / (xs[hi] - xs[hi - 1]);
        out[i] = model.flux[hi - 1] + t * (model.flux[hi] - model.flux[hi - 1]);
    }
    return out;
}

Goodness compare(const std::vector<double>& model, const std::vector<double>& observed, const std::vector<double>& sigma) {
    if (model.size() != observed.size() || sigma.size() != observed.size())
        throw ContractError("goodness: model, observed and sigma lengths differ");
    if (observed.empty()) throw ContractError("goodness: no samples in window");
    double ss = 0.0, chi = 0.0;
    for (std::size_t i = 0; i < observed.size(); ++i) {
        if (!(sigma[i] > 0.0)) throw ValidationError("sigma must be > 0", {"sigma"});
        const double d = model[i] - observed[i];
        ss += d * d;
        chi += (d / sigma[i]) * (d / sigma[i]);
    }
    const auto n = static_cast<double>(observed.size());
    return {std::sqrt(ss / n), chi / n, observed.size()};
}

double continuum_sigma(const ObservedSpectrum& normalized, const std::vector<Bandpass>& continuum_windows) {
    std::vector<double> dev;
    for (const auto& w : continuum_windows)
        for (std::size_t i = 0; i < normalized.wavelength.size(); ++i)
            if (normalized.wavelength[i] >= w.lambda_min && normalized.wavelength[i] <= w.lambda_max)
                dev.push_back(normalized.flux[i] - 1.0);
    if (dev.size() < 2) throw ContractError("need at least 2 continuum samples to estimate sigma");
    const double mean = std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
    double ss = 0.0;
    for (double d : dev) ss += (d - mean) * (d - mean);
    return std::sqrt(ss / static_cast<double>(dev.size() - 1));
}

Goodness goodness(const BseiProfile& model, const ObservedSpectrum& observed, const Bandpass& window,
                  std::optional<double> sigma, const std::vector<Bandpass>& continuum_windows) {
    window.validate();
    const double s = sigma ? *sigma : continuum_sigma(observed, continuum_windows);
    if (!(s > 0.0)) throw ValidationError("sigma must be > 0", {"sigma"});
    std::vector<double> wl, obs;
    for (std::size_t i = 0; i < observed.wavelength.size(); ++i)
        if (observed.wavelength[i] >= window.lambda_min && observed.wavelength[i] <= window.lambda_max) {
            wl.push_back(observed.wavelength[i]);
            obs.push_back(observed.flux[i]);
        }
    if (wl.empty()) throw CoverageError("goodness window contains no observed samples");
    return compare(resample_model(model, wl), obs, std::vector<double>(wl.size(), s));
}

std::vector<std::pair<double, double>> phase_quality_profile(const FitReport& report) {
    if (report.phases.size() < 2) throw ContractError("phase quality profile needs at least 2 phases");
    std::vector<std::pair<double, double>> out;
    for (const auto& p : report.phases) out.emplace_back(p.phase, p.rms);
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
    return out;
}

std::string format_fit_csv(const FitReport& report) {
    std::string out = "phase,rms,chi2\n";
    for (const auto& p : report.phases)
        out += numfmt::sig(p.phase, 7) + "," + numfmt::sig(p.rms, 7) + "," + numfmt::sig(p.chi2_reduced, 7) + "\n";
    return out;
}

Bandpass default_fit_window(const DoubletSpec& doublet, double v_inf) {
    const double b = v_inf / kSpeedOfLightKms;
    return {"fit", doublet.lambda_blue * (1.0 - 1.3 * b), doublet.lambda_red * (1.0 + 1.3 * b), BandKind::wind};
}

std::vector<Bandpass> default_continuum_windows(const DoubletSpec& doublet, double v_inf) {
    const double b = v_inf / kSpeedOfLightKms;
    return {{"blue-continuum", doublet.lambda_blue * (1.0 - 1.9 * b), doublet.lambda_blue * (1.0 - 1.5 * b),
             BandKind::continuum},
            {"red-continuum", doublet.lambda_red * (1.0 + 1.5 * b), doublet.lambda_red * (1.0 + 1.9 * b),
             BandKind::continuum}};
}

FitReport evaluate_fit(const FitContext& context, const std::vector<ObservedSpectrum>& observed) {
    context.orbit.validate();
    const auto prepared = prepare(context, observed);
    const auto f1 = single_star_profile(context.params1, context.doublet, context.grid);
    const auto f2 = context.params2 == context.params1 ? f1 : single_star_profile(context.params2, context.doublet, context.grid);
    return score(context, prepared, f1, f2);
}

GridSearchResult grid_search(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<std::pair<double, double>>& bounds, const GridSearchOptions& options) {
    if (bounds.empty()) throw ContractError("grid search needs at least one axis");
    if (options.points < 2 || options.rounds < 0 || !(options.shrink > 1.0))
        throw ValidationError("grid search needs points >= 2, rounds >= 0, shrink > 1", {"points", "rounds", "shrink"});
    for (const auto& [lo, hi] : bounds)
        if (!(std::isfinite(lo) && std::isfinite(hi) && lo <= hi)) throw ValidationError("bad search bounds", {"bounds"});

    const std::size_t dims = bounds.size();
    std::map<std::vector<double>, double> memo;
    GridSearchResult res;
    auto better = [](double s, const std::vector<double>& x, double best, const std::vector<double>& bx) {
        return s < best || (s == best && x < bx);
    };

    std::vector<double> incumbent(dims);
    for (std::size_t a = 0; a < dims; ++a) incumbent[a] = 0.5 * (bounds[a].first + bounds[a].second);
    res.best = incumbent;
    res.score = objective(incumbent);
    memo[incumbent] = res.score;
    res.evaluations = 1;
    if (!std::isfinite(res.score)) res.score = std::numeric_limits<double>::infinity();

    std::vector<double> width(dims);
    for (std::size_t a = 0; a < dims; ++a) width[a] = bounds[a].second - bounds[a].first;
    res.final_step.assign(dims, 0.0);

    for (int round = 0; round <= options.rounds; ++round) {
        for (std::size_t a = 0; a < dims; ++a) {
            const double w = round == 0 ? width[a] : width[a] / std::pow(options.shrink, round);
            double lo = round == 0 ? bounds[a].first : res.best[a] - 0.5 * w;
            lo = std::clamp(lo, bounds[a].first, bounds[a].second - w);
            const double step = w / (options.points - 1);
            res.final_step[a] = step;

            std::vector<std::vector<double>> pts;
            for (int k = 0; k < options.points; ++k) {
                auto x = res.best;
                x[a] = k == options.points - 1 ? lo + w : lo + k * step;
                pts.push_back(std::move(x));
            }
            std::vector<double> scores(pts.size(), 0.0);
            std::vector<char> known(pts.size(), 0);
            for (std::size_t k = 0; k < pts.size(); ++k)
                if (auto it = memo.find(pts[k]); it != memo.end()) {
                    scores[k] = it->second;
                    known[k] = 1;
                }
            detail::parallel_for(pts.size(), options.threads, [&](std::size_t k) {
                if (!known[k]) scores[k] = objective(pts[k]);
            });
            // Full evaluation first, then a sequential argmin: schedule independent.
            for (std::size_t k = 0; k < pts.size(); ++k) {
                if (!known[k]) {
                    ++res.evaluations;
                    memo[pts[k]] = scores[k];
                }
                const double s = std::isfinite(scores[k]) ? scores[k] : std::numeric_limits<double>::infinity();
                if (better(s, pts[k], res.score, res.best)) {
                    res.score = s;
                    res.best = pts[k];
                }
            }
        }
    }
    return res;
}

std::vector<ObservedSpectrum> synthesize_observations(const WindLawParams& params1, const WindLawParams& params2,
                                                      const DoubletSpec& doublet, const OrbitalSolution& orbit,
                                                      const std::vector<PhasePoint>& phases, const GridConfig& grid,
                                                      const SynthOptions& options) {
    if (!(options.sigma >= 0.0)) throw ValidationError("sigma must be >= 0", {"sigma"});
    if (!(options.step > 0.0) || !(options.extent > 0.0)) throw ValidationError("step and extent must be > 0", {"step", "extent"});
    const auto models = phase_sequence(params1, params2, doublet, orbit, phases, grid);
    const double b = options.extent * std::max(params1.v_inf, params2.v_inf) / kSpeedOfLightKms;
    const double lo = doublet.lambda_blue * (1.0 - b), hi = doublet.lambda_red * (1.0 + b);
    std::vector<double> wl;
    for (long i = 0; lo + static_cast<double>(i) * options.step <= hi; ++i) wl.push_back(lo + static_cast<double>(i) * options.step);

    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> noise(0.0, 1.0);
    std::vector<ObservedSpectrum> out;
    for (std::size_t k = 0; k < models.size(); ++k) {
        ObservedSpectrum s;
        std::ostringstream id;
        id << "obs" << std::setw(3) << std::setfill('0') << k;
        s.id = id.str();
        s.hjd = orbit.t0 + phases[k].phase * orbit.period_days;
        s.wavelength = wl;
        s.flux = resample_model(models[k], wl);
        for (std::size_t i = 0; i < wl.size(); ++i) {
            const double level = 1.0 + options.continuum_slope * (wl[i] - doublet.lambda_blue);
            s.flux[i] = std::max(0.0, (s.flux[i] + options.sigma * noise(rng)) * level);
        }
        out.push_back(std::move(s));
    }
    return out;
}

double get_param(const WindLawParams& params, const std::string& name) {
    auto copy = params;
    return *field(copy, name);
}

void set_param(WindLawParams& params, const std::string& name, double value) { *field(params, name) = value; }

FitResult grid_refine(const std::vector<FreeParam>& free, const std::vector<ObservedSpectrum>& observed,
                      const FitContext& context, const GridSearchOptions& options) {
    if (free.empty() || free.size() > 4) throw ContractError("grid_refine takes 1 to 4 free parameters");
    context.orbit.validate();
    context.doublet.validate();
    std::vector<std::pair<double, double>> bounds;
    for (const auto& f : free) {
        if (!(f.lo <= f.hi)) throw ValidationError("bounds of " + f.name + " must satisfy lo <= hi", {f.name});
        for (double v : {f.lo, f.hi}) {
            auto p = context.params1;
            set_param(p, f.name, v);
            p.validate();
        }
        bounds.emplace_back(f.lo, f.hi);
    }
    const auto prepared = prepare(context, observed);

    auto apply = [&](const std::vector<double>& x) {
        auto p1 = context.params1, p2 = context.params2;
        for (std::size_t i = 0; i < free.size(); ++i) {
            if (free[i].target != FitTarget::star2) set_param(p1, free[i].name, x[i]);
            if (free[i].target != FitTarget::star1) set_param(p2, free[i].name, x[i]);
        }
        return std::pair{p1, p2};
    };
    auto inner_grid = context.grid;
    inner_grid.threads = 1;
    // Star 2 is recomputed only when one of its parameters is free.
    const bool star2_free = std::any_of(free.begin(), free.end(), [](const auto& f) { return f.target != FitTarget::star1; });
    const auto fixed2 = star2_free ? SingleStarProfile{} : single_star_profile(context.params2, context.doublet, inner_grid);

    auto report_for = [&](const std::vector<double>& x) {
        const auto [p1, p2] = apply(x);
        const auto f1 = single_star_profile(p1, context.doublet, inner_grid);
        if (!star2_free) return score(context, prepared, f1, fixed2);
        const auto f2 = p2 == p1 ? f1 : single_star_profile(p2, context.doublet, inner_grid);
        return score(context, prepared, f1, f2);
    };

    GridSearchOptions opts = options;
    if (opts.threads == 0) opts.threads = context.grid.threads;
    const auto found = grid_search([&](const std::vector<double>& x) { return report_for(x).aggregate; }, bounds, opts);

    FitResult out;
    std::tie(out.params1, out.params2) = apply(found.best);
    out.values = found.best;
    out.final_step = found.final_step;
    out.report = report_for(found.best);
    out.evaluations = found.evaluations;
    return out;
}

}  // namespace bsei
