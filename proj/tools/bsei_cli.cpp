// bsei: command-line front end.
// Exit codes: 0 ok, 2 validation/parse/contract, 3 I/O, 4 numeric failure.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <iostream>

#include "bsei/errors.hpp"
#include "bsei/fit.hpp"
#include "bsei/numfmt.hpp"
#include "bsei/serialization.hpp"
#include "bsei/service.hpp"

namespace fs = std::filesystem;
using namespace bsei;

namespace {

std::pair<double, double> parse_range(const std::string& text, const std::string& flag) {
    const auto colon = text.find(':');
    if (colon == std::string::npos) throw ValidationError(flag + " expects LO:HI, got '" + text + "'", {flag});
    try {
        return {numfmt::parse_double(text.substr(0, colon)), numfmt::parse_double(text.substr(colon + 1))};
    } catch (const std::invalid_argument&) {
        throw ValidationError(flag + " expects LO:HI, got '" + text + "'", {flag});
    }
}

std::vector<Bandpass> windows_of(const std::vector<std::string>& specs, BandKind kind, const std::string& flag) {
    std::vector<Bandpass> out;
    for (const auto& s : specs) {
        const auto [lo, hi] = parse_range(s, flag);
        Bandpass b{flag, lo, hi, kind};
        b.validate();
        out.push_back(b);
    }
    return out;
}

// Directories expand to their *.csv files in name order.
std::vector<ObservedSpectrum> load_all(const std::vector<std::string>& inputs) {
    std::vector<fs::path> files;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> found;
            for (const auto& e : fs::directory_iterator(in))
                if (e.is_regular_file() && e.path().extension() == ".csv") found.push_back(e.path());
            std::sort(found.begin(), found.end());
            files.insert(files.end(), found.begin(), found.end());
        } else {
            files.emplace_back(in);
        }
    }
    if (files.empty()) throw ContractError("no input spectra");
    std::vector<ObservedSpectrum> out;
    for (const auto& f : files) {
        try {
            out.push_back(load_spectrum(f));
        } catch (const ParseError& e) {
            throw ParseError(f.string() + ": " + e.what(), 0);
        }
    }
    return out;
}

GridConfig grid_for(int res, int threads) {
    if (res < 1) throw ValidationError("--grid-res must be >= 1", {"grid-res"});
    GridConfig g = GridConfig{}.refined(res);
    g.threads = threads;
    return g;
}

std::vector<PhasePoint> even_phases(int n) {
    if (n < 1) throw ValidationError("--n-phases must be >= 1", {"n-phases"});
    std::vector<PhasePoint> out;
    for (int i = 0; i < n; ++i) out.push_back({static_cast<double>(i) / n, {}});
    return out;
}

void ensure_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

FitTarget target_of(const std::string& s) {
    if (s == "1" || s == "star1") return FitTarget::star1;
    if (s == "2" || s == "star2") return FitTarget::star2;
    if (s == "both") return FitTarget::both;
    throw ValidationError("fit target must be star1, star2 or both", {"free"});
}

// NAME:LO:HI[:TARGET]
FreeParam free_of(const std::string& spec) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto c = spec.find(':', start);
        parts.push_back(spec.substr(start, c - start));
        if (c == std::string::npos) break;
        start = c + 1;
    }
    if (parts.size() < 3 || parts.size() > 4) throw ValidationError("--free expects NAME:LO:HI[:TARGET]", {"free"});
    FreeParam f;
    f.name = parts[0];
    try {
        f.lo = numfmt::parse_double(parts[1]);
        f.hi = numfmt::parse_double(parts[2]);
    } catch (const std::invalid_argument&) {
        throw ValidationError("--free bounds must be numbers", {"free"});
    }
    if (parts.size() == 4) f.target = target_of(parts[3]);
    return f;
}

std::string target_name(FitTarget t) {
    return t == FitTarget::star1 ? "star1" : t == FitTarget::star2 ? "star2" : "both";
}

int report_error(const std::string& kind, const std::string& what, int code) {
    std::cerr << "bsei: " << kind << ": " << what << "\n";
    return code;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Binary stellar-wind line profile synthesis and fitting"};
    app.require_subcommand(0, 1);
    bool show_version = false;
    app.add_flag("--version", show_version, "Print version and numeric-config fingerprint");
    int threads = 0;
    app.add_option("--threads", threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);

    // profile
    auto* prof = app.add_subcommand("profile", "Single-star profile table plus laws.csv");
    std::string p_params, p_doublet, p_out;
    int grid_res = 1;
    prof->add_option("--params", p_params, "WindLawParams JSON")->required();
    prof->add_option("--doublet", p_doublet, "DoubletSpec JSON")->required();
    prof->add_option("--out", p_out, "Output table")->required();
    prof->add_option("--grid-res", grid_res, "Resolution multiplier");

    // bsei
    auto* seq = app.add_subcommand("bsei", "Phase sequence of composite profiles");
    std::string s_p1, s_p2, s_orbit, s_phases, s_out, s_doublet, s_rule = "adopted";
    seq->add_option("--params1", s_p1)->required();
    seq->add_option("--params2", s_p2)->required();
    seq->add_option("--orbit", s_orbit)->required();
    seq->add_option("--phases", s_phases, "JSON array of phases or {phase, eclipse} objects")->required();
    seq->add_option("--out", s_out, "Output directory")->required();
    seq->add_option("--doublet", s_doublet, "DoubletSpec JSON (default C IV)");
    seq->add_option("--grid-res", grid_res);
    seq->add_option("--rule", s_rule, "Eclipse weight rule")->check(CLI::IsMember({"adopted", "printed"}));

    // lightcurve
    auto* lcc = app.add_subcommand("lightcurve", "Band light curve from observed spectra");
    std::string l_orbit, l_band, l_out, l_kind = "continuum";
    std::vector<std::string> l_inputs, l_mask;
    lcc->add_option("--orbit", l_orbit)->required();
    lcc->add_option("--band", l_band, "LO:HI in Angstrom")->required();
    lcc->add_option("--kind", l_kind)->check(CLI::IsMember({"continuum", "wind"}));
    lcc->add_option("--out-of-eclipse", l_mask, "Phase window FROM:TO used as the anchor (repeatable)");
    lcc->add_option("--out", l_out, "Output CSV")->required();
    lcc->add_option("inputs", l_inputs, "Spectrum CSV files or directories")->required();

    // normalize
    auto* norm = app.add_subcommand("normalize", "Divide spectra by a straight continuum");
    std::vector<std::string> n_windows, n_inputs;
    std::string n_out;
    norm->add_option("--window", n_windows, "Continuum window LO:HI (at least 2)")->required();
    norm->add_option("--out", n_out, "Output directory")->required();
    norm->add_option("inputs", n_inputs)->required();

    // fit
    auto* fitc = app.add_subcommand("fit", "Grid refinement of wind parameters against observations");
    std::string f_p1, f_p2, f_orbit, f_out, f_csv, f_doublet, f_fit_window;
    std::vector<std::string> f_free, f_windows, f_inputs;
    std::optional<double> f_sigma;
    int f_points = 9, f_rounds = 3;
    fitc->add_option("--params1", f_p1)->required();
    fitc->add_option("--params2", f_p2)->required();
    fitc->add_option("--orbit", f_orbit)->required();
    fitc->add_option("--free", f_free, "NAME:LO:HI[:star1|star2|both] (repeatable, at most 4)")->required();
    fitc->add_option("--out", f_out, "Result JSON")->required();
    fitc->add_option("--csv", f_csv, "Per-phase phase,rms,chi2 table");
    fitc->add_option("--sigma", f_sigma, "Noise in raw flux units (default: continuum scatter)");
    fitc->add_option("--window", f_windows, "Continuum window LO:HI (repeatable; default from v_inf)");
    fitc->add_option("--fit-window", f_fit_window, "Comparison window LO:HI (default from v_inf)");
    fitc->add_option("--doublet", f_doublet);
    fitc->add_option("--grid-res", grid_res);
    fitc->add_option("--points", f_points)->check(CLI::Range(2, 101));
    fitc->add_option("--rounds", f_rounds)->check(CLI::Range(0, 10));
    fitc->add_option("inputs", f_inputs)->required();

    // synth-obs
    auto* syn = app.add_subcommand("synth-obs", "Noisy synthetic observations of a BSEI sequence");
    std::string y_p1, y_p2, y_orbit, y_phases, y_out, y_doublet;
    int y_n = 20;
    SynthOptions y_opts;
    syn->add_option("--params1", y_p1)->required();
    syn->add_option("--params2", y_p2)->required();
    syn->add_option("--orbit", y_orbit)->required();
    syn->add_option("--phases", y_phases, "JSON phase list (default: --n-phases evenly spaced)");
    syn->add_option("--n-phases", y_n);
    syn->add_option("--seed", y_opts.seed)->required();
    syn->add_option("--sigma", y_opts.sigma)->required();
    syn->add_option("--step", y_opts.step, "Sampling in Angstrom");
    syn->add_option("--slope", y_opts.continuum_slope, "Continuum tilt per Angstrom");
    syn->add_option("--out", y_out, "Output directory")->required();
    syn->add_option("--doublet", y_doublet);
    syn->add_option("--grid-res", grid_res);

    // serve
    auto* srv = app.add_subcommand("serve", "Run the HTTP API");
    std::string v_host = "127.0.0.1", v_session;
    int v_port = 8080;
    srv->add_option("--host", v_host);
    srv->add_option("--port", v_port)->check(CLI::Range(1, 65535));
    srv->add_option("--session", v_session, "JSON session file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (show_version) {
            std::cout << "bsei " << kVersion << " fingerprint " << build_fingerprint() << "\n";
            return 0;
        }
        auto doublet_or_default = [](const std::string& path) {
            return path.empty() ? DoubletSpec{} : doublet_from_json(read_json(path));
        };

        if (*prof) {
            const auto params = params_from_json(read_json(p_params));
            const auto doublet = doublet_from_json(read_json(p_doublet));
            const auto grid = grid_for(grid_res, threads);
            const auto f = single_star_profile(params, doublet, grid);
            const fs::path out(p_out);
            if (out.has_parent_path()) ensure_dir(out.parent_path());
            write_text(out, format_profile_table(f, params, doublet, grid));
            write_text(out.parent_path() / "laws.csv", format_laws_csv(params, grid));
        } else if (*seq) {
            const auto p1 = params_from_json(read_json(s_p1));
            const auto p2 = params_from_json(read_json(s_p2));
            const auto orbit = orbit_from_json(read_json(s_orbit));
            const auto phases = phases_from_json(read_json(s_phases));
            const auto doublet = doublet_or_default(s_doublet);
            const auto grid = grid_for(grid_res, threads);
            const auto rule = weight_rule_from_string(s_rule);
            const auto profiles = phase_sequence(p1, p2, doublet, orbit, phases, grid, rule);
            export_phase_sequence(profiles, phases,
                                  {{"params1", to_json(p1)},
                                   {"params2", to_json(p2)},
                                   {"orbit", to_json(orbit)},
                                   {"doublet", to_json(doublet)},
                                   {"grid", to_json(grid)},
                                   {"rule", s_rule}},
                                  s_out);
        } else if (*lcc) {
            const auto orbit = orbit_from_json(read_json(l_orbit));
            const auto [lo, hi] = parse_range(l_band, "band");
            Bandpass band{l_kind + "-band", lo, hi, l_kind == "wind" ? BandKind::wind : BandKind::continuum};
            band.validate();
            std::optional<std::vector<PhaseWindow>> mask;
            if (!l_mask.empty()) {
                mask.emplace();
                for (const auto& m : l_mask) {
                    const auto [from, to] = parse_range(m, "out-of-eclipse");
                    mask->push_back({from, to});
                }
            }
            const auto curve = extract_light_curve(load_all(l_inputs), band, orbit, mask);
            const fs::path out(l_out);
            if (out.has_parent_path()) ensure_dir(out.parent_path());
            write_text(out, format_light_curve(curve));
        } else if (*norm) {
            const auto windows = windows_of(n_windows, BandKind::continuum, "window");
            ensure_dir(n_out);
            for (const auto& s : load_all(n_inputs)) export_spectrum(normalize_spectrum(s, windows), fs::path(n_out) / (s.id + ".csv"));
        } else if (*fitc) {
            FitContext ctx;
            ctx.params1 = params_from_json(read_json(f_p1));
            ctx.params2 = params_from_json(read_json(f_p2));
            ctx.orbit = orbit_from_json(read_json(f_orbit));
            ctx.doublet = doublet_or_default(f_doublet);
            ctx.grid = grid_for(grid_res, threads);
            ctx.sigma = f_sigma;
            const double v = std::max(ctx.params1.v_inf, ctx.params2.v_inf);
            ctx.continuum_windows =
                f_windows.empty() ? default_continuum_windows(ctx.doublet, v) : windows_of(f_windows, BandKind::continuum, "window");
            if (f_fit_window.empty()) {
                ctx.window = default_fit_window(ctx.doublet, v);
            } else {
                const auto [lo, hi] = parse_range(f_fit_window, "fit-window");
                ctx.window = {"fit", lo, hi, BandKind::wind};
            }
            std::vector<FreeParam> free;
            for (const auto& f : f_free) free.push_back(free_of(f));
            GridSearchOptions opts;
            opts.points = f_points;
            opts.rounds = f_rounds;
            opts.threads = threads;
            const auto res = grid_refine(free, load_all(f_inputs), ctx, opts);
            json free_j = json::array();
            for (std::size_t i = 0; i < free.size(); ++i)
                free_j.push_back({{"name", free[i].name},
                                  {"lo", free[i].lo},
                                  {"hi", free[i].hi},
                                  {"target", target_name(free[i].target)},
                                  {"value", res.values[i]},
                                  {"final_step", res.final_step[i]}});
            const json out{{"free", free_j},
                           {"params1", to_json(res.params1)},
                           {"params2", to_json(res.params2)},
                           {"evaluations", res.evaluations},
                           {"report", to_json(res.report)}};
            const fs::path path(f_out);
            if (path.has_parent_path()) ensure_dir(path.parent_path());
            write_text(path, out.dump(2) + "\n");
            if (!f_csv.empty()) write_text(f_csv, format_fit_csv(res.report));
            for (const auto& f : free_j) std::cout << f["name"].get<std::string>() << " = " << f["value"].dump() << "\n";
        } else if (*syn) {
            const auto p1 = params_from_json(read_json(y_p1));
            const auto p2 = params_from_json(read_json(y_p2));
            const auto orbit = orbit_from_json(read_json(y_orbit));
            const auto phases = y_phases.empty() ? even_phases(y_n) : phases_from_json(read_json(y_phases));
            const auto obs =
                synthesize_observations(p1, p2, doublet_or_default(y_doublet), orbit, phases, grid_for(grid_res, threads), y_opts);
            ensure_dir(y_out);
            for (const auto& s : obs) export_spectrum(s, fs::path(y_out) / (s.id + ".csv"));
        } else if (*srv) {
            ServiceOptions opts;
            if (!v_session.empty()) opts.session_file = v_session;
            opts.compute_threads = threads;
            std::cerr << "bsei: serving on http://" << v_host << ":" << v_port << "\n";
            if (!serve(v_host, v_port, opts)) throw IoError("cannot bind " + v_host + ":" + std::to_string(v_port));
        } else {
            std::cout << app.help();
        }
    } catch (const ValidationError& e) {
        std::string fields;
        for (const auto& f : e.fields()) fields += (fields.empty() ? "" : ", ") + f;
        return report_error("invalid input", std::string(e.what()) + (fields.empty() ? "" : " [fields: " + fields + "]"), 2);
    } catch (const ParseError& e) {
        return report_error("parse error", e.what(), 2);
    } catch (const ContractError& e) {
        return report_error("invalid request", e.what(), 2);
    } catch (const CoverageError& e) {
        return report_error("coverage", e.what(), 2);
    } catch (const DomainError& e) {
        return report_error("domain", e.what(), 2);
    } catch (const IoError& e) {
        return report_error("i/o", e.what(), 3);
    } catch (const fs::filesystem_error& e) {
        return report_error("i/o", e.what(), 3);
    } catch (const NumericError& e) {
        return report_error("numeric failure", e.what(), 4);
    }
    return 0;
}
