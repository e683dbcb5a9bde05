// Acceptance suite: one PASS/FAIL line per criterion, tolerances and time
// limits pinned below. Exit status is non-zero if any criterion fails.

#include <httplib.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <sys/wait.h>
#include <thread>

#include "bsei/binary_synthesis.hpp"
#include "bsei/errors.hpp"
#include "bsei/serialization.hpp"
#include "bsei/service.hpp"
#include "oracles.hpp"
#include "reference_sets.hpp"

using namespace bsei;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;
const fs::path kWork = fs::temp_directory_path() / "bsei_acceptance";

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void check(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << " [failed: " << what << "]";
        }
    }
};

int failures = 0;

void criterion(int n, const std::string& title, double limit_s, const std::function<void(Outcome&)>& body) {
    Outcome o;
    const auto t0 = std::chrono::steady_clock::now();
    try {
        body(o);
    } catch (const std::exception& e) {
        o.pass = false;
        o.detail << " [exception: " << e.what() << "]";
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (secs > limit_s) {
        o.pass = false;
        o.detail << " [over time limit " << limit_s << " s]";
    }
    if (!o.pass) ++failures;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << n << " " << title << ":" << o.detail.str() << " (" << secs
              << " s)" << std::endl;
}

WindLawParams base(double w0, double beta) {
    auto p = refsets::thick_wind();
    p.w0 = w0;
    p.beta = beta;
    return p;
}

double max_abs_diff_on_common_x(const SingleStarProfile& a, const SingleStarProfile& b) {
    double worst = 0.0;
    std::size_t j = 0;
    for (std::size_t i = 0; i < a.grid.x.size(); ++i) {
        while (j < b.grid.x.size() && b.grid.x[j] < a.grid.x[i] - 1e-12) ++j;
        if (j == b.grid.x.size()) break;
        if (std::abs(b.grid.x[j] - a.grid.x[i]) > 1e-12) continue;
        worst = std::max(worst, std::abs(a.f_total[i] - b.f_total[j]));
    }
    return worst;
}

SingleStarProfile toy_profile(double depth, double trough_x, double emission, double peak_x) {
    SingleStarProfile p;
    p.grid = FrequencyGrid::covering(refsets::thick_wind(), DoubletSpec{}, 0.01);
    for (double x : p.grid.x) {
        const double a = (x - trough_x) / 0.15, b = (x - peak_x) / 0.2;
        p.f_core.push_back(1.0 - depth * std::exp(-a * a));
        p.f_halo.push_back(emission * std::exp(-b * b));
        p.f_total.push_back(p.f_core.back() + p.f_halo.back());
    }
    return p;
}

OrbitalSolution test_orbit() {
    OrbitalSolution o;
    o.period_days = 3.37;
    o.k1_kms = 180.0;
    o.k2_kms = 250.0;
    o.gamma_kms = -12.0;
    return o;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BSEI_CLI) + " " + args + " > " + (kWork / "cli_stdout.txt").string() + " 2> " +
                            (kWork / "cli_stderr.txt").string();
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string put(const std::string& name, const json& j) {
    write_text(kWork / name, j.dump());
    return (kWork / name).string();
}

// Concatenated bytes of every regular file under `dir`, in name order.
std::string tree_bytes(const fs::path& dir) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(dir))
        if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    std::string out;
    for (const auto& f : files) out += fs::relative(f, dir).string() + "\n" + read_text(f);
    return out;
}

}  // namespace

int main() {
    fs::remove_all(kWork);
    fs::create_directories(kWork);
    std::cout.precision(3);

    criterion(1, "law identities", 5.0, [](Outcome& o) {
        // w -> r -> w on random speeds, r -> w -> r over the wind domain [1.001, 100]
        std::mt19937_64 rng(11);
        std::uniform_real_distribution<double> u(0.0, 1.0), beta(0.3, 3.0);
        double worst_w = 0.0, worst_r = 0.0;
        for (int i = 0; i < 2000; ++i) {
            const auto p = base(0.01, beta(rng));
            const double w = p.w0 + (0.999 - p.w0) * u(rng);
            worst_w = std::max(worst_w, std::abs(velocity(radius_at_speed(w, p), p) - w));
        }
        for (double b : {0.5, 0.8, 1.0, 2.0})
            for (int i = 0; i <= 200; ++i) {
                const auto p = base(0.01, b);
                const double r = 1.001 * std::pow(100.0 / 1.001, i / 200.0);
                worst_r = std::max(worst_r, std::abs(radius_at_speed(velocity(r, p), p) - r) / r);
            }
        o.detail << " roundtrip w " << worst_w << ", r " << worst_r;
        o.check(worst_w <= 1e-12 && worst_r <= 1e-12, "round trip > 1e-12");

        auto p = base(0.02, 1.0);
        p.alpha1 = p.alpha2 = 0.0;
        const double n098 = std::abs(norm_integral(p) - 0.98);
        p.alpha2 = 1.0;
        const double n4802 = std::abs(norm_integral(p) - 0.4802);
        auto lin = base(1e-6, 1.0);
        lin.alpha1 = 1.0;
        lin.alpha2 = 0.0;
        const double n05 = std::abs(norm_integral(lin) - 0.5);
        const double worst_norm = std::max({n098, n4802, n05});
        o.detail << "; closed forms " << worst_norm;
        o.check(worst_norm <= 1e-10, "norm integral closed forms > 1e-10");

        double worst_t = 0.0;
        for (double a1 : {0.0, 0.5, 2.0})
            for (double a2 : {0.0, 0.5, 2.0})
                for (double b : {0.1, 0.5, 2.0}) {
                    auto q = base(0.01, b);
                    q.w1 = 0.9;
                    q.alpha1 = a1;
                    q.alpha2 = a2;
                    q.t_tot_blue = 2.5;
                    const WindModel m(q);
                    const double total = oracle::graded_simpson(
                        [&](double w) { return m.tau_radial(w, Component::blue); }, q.w0, q.w1, 20000);
                    worst_t = std::max(worst_t, std::abs(total / 2.5 - 1.0));
                }
        o.detail << "; tau integral rel " << worst_t;
        o.check(worst_t <= 1e-6, "tau law integral > 1e-6");
    });

    criterion(2, "Sobolev probabilities", 10.0, [](Outcome& o) {
        const double at1 = std::abs(escape_probability(1.0, 0.0) - (1.0 - std::exp(-1.0)));
        o.check(at1 <= 1e-9, "delta(1, 0)");
        bool exact_half = true;
        for (double tau : {0.01, 0.3, 1.0, 5.0, 50.0})
            exact_half = exact_half && penetration_probability(tau, 0.0, 1.0) == 0.5 * escape_probability(tau, 0.0);
        o.check(exact_half, "delta_c(r=1, sigma=0) != delta/2");
        double worst = 0.0;
        for (double tau : {0.01, 0.3, 1.0, 5.0, 50.0})
            for (double sigma : {-0.5, 0.0, 0.5, 2.0, 10.0})
                for (double r : {1.05, 2.0, 10.0}) {
                    worst = std::max(worst, std::abs(escape_probability(tau, sigma) - oracle::delta(tau, sigma)));
                    worst = std::max(worst, std::abs(penetration_probability(tau, sigma, r) - oracle::delta_c(tau, sigma, r)));
                }
        o.detail << " |delta(1,0) - (1 - 1/e)| " << at1 << "; oracle max " << worst;
        o.check(worst <= 1e-7, "oracle grid > 1e-7");
    });

    criterion(3, "transparent wind", 60.0, [](Outcome& o) {
        const auto f = single_star_profile(refsets::transparent(), DoubletSpec{});
        double worst = 0.0, halo = 0.0;
        for (std::size_t i = 0; i < f.f_total.size(); ++i) {
            worst = std::max(worst, std::abs(f.f_total[i] - 1.0));
            halo = std::max(halo, std::abs(f.f_halo[i]));
        }
        o.detail << " max |f_total - 1| " << worst << ", max |f_halo| " << halo;
        o.check(worst <= 1e-10 && halo == 0.0, "not flat");
    });

    criterion(4, "photon conservation", 60.0, [](Outcome& o) {
        const auto p = refsets::conservative_line();
        GridConfig open;
        open.occultation = false;
        const auto scattered = single_star_profile(p, DoubletSpec{}, open);
        const auto occulted = single_star_profile(p, DoubletSpec{});
        const double ew_total = equivalent_width(scattered.grid.x, scattered.f_total);
        const double ew_abs = equivalent_width(occulted.grid.x, occulted.f_core);
        o.detail << " EW_total " << ew_total << ", EW_abs " << ew_abs << ", ratio " << std::abs(ew_total) / ew_abs;
        o.check(ew_abs > 0.0 && std::abs(ew_total) <= 0.01 * ew_abs, "|EW_total| > 1% EW_abs");
    });

    criterion(5, "regime morphology", 60.0, [](Outcome& o) {
        const auto thick = single_star_profile(refsets::thick_wind(), DoubletSpec{});
        double trough = 2.0, peak = 0.0;
        for (std::size_t i = 0; i < thick.grid.x.size(); ++i) {
            if (thick.grid.x[i] < 0.0) trough = std::min(trough, thick.f_total[i]);
            else peak = std::max(peak, thick.f_total[i]);
        }
        const auto thin = single_star_profile(refsets::thin_shell(), DoubletSpec{});
        const double ew = equivalent_width(thin.grid.x, thin.f_total);
        const double thin_peak = *std::max_element(thin.f_total.begin(), thin.f_total.end());
        o.detail << " thick trough " << trough << ", peak " << peak << "; thin EW " << ew << ", peak " << thin_peak;
        o.check(trough < 0.7 && peak > 1.02, "thick wind not P-Cygni");
        o.check(ew > 0.0 && thin_peak <= 1.01, "thin shell not net absorption");
    });

    criterion(6, "grid convergence", 120.0, [](Outcome& o) {
        const auto p = refsets::thick_wind();
        const auto coarse = single_star_profile(p, DoubletSpec{});
        const auto fine = single_star_profile(p, DoubletSpec{}, GridConfig{}.refined(2));
        const double d = max_abs_diff_on_common_x(coarse, fine);
        o.detail << " max |delta f_total| " << d;
        o.check(d < 0.005, ">= 0.5%");
    });

    criterion(7, "BSEI bookkeeping", 30.0, [](Outcome& o) {
        const auto f1 = toy_profile(0.6, -0.3, 0.3, 0.2), f2 = toy_profile(0.4, -0.5, 0.2, 0.4);
        const auto orbit = test_orbit();
        double out_cont = 0.0, in_cont = 0.0, period = 0.0, invariance = 0.0, jump = 0.0;
        for (int i = 0; i < 20; ++i) {
            const double ph = i / 20.0;
            const auto b = amalgamate(f1, f2, ph, orbit, {});
            out_cont = std::max({out_cont, std::abs(b.flux.front() - 1.0), std::abs(b.flux.back() - 1.0)});
            for (double turns : {1.0, 3.0}) {
                const auto c = amalgamate(f1, f2, ph + turns, orbit, {});
                for (std::size_t k = 0; k < b.flux.size(); ++k) period = std::max(period, std::abs(c.flux[k] - b.flux[k]));
            }
        }
        for (auto kind : {EclipseKind::primary_eclipsed, EclipseKind::secondary_eclipsed})
            for (double lc : {0.7, 0.85, 0.95}) {
                const auto b = amalgamate(f1, f2, kind == EclipseKind::primary_eclipsed ? 0.01 : 0.51, orbit, {kind, lc});
                in_cont = std::max({in_cont, std::abs(b.flux.front() - lc), std::abs(b.flux.back() - lc)});
            }
        // weights approach (l1, l2) linearly as LC -> 1
        for (auto kind : {EclipseKind::primary_eclipsed, EclipseKind::secondary_eclipsed})
            for (int k = 2; k <= 10; ++k) {
                const double gap = std::pow(10.0, -k);
                const auto w = eclipse_weights({kind, 1.0 - gap}, orbit, WeightRule::adopted);
                jump = std::max(jump, (std::abs(w.w1 - orbit.l1) + std::abs(w.w2 - orbit.l2)) / gap);
            }
        OrbitalSolution still = orbit;
        still.k1_kms = still.k2_kms = still.gamma_kms = 0.0;
        GridConfig g;
        g.x_step = 0.02;
        g.core_rays = 16;
        g.halo_rays = 24;
        g.z_samples = 96;
        auto p2 = refsets::thick_wind();
        p2.t_tot_blue = 1.0;
        std::vector<PhasePoint> phases;
        for (int i = 0; i < 10; ++i) phases.push_back({i / 10.0, {}});
        const auto seq = phase_sequence(refsets::thick_wind(), p2, DoubletSpec{}, still, phases, g);
        for (const auto& b : seq)
            for (std::size_t k = 0; k < b.flux.size(); ++k) invariance = std::max(invariance, std::abs(b.flux[k] - seq[0].flux[k]));
        o.detail << " out-of-eclipse " << out_cont << ", in-eclipse " << in_cont << ", weight slope " << jump
                 << ", periodicity " << period << ", RV=0 invariance " << invariance;
        o.check(out_cont <= 1e-8, "out-of-eclipse continuum");
        o.check(in_cont <= 1e-6, "in-eclipse continuum");
        o.check(jump <= 1.0 + 1e-6, "weights discontinuous at LC -> 1");
        o.check(period <= 1e-12, "periodicity");
        o.check(invariance <= 1e-12, "phase invariance");
    });

    criterion(8, "Kepler and radial velocities", 5.0, [](Outcome& o) {
        double worst = 0.0;
        for (double e : {0.0, 0.3, 0.9})
            for (int i = 0; i < 100; ++i) {
                const double m = 2.0 * kPi * i / 100.0;
                const double ecc = solve_kepler(m, e);
                worst = std::max(worst, std::abs(ecc - e * std::sin(ecc) - m));
            }
        const auto orbit = test_orbit();
        double rv = 0.0;
        for (int star : {1, 2}) {
            const double k = star == 1 ? orbit.k1_kms : -orbit.k2_kms;
            rv = std::max({rv, std::abs(radial_velocity(0.0, star, orbit) - orbit.gamma_kms),
                           std::abs(radial_velocity(0.5, star, orbit) - orbit.gamma_kms),
                           std::abs(radial_velocity(0.25, star, orbit) - (orbit.gamma_kms + k)),
                           std::abs(radial_velocity(0.75, star, orbit) - (orbit.gamma_kms - k))});
        }
        o.detail << " max |E - e sin E - M| " << worst << ", circular identities " << rv;
        o.check(worst <= 1e-10, "Kepler residual");
        o.check(rv <= 1e-9, "circular identities");
    });

    // Generating model for the closed loop and the determinism runs.
    auto truth1 = refsets::thick_wind();
    auto truth2 = refsets::thick_wind();
    truth2.beta = 0.8;
    truth2.t_tot_blue = 1.0;
    truth2.t_tot_red = 0.5;
    truth2.v_inf = 2000.0;
    const auto p1 = put("params1.json", to_json(truth1));
    const auto p2 = put("params2.json", to_json(truth2));
    const auto orb = put("orbit.json", to_json(test_orbit()));

    criterion(9, "closed-loop recovery", 600.0, [&](Outcome& o) {
        const auto obs = (kWork / "obs").string();
        o.check(run_cli("synth-obs --params1 " + p1 + " --params2 " + p2 + " --orbit " + orb +
                        " --n-phases 20 --seed 7 --sigma 0.02 --out " + obs) == 0,
                "synth-obs exit");
        auto start = truth1;
        start.t_tot_blue = 1.0;
        start.beta = 1.5;
        const auto s = put("start.json", to_json(start));
        const auto out = (kWork / "fit.json").string();
        o.check(run_cli("fit --params1 " + s + " --params2 " + p2 + " --orbit " + orb +
                        " --free t_tot_blue:0.5:6 --free beta:0.5:2 --out " + out + " " + obs) == 0,
                "fit exit");
        const auto res = read_json(out);
        const double t = res["free"][0]["value"], b = res["free"][1]["value"];
        o.detail << " t_tot_blue " << t << " (true " << truth1.t_tot_blue << "), beta " << b << " (true " << truth1.beta
                 << "), chi2 " << res["report"]["aggregate"].get<double>();
        o.check(std::abs(t / truth1.t_tot_blue - 1.0) <= 0.20, "t_tot_blue outside 20%");
        o.check(std::abs(b - truth1.beta) <= 0.25, "beta outside 0.25");
    });

    criterion(10, "determinism", 600.0, [&](Outcome& o) {
        const auto d = put("doublet.json", to_json(DoubletSpec{}));
        const auto ph = put("phases.json", json{0.0, 0.25, 0.5, 0.75});
        const std::string obs = (kWork / "obs").string();
        auto twice = [&](const std::string& name, const std::function<std::string(const std::string&)>& args) {
            const auto a = (kWork / ("det_" + name + "_a")).string(), b = (kWork / ("det_" + name + "_b")).string();
            fs::create_directories(a);
            fs::create_directories(b);
            const bool ran = run_cli(args(a)) == 0 && run_cli(args(b)) == 0;
            const bool same = ran && tree_bytes(a) == tree_bytes(b) && !tree_bytes(a).empty();
            o.detail << " " << name << (same ? " ok" : " DIFF");
            o.check(same, name);
        };
        twice("profile", [&](const std::string& dir) { return "profile --params " + p1 + " --doublet " + d + " --out " + dir + "/p.dat"; });
        twice("bsei", [&](const std::string& dir) {
            return "bsei --params1 " + p1 + " --params2 " + p2 + " --orbit " + orb + " --phases " + ph + " --out " + dir;
        });
        twice("synth-obs", [&](const std::string& dir) {
            return "synth-obs --params1 " + p1 + " --params2 " + p2 + " --orbit " + orb +
                   " --n-phases 4 --seed 3 --sigma 0.02 --out " + dir;
        });
        twice("lightcurve", [&](const std::string& dir) {
            return "lightcurve --orbit " + orb + " --band 1525:1530 --out " + dir + "/lc.csv " + obs;
        });
        twice("normalize", [&](const std::string& dir) {
            return "normalize --window 1523:1528 --window 1570:1575 --out " + dir + " " + obs;
        });
        twice("fit", [&](const std::string& dir) {
            return "fit --params1 " + p1 + " --params2 " + p2 + " --orbit " + orb +
                   " --free t_tot_blue:1:5 --points 5 --rounds 1 --out " + dir + "/fit.json --csv " + dir + "/fit.csv " +
                   (kWork / "det_synth-obs_a").string();
        });

        // Compute endpoints: two independent servers, identical bodies.
        const json grid{{"x_step", 0.02}, {"core_rays", 16}, {"halo_rays", 24}, {"z_samples", 96}};
        const auto spectrum_csv = read_text(kWork / "obs" / "obs000.csv");
        const json requests[] = {
            {{"params", to_json(truth1)}, {"grid", grid}},
            {{"params1", to_json(truth1)}, {"params2", to_json(truth2)}, {"orbit", to_json(test_orbit())},
             {"phases", {0.0, 0.3, 0.6}}, {"grid", grid}},
            {{"band", {{"lambda_min", 1525}, {"lambda_max", 1530}}}, {"orbit", to_json(test_orbit())}},
            {{"model", {{"wavelength", {1540, 1550, 1560}}, {"flux", {1.0, 0.8, 1.0}}}},
             {"spectrum_id", "obs000"},
             {"window", {{"lambda_min", 1540}, {"lambda_max", 1560}}},
             {"sigma", 0.02}}};
        const char* paths[] = {"/api/profile/single", "/api/bsei/sequence", "/api/lightcurve", "/api/fit/goodness"};
        std::vector<std::string> first, second;
        for (auto* sink : {&first, &second}) {
            Service service;
            httplib::Server server;
            service.mount(server);
            const int port = server.bind_to_any_port("127.0.0.1");
            std::thread t([&] { server.listen_after_bind(); });
            server.wait_until_ready();
            httplib::Client c("127.0.0.1", port);
            c.set_read_timeout(120, 0);
            auto up = c.Post("/api/spectra", spectrum_csv, "text/csv");
            o.check(up && up->status == 201, "upload");
            for (int i = 0; i < 4; ++i)
                for (int rep = 0; rep < 2; ++rep) {
                    auto r = c.Post(paths[i], requests[i].dump(), "application/json");
                    const bool ok = r && r->status == 200;
                    o.check(ok, std::string(paths[i]) + " status");
                    sink->push_back(ok ? r->body : "");
                }
            server.stop();
            t.join();
        }
        bool same = first == second;
        for (std::size_t i = 0; i + 1 < first.size(); i += 2) same = same && first[i] == first[i + 1];
        o.detail << "; endpoints " << (same ? "ok" : "DIFF");
        o.check(same, "endpoint bytes");
    });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
