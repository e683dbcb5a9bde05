#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>
#include <vector>

#include "bsei/binary_synthesis.hpp"
#include "bsei/errors.hpp"
#include "bsei/numfmt.hpp"
#include "bsei/spectra_io.hpp"

using namespace bsei;

namespace {

ObservedSpectrum flat(const std::string& id, double hjd, double level, int n = 401, double lo = 1530.0, double step = 0.1) {
    ObservedSpectrum s;
    s.id = id;
    s.hjd = hjd;
    for (int i = 0; i < n; ++i) {
        s.wavelength.push_back(lo + step * i);
        s.flux.push_back(level);
    }
    return s;
}

double line_shape(double wl) {
    const double a = (wl - 1548.2) / 1.5, b = (wl - 1551.0) / 1.2;
    return 1.0 - 0.5 * std::exp(-a * a) + 0.3 * std::exp(-b * b);
}

const std::vector<Bandpass> kWindows{{"left", 1531.0, 1535.0, BandKind::continuum},
                                     {"right", 1565.0, 1569.0, BandKind::continuum}};

std::filesystem::path scratch(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / "bsei_test_spectra_io";
    std::filesystem::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("parse minimal spectrum") {
    const auto s = parse_spectrum("# id=swp1234 hjd=2448000.5\nwavelength_A,flux\n1548.0,0.9\n1548.5,1.1\n");
    CHECK(s.id == "swp1234");
    CHECK(s.hjd == 2448000.5);
    CHECK(s.wavelength == std::vector<double>{1548.0, 1548.5});
    CHECK(s.flux == std::vector<double>{0.9, 1.1});

    // Column header line is optional.
    CHECK(parse_spectrum("# id=a hjd=1\n1,2\n3,4\n").wavelength.size() == 2);
}

TEST_CASE("parse errors carry line numbers") {
    auto line_of = [](const std::string& text) -> std::size_t {
        try {
            parse_spectrum(text);
        } catch (const ParseError& e) {
            return e.line();
        }
        return 0;
    };
    CHECK(line_of("1548,1\n") == 1);
    CHECK(line_of("# id=x\n1,1\n") == 1);
    CHECK(line_of("# id=x hjd=1\nwavelength_A,flux\n1548,1\n1549,1\n1548.5,1\n") == 5);
    CHECK(line_of("# id=x hjd=1\n1548,abc\n") == 2);
    CHECK(line_of("# id=x hjd=1\n1548,1,3\n") == 2);
    CHECK(line_of("# id=x hjd=1\n1548,-1\n") == 2);
    CHECK(line_of("# id=x hjd=1\n") == 1);
    try {
        parse_spectrum("# id=x hjd=1\n1549,1\n1549,1\n");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("line 3") == 0);
    }
}

TEST_CASE("export/load round trip") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 2.0);
    ObservedSpectrum s;
    s.id = "synthetic-512";
    s.hjd = 2449123.456789123;
    for (int i = 0; i < 512; ++i) {
        s.wavelength.push_back(1520.0 + 0.0613 * i);
        s.flux.push_back(u(rng));
    }
    const auto path = scratch("roundtrip.csv");
    export_spectrum(s, path);
    const auto back = load_spectrum(path);
    CHECK(back.id == s.id);
    CHECK(back.hjd == s.hjd);
    for (std::size_t i = 0; i < s.flux.size(); ++i) {
        CHECK(back.wavelength[i] == numfmt::parse_double(numfmt::sig(s.wavelength[i], 7)));
        CHECK(std::abs(back.flux[i] - s.flux[i]) <= 5e-7 * std::abs(s.flux[i]));
    }
    // Once at the file's precision, round trips are bit-identical.
    CHECK(format_spectrum(back) == format_spectrum(load_spectrum(path)));
    CHECK(parse_spectrum(format_spectrum(back)) == back);

    CHECK_THROWS_AS(load_spectrum(scratch("does-not-exist.csv")), IoError);
    auto bad = s;
    bad.id = "has space";
    CHECK_THROWS_AS(format_spectrum(bad), ValidationError);
}

TEST_CASE("phase_fold") {
    OrbitalSolution o;
    o.period_days = 3.367;
    o.t0 = 2448000.25;
    CHECK(phase_fold(o.t0, o) == 0.0);
    CHECK(phase_fold(o.t0 + o.period_days / 2.0, o) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(phase_fold(o.t0 - 0.25 * o.period_days, o) == doctest::Approx(0.75).epsilon(1e-9));
    for (int k : {-7, -1, 1, 5, 40}) {
        const double h = o.t0 + 1.234;
        CHECK(std::abs(phase_fold(h + k * o.period_days, o) - phase_fold(h, o)) <= 1e-9);
    }
    for (double h : {o.t0 - 1e-13, o.t0 + 1e6}) {
        const double f = phase_fold(h, o);
        CHECK(f >= 0.0);
        CHECK(f < 1.0);
    }
}

TEST_CASE("light curves") {
    OrbitalSolution o;
    o.period_days = 2.0;
    const Bandpass band{"c1500", 1535.0, 1540.0, BandKind::continuum};

    std::vector<ObservedSpectrum> set;
    for (int i = 0; i < 8; ++i) set.push_back(flat("s" + std::to_string(i), 0.25 * i, 7.0));
    for (const auto& p : extract_light_curve(set, band, o).points) CHECK(p.lc == 1.0);

    set[3].flux.assign(set[3].flux.size(), 7.0 * 0.85);
    const auto dimmed = extract_light_curve(set, band, o);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(dimmed.points[i].lc == doctest::Approx(i == 3 ? 0.85 : 1.0).epsilon(1e-12));
    CHECK(dimmed.points[3].spectrum_id == "s3");
    CHECK(dimmed.points[2].phase == doctest::Approx(0.25).epsilon(1e-12));

    // Global rescaling of every spectrum cancels.
    auto scaled = set;
    for (auto& s : scaled)
        for (auto& f : s.flux) f *= 123.0;
    const auto again = extract_light_curve(scaled, band, o);
    for (std::size_t i = 0; i < set.size(); ++i) CHECK(again.points[i].lc == doctest::Approx(dimmed.points[i].lc).epsilon(1e-14));

    // Explicit out-of-eclipse mask: normalize to phases [0.4, 0.6) only.
    set[2].flux.assign(set[2].flux.size(), 14.0);
    const auto masked = extract_light_curve(set, band, o, std::vector<PhaseWindow>{{0.4, 0.6}});
    CHECK(masked.points[4].lc == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(masked.points[2].lc == doctest::Approx(2.0).epsilon(1e-14));
    CHECK_THROWS_AS(extract_light_curve(set, band, o, std::vector<PhaseWindow>{{0.01, 0.02}}), ContractError);

    const Bandpass off{"far", 1400.0, 1410.0, BandKind::continuum};
    CHECK_THROWS_AS(extract_light_curve(set, off, o), CoverageError);

    const auto csv = format_light_curve(dimmed);
    CHECK(csv.rfind("phase,lc,spectrum_id\n0,1,s0\n", 0) == 0);
    CHECK(csv.find("\n0.375,0.85,s3\n") != std::string::npos);
}

TEST_CASE("light curve recovers injected eclipse depths from BSEI output") {
    // Flat single-star profiles carry only continuum, so the BSEI flux is the injected LC.
    SingleStarProfile star;
    star.grid.lambda_ref = 1548.187;
    star.grid.v_inf = 2500.0;
    for (int i = -150; i <= 150; ++i) {
        star.grid.x.push_back(0.01 * i);
        const double a = (0.01 * i + 0.3) / 0.1;
        star.f_core.push_back(1.0 - 0.4 * std::exp(-a * a));
        star.f_halo.push_back(0.0);
        star.f_total.push_back(star.f_core.back());
    }
    OrbitalSolution o;
    o.period_days = 3.0;
    o.t0 = 100.0;
    o.k1_kms = 150.0;
    o.k2_kms = 170.0;
    std::vector<PhasePoint> pts;
    std::vector<double> injected;
    for (int i = 0; i < 20; ++i) {
        const double ph = i / 20.0;
        EclipseState st;
        const double d0 = std::min(ph, 1.0 - ph), d5 = std::abs(ph - 0.5);
        if (d0 < 0.08) st = {EclipseKind::primary_eclipsed, 1.0 - 0.15 * (1.0 - d0 / 0.08)};
        if (d5 < 0.08) st = {EclipseKind::secondary_eclipsed, 1.0 - 0.1 * (1.0 - d5 / 0.08)};
        pts.push_back({ph, st});
        injected.push_back(st.lc);
    }
    const auto seq = phase_sequence(star, star, o, pts);
    std::vector<ObservedSpectrum> obs;
    for (std::size_t i = 0; i < seq.size(); ++i) {
        ObservedSpectrum s;
        s.id = "p" + std::to_string(i);
        s.hjd = o.t0 + o.period_days * (seq[i].phase + 3.0);
        s.wavelength = seq[i].wavelength;
        for (double f : seq[i].flux) s.flux.push_back(42.0 * f);
        obs.push_back(std::move(s));
    }
    // Line-free band redward of the trough.
    const Bandpass band{"cont", 1549.5, 1550.5, BandKind::continuum};
    const auto curve = extract_light_curve(obs, band, o);
    for (std::size_t i = 0; i < injected.size(); ++i) {
        CHECK(curve.points[i].phase == doctest::Approx(pts[i].phase).epsilon(1e-9));
        CHECK(std::abs(curve.points[i].lc - injected[i]) <= 1e-3);
    }
}

TEST_CASE("normalize_spectrum") {
    const auto unit = flat("u", 0.0, 1.0);
    const auto same = normalize_spectrum(unit, kWindows);
    for (std::size_t i = 0; i < unit.flux.size(); ++i) CHECK(std::abs(same.flux[i] - 1.0) <= 1e-12);

    for (double f : normalize_spectrum(flat("d", 0.0, 2.0), kWindows).flux) CHECK(f == doctest::Approx(1.0).epsilon(1e-14));

    auto sloped = flat("s", 0.0, 1.0);
    for (std::size_t i = 0; i < sloped.flux.size(); ++i) {
        const double wl = sloped.wavelength[i];
        sloped.flux[i] = 3.2 * (1.0 + 0.001 * (wl - 1530.0)) * line_shape(wl);
    }
    const auto rec = normalize_spectrum(sloped, kWindows);
    for (std::size_t i = 0; i < rec.flux.size(); ++i) CHECK(std::abs(rec.flux[i] - line_shape(rec.wavelength[i])) <= 1e-6);

    // Window means of the normalized spectrum are 1 (two windows determine the line).
    std::mt19937_64 rng(9);
    std::normal_distribution<double> noise(0.0, 0.03);
    auto noisy = sloped;
    for (auto& f : noisy.flux) f *= 1.0 + noise(rng);
    const auto nn = normalize_spectrum(noisy, kWindows);
    for (const auto& w : kWindows) CHECK(std::abs(band_mean(nn, w) - 1.0) <= 1e-9);

    // Idempotent, also with three windows where the means cannot all be 1.
    auto three = kWindows;
    three.push_back({"mid", 1556.0, 1558.0, BandKind::continuum});
    for (const std::vector<Bandpass>* windows : {&kWindows, static_cast<const std::vector<Bandpass>*>(&three)}) {
        const auto once = normalize_spectrum(noisy, *windows);
        const auto twice = normalize_spectrum(once, *windows);
        for (std::size_t i = 0; i < once.flux.size(); ++i) CHECK(std::abs(twice.flux[i] - once.flux[i]) <= 1e-12);
    }

    CHECK_THROWS_AS(normalize_spectrum(noisy, {kWindows[0]}), ContractError);
    CHECK_THROWS_AS(normalize_spectrum(noisy, {kWindows[0], {"off", 1600.0, 1610.0, BandKind::continuum}}), CoverageError);
}

TEST_CASE("truncate_window") {
    const auto s = flat("t", 0.0, 1.0, 401, 1530.0, 0.1);
    CHECK(truncate_window(s, 1550.0, 100.0).wavelength == s.wavelength);

    const auto one = truncate_window(s, s.wavelength[137], 0.05);
    REQUIRE(one.wavelength.size() == 1);
    CHECK(one.wavelength[0] == s.wavelength[137]);
    const auto two = truncate_window(s, 0.5 * (s.wavelength[50] + s.wavelength[51]), 0.05 + 1e-9);
    CHECK(two.wavelength.size() == 2);

    // +-1.3 v_inf around the CIV blue member, on a 0.25 A grid centered there.
    const double center = 1548.187;
    const double hw = 1.3 * 2500.0 / 299792.458 * center;
    auto grid = flat("g", 0.0, 1.0, 2001, center - 250.0, 0.25);
    const auto cut = truncate_window(grid, center, hw);
    CHECK(cut.wavelength.size() == static_cast<std::size_t>(2.0 * std::floor(hw / 0.25) + 1.0));

    CHECK_THROWS_AS(truncate_window(s, 1400.0, 1.0), CoverageError);
}
