#include "bsei/spectra_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "bsei/errors.hpp"
#include "bsei/numfmt.hpp"

namespace bsei {

namespace {

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

void parse_header(std::string_view line, ObservedSpectrum& out) {
    line = trim(line);
    if (line.empty() || line.front() != '#') throw ParseError("missing '# id=<s> hjd=<f>' header", 1);
    line.remove_prefix(1);
    bool have_id = false, have_hjd = false;
    std::istringstream words{std::string(line)};
    std::string word;
    while (words >> word) {
        const auto eq = word.find('=');
        if (eq == std::string::npos) throw ParseError("header token '" + word + "' is not key=value", 1);
        const auto key = word.substr(0, eq), value = word.substr(eq + 1);
        if (key == "id") {
            if (value.empty()) throw ParseError("empty id", 1);
            out.id = value;
            have_id = true;
        } else if (key == "hjd") {
            try {
                out.hjd = numfmt::parse_double(value);
            } catch (const std::invalid_argument&) {
                throw ParseError("bad hjd '" + value + "'", 1);
            }
            have_hjd = true;
        } else {
            throw ParseError("unknown header key '" + key + "'", 1);
        }
    }
    if (!have_id) throw ParseError("header lacks id=", 1);
    if (!have_hjd) throw ParseError("header lacks hjd=", 1);
}

std::vector<std::size_t> samples_in(const ObservedSpectrum& spec, double lo, double hi) {
    std::vector<std::size_t> idx;
    const auto first = std::lower_bound(spec.wavelength.begin(), spec.wavelength.end(), lo);
    for (auto it = first; it != spec.wavelength.end() && *it <= hi; ++it)
        idx.push_back(static_cast<std::size_t>(it - spec.wavelength.begin()));
    return idx;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out << text;
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace

void ObservedSpectrum::validate() const {
    if (id.empty()) throw ValidationError("spectrum id is empty", {"id"});
    if (!std::isfinite(hjd)) throw ValidationError("hjd must be finite", {"hjd"});
    if (wavelength.size() != flux.size()) throw ValidationError("wavelength and flux lengths differ", {"wavelength", "flux"});
    for (std::size_t i = 0; i < wavelength.size(); ++i) {
        if (!std::isfinite(wavelength[i]) || (i > 0 && !(wavelength[i] > wavelength[i - 1])))
            throw ValidationError("wavelengths must be finite and strictly increasing (sample " + std::to_string(i) + ")",
                                  {"wavelength"});
        if (!std::isfinite(flux[i]) || flux[i] < 0.0)
            throw ValidationError("fluxes must be finite and >= 0 (sample " + std::to_string(i) + ")", {"flux"});
    }
}

void Bandpass::validate() const {
    if (!(lambda_min < lambda_max)) throw ValidationError("band needs lambda_min < lambda_max", {"lambda_min", "lambda_max"}, true);
}

bool PhaseWindow::contains(double phase) const {
    return from <= to ? (phase >= from && phase < to) : (phase >= from || phase < to);
}

ObservedSpectrum parse_spectrum(std::istream& in) {
    ObservedSpectrum out;
    std::string line;
    std::size_t lineno = 0;
    if (!std::getline(in, line)) throw ParseError("empty input: missing header", 1);
    ++lineno;
    parse_header(line, out);
    while (std::getline(in, line)) {
        ++lineno;
        const auto body = trim(line);
        if (body.empty()) continue;
        if (body == "wavelength_A,flux" && out.wavelength.empty()) continue;
        const auto comma = body.find(',');
        if (comma == std::string_view::npos || body.find(',', comma + 1) != std::string_view::npos)
            throw ParseError("expected 'wavelength_A,flux'", lineno);
        double wl, fx;
        try {
            wl = numfmt::parse_double(body.substr(0, comma));
            fx = numfmt::parse_double(body.substr(comma + 1));
        } catch (const std::invalid_argument& e) {
            throw ParseError(e.what(), lineno);
        }
        if (!out.wavelength.empty() && !(wl > out.wavelength.back()))
            throw ParseError("wavelength " + std::string(trim(body.substr(0, comma))) + " is not above the previous row",
                             lineno);
        if (fx < 0.0) throw ParseError("negative flux", lineno);
        out.wavelength.push_back(wl);
        out.flux.push_back(fx);
    }
    if (out.wavelength.empty()) throw ParseError("no samples", lineno);
    return out;
}

ObservedSpectrum parse_spectrum(const std::string& text) {
    std::istringstream in(text);
    return parse_spectrum(in);
}

ObservedSpectrum load_spectrum(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path.string());
    return parse_spectrum(in);
}

std::string format_spectrum(const ObservedSpectrum& spec) {
    spec.validate();
    if (spec.id.find_first_of(" \t\r\n") != std::string::npos)
        throw ValidationError("spectrum id must not contain whitespace", {"id"});
    std::string out = "# id=" + spec.id + " hjd=" + numfmt::shortest(spec.hjd) + "\nwavelength_A,flux\n";
    std::string prev;
    for (std::size_t i = 0; i < spec.wavelength.size(); ++i) {
        auto wl = numfmt::sig(spec.wavelength[i], 7);
        if (i > 0 && numfmt::parse_double(wl) <= numfmt::parse_double(prev))
            throw ContractError("wavelength grid too fine for 7 significant digits near " + wl);
        out += wl;
        out += ',';
        out += numfmt::sig(spec.flux[i], 7);
        out += '\n';
        prev = std::move(wl);
    }
    return out;
}

void export_spectrum(const ObservedSpectrum& spec, const std::filesystem::path& path) {
    write_file(path, format_spectrum(spec));
}

double phase_fold(double hjd, const OrbitalSolution& orbit) {
    if (!(orbit.period_days > 0.0)) throw ValidationError("period_days must be > 0", {"period_days"});
    const double cycles = (hjd - orbit.t0) / orbit.period_days;
    const double f = cycles - std::floor(cycles);
    return f >= 1.0 ? 0.0 : f;
}

double band_mean(const ObservedSpectrum& spec, const Bandpass& band) {
    band.validate();
    if (spec.wavelength.empty() || band.lambda_min < spec.wavelength.front() || band.lambda_max > spec.wavelength.back())
        throw CoverageError("band " + band.label + " is outside the coverage of spectrum " + spec.id);
    const auto idx = samples_in(spec, band.lambda_min, band.lambda_max);
    if (idx.empty()) throw CoverageError("band " + band.label + " contains no samples of spectrum " + spec.id);
    double sum = 0.0;
    for (auto i : idx) sum += spec.flux[i];
    return sum / static_cast<double>(idx.size());
}

LightCurve extract_light_curve(const std::vector<ObservedSpectrum>& spectra, const Bandpass& band,
                               const OrbitalSolution& orbit, const std::optional<std::vector<PhaseWindow>>& out_of_eclipse) {
    band.validate();
    LightCurve curve;
    curve.band = band;
    if (spectra.empty()) return curve;
    std::vector<double> raw;
    for (const auto& s : spectra) {
        raw.push_back(band_mean(s, band));
        curve.points.push_back({phase_fold(s.hjd, orbit), 0.0, s.id});
    }

    std::vector<double> anchor_set;
    if (out_of_eclipse) {
        for (std::size_t i = 0; i < raw.size(); ++i)
            if (std::any_of(out_of_eclipse->begin(), out_of_eclipse->end(),
                            [&](const PhaseWindow& w) { return w.contains(curve.points[i].phase); }))
                anchor_set.push_back(raw[i]);
        if (anchor_set.empty()) throw ContractError("no spectrum falls inside the out-of-eclipse phase mask");
    } else {
        anchor_set = raw;
        std::sort(anchor_set.begin(), anchor_set.end(), std::greater<>());
        anchor_set.resize((anchor_set.size() + 3) / 4);
    }
    const double anchor = std::accumulate(anchor_set.begin(), anchor_set.end(), 0.0) / static_cast<double>(anchor_set.size());
    if (!(anchor > 0.0)) throw NumericError("light-curve anchor flux is not positive");
    for (std::size_t i = 0; i < raw.size(); ++i) {
        curve.points[i].lc = raw[i] / anchor;
        if (!(curve.points[i].lc > 0.0)) throw NumericError("zero band flux in spectrum " + spectra[i].id);
    }
    return curve;
}

std::string format_light_curve(const LightCurve& curve) {
    std::string out = "phase,lc,spectrum_id\n";
    for (const auto& p : curve.points) out += numfmt::sig(p.phase, 7) + "," + numfmt::sig(p.lc, 7) + "," + p.spectrum_id + "\n";
    return out;
}

Continuum fit_continuum(const ObservedSpectrum& spec, const std::vector<Bandpass>& windows) {
    if (windows.size() < 2) throw ContractError("continuum normalization needs at least 2 windows");
    std::vector<std::vector<std::size_t>> members;
    std::vector<double> centers;
    for (const auto& w : windows) {
        w.validate();
        auto idx = samples_in(spec, w.lambda_min, w.lambda_max);
        if (idx.empty()) throw CoverageError("continuum window " + w.label + " contains no samples of " + spec.id);
        double c = 0.0;
        for (auto i : idx) c += spec.wavelength[i];
        centers.push_back(c / static_cast<double>(idx.size()));
        members.push_back(std::move(idx));
    }
    const auto k = static_cast<double>(windows.size());
    Continuum line;
    line.lambda_c = std::accumulate(centers.begin(), centers.end(), 0.0) / k;
    std::vector<double> t(centers.size());
    double stt = 0.0;
    for (std::size_t j = 0; j < t.size(); ++j) {
        t[j] = centers[j] - line.lambda_c;
        stt += t[j] * t[j];
    }
    if (!(stt > 0.0)) throw ContractError("continuum windows must have distinct centers");

    // Window means of flux / continuum and their derivatives in a and b.
    auto evaluate = [&](const Continuum& c, std::vector<double>& m, std::vector<double>& da, std::vector<double>& db) {
        for (std::size_t j = 0; j < members.size(); ++j) {
            double s = 0.0, sa = 0.0, sb = 0.0;
            for (auto i : members[j]) {
                const double l = c(spec.wavelength[i]);
                if (!(l > 0.0)) throw NumericError("continuum fit went non-positive in window " + windows[j].label);
                const double q = spec.flux[i] / l;
                s += q;
                sa -= q / l;
                sb -= q / l * (spec.wavelength[i] - c.lambda_c);
            }
            const auto n = static_cast<double>(members[j].size());
            m[j] = s / n;
            da[j] = sa / n;
            db[j] = sb / n;
        }
    };

    // Start from the ordinary least-squares line through the raw window means.
    std::vector<double> m(t.size()), da(t.size()), db(t.size());
    evaluate(Continuum{1.0, 0.0, line.lambda_c}, m, da, db);
    line.a = std::accumulate(m.begin(), m.end(), 0.0) / k;
    for (std::size_t j = 0; j < t.size(); ++j) line.b += t[j] * m[j];
    line.b /= stt;

    // Newton on (a, b): the least-squares line through the normalized means
    // must have intercept 1 and slope 0.
    for (int it = 0; it < 50; ++it) {
        evaluate(line, m, da, db);
        double r0 = -1.0, r1 = 0.0, j00 = 0.0, j01 = 0.0, j10 = 0.0, j11 = 0.0;
        for (std::size_t j = 0; j < t.size(); ++j) {
            r0 += m[j] / k;
            r1 += t[j] * m[j] / stt;
            j00 += da[j] / k;
            j01 += db[j] / k;
            j10 += t[j] * da[j] / stt;
            j11 += t[j] * db[j] / stt;
        }
        const double det = j00 * j11 - j01 * j10;
        if (!(std::abs(det) > 0.0) || !std::isfinite(det)) throw NumericError("continuum fit is singular");
        const double step_a = (r0 * j11 - r1 * j01) / det;
        const double step_b = (j00 * r1 - j10 * r0) / det;
        line.a -= step_a;
        line.b -= step_b;
        if (std::abs(step_a) <= 1e-16 * std::abs(line.a) && std::abs(step_b) * std::sqrt(stt) <= 1e-16 * std::abs(line.a))
            break;
    }
    return line;
}

ObservedSpectrum normalize_spectrum(const ObservedSpectrum& spec, const std::vector<Bandpass>& windows) {
    const auto line = fit_continuum(spec, windows);
    ObservedSpectrum out = spec;
    for (std::size_t i = 0; i < out.flux.size(); ++i) {
        const double l = line(out.wavelength[i]);
        if (!(l > 0.0)) throw NumericError("fitted continuum is not positive at " + std::to_string(out.wavelength[i]) + " A");
        out.flux[i] = spec.flux[i] / l;
    }
    return out;
}

ObservedSpectrum truncate_window(const ObservedSpectrum& spec, double center_lambda, double half_width) {
    if (!(half_width >= 0.0)) throw ValidationError("half_width must be >= 0", {"half_width"});
    if (spec.wavelength.empty() || center_lambda < spec.wavelength.front() || center_lambda > spec.wavelength.back())
        throw CoverageError("window center is outside the coverage of spectrum " + spec.id);
    ObservedSpectrum out;
    out.id = spec.id;
    out.hjd = spec.hjd;
    out.phase = spec.phase;
    for (std::size_t i = 0; i < spec.wavelength.size(); ++i)
        if (std::abs(spec.wavelength[i] - center_lambda) <= half_width) {
            out.wavelength.push_back(spec.wavelength[i]);
            out.flux.push_back(spec.flux[i]);
        }
    if (out.wavelength.empty()) throw CoverageError("window contains no samples of spectrum " + spec.id);
    return out;
}

}  // namespace bsei
