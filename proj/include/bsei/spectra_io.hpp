#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bsei/binary_synthesis.hpp"

namespace bsei {

struct ObservedSpectrum {
    std::string id;
    double hjd = 0.0;
    std::vector<double> wavelength;  ///< Angstrom, strictly increasing
    std::vector<double> flux;
    std::optional<double> phase;

    void validate() const;
    bool operator==(const ObservedSpectrum&) const = default;
};

enum class BandKind { continuum, wind };

struct Bandpass {
    std::string label;
    double lambda_min = 0.0;
    double lambda_max = 0.0;
    BandKind kind = BandKind::continuum;

    void validate() const;
};

struct LightCurvePoint {
    double phase = 0.0;
    double lc = 1.0;
    std::string spectrum_id;
};

struct LightCurve {
    std::vector<LightCurvePoint> points;
    Bandpass band;
};

/// Half-open phase interval [from, to); wraps through 0 when from > to.
struct PhaseWindow {
    double from = 0.0;
    double to = 1.0;

    bool contains(double phase) const;
};

/// CSV spectrum: `# id=<s> hjd=<f>`, optional `wavelength_A,flux` line, then rows.
ObservedSpectrum parse_spectrum(std::istream& in);
ObservedSpectrum parse_spectrum(const std::string& text);
ObservedSpectrum load_spectrum(const std::filesystem::path& path);

/// 7 significant digits for samples, shortest round-trip form for hjd.
std::string format_spectrum(const ObservedSpectrum& spec);
void export_spectrum(const ObservedSpectrum& spec, const std::filesystem::path& path);

double phase_fold(double hjd, const OrbitalSolution& orbit);

/// Mean in-band flux of one spectrum; throws CoverageError if the band is not covered.
double band_mean(const ObservedSpectrum& spec, const Bandpass& band);

/// Points keep the input order. Anchor: mean of the upper quartile of band
/// means, or of the spectra whose phase falls in `out_of_eclipse` when given.
LightCurve extract_light_curve(const std::vector<ObservedSpectrum>& spectra, const Bandpass& band,
                               const OrbitalSolution& orbit,
                               const std::optional<std::vector<PhaseWindow>>& out_of_eclipse = std::nullopt);

std::string format_light_curve(const LightCurve& curve);

/// Straight continuum a + b (lambda - lambda_c) such that the least-squares
/// line through the normalized window means is exactly 1, hence idempotent.
struct Continuum {
    double a = 1.0;
    double b = 0.0;
    double lambda_c = 0.0;

    double operator()(double lambda) const { return a + b * (lambda - lambda_c); }
};

Continuum fit_continuum(const ObservedSpectrum& spec, const std::vector<Bandpass>& windows);
ObservedSpectrum normalize_spectrum(const ObservedSpectrum& spec, const std::vector<Bandpass>& windows);

ObservedSpectrum truncate_window(const ObservedSpectrum& spec, double center_lambda, double half_width);

}  // namespace bsei
