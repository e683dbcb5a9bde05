#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "bsei/binary_synthesis.hpp"
#include "bsei/spectra_io.hpp"

namespace bsei {

struct Goodness {
    double rms = 0.0;
    double chi2_reduced = 0.0;
    std::size_t n = 0;  ///< samples inside the window
};

/// Model flux linearly resampled at `wavelength`; beyond the model grid the
/// continuum level w1 + w2 is used.
std::vector<double> resample_model(const BseiProfile& model, const std::vector<double>& wavelength);

/// Plain metrics over paired samples with one sigma per sample.
Goodness compare(const std::vector<double>& model, const std::vector<double>& observed, const std::vector<double>& sigma);

/// Standard deviation of (F - 1) over the continuum windows of a normalized spectrum.
double continuum_sigma(const ObservedSpectrum& normalized, const std::vector<Bandpass>& continuum_windows);

/// `observed` must already be normalized. Without `sigma` the noise is
/// estimated from the continuum windows.
Goodness goodness(const BseiProfile& model, const ObservedSpectrum& observed, const Bandpass& window,
                  std::optional<double> sigma, const std::vector<Bandpass>& continuum_windows = {});

struct PhaseFit {
    double phase = 0.0;
    std::string spectrum_id;
    double rms = 0.0;
    double chi2_reduced = 0.0;
    std::size_t n = 0;
};

struct FitReport {
    std::vector<PhaseFit> phases;  ///< in observation order
    double aggregate = 0.0;        ///< mean chi2_reduced
    double aggregate_rms = 0.0;
};

/// (phase, rms) ordered best first; ties keep input order.
std::vector<std::pair<double, double>> phase_quality_profile(const FitReport& report);

std::string format_fit_csv(const FitReport& report);

/// Everything held fixed while wind parameters vary.
struct FitContext {
    WindLawParams params1;
    WindLawParams params2;
    DoubletSpec doublet;
    OrbitalSolution orbit;
    GridConfig grid;
    Bandpass window;                         ///< comparison window
    std::vector<Bandpass> continuum_windows;  ///< used to normalize raw observations
    std::optional<double> sigma;             ///< raw flux units; estimated when absent
    std::vector<EclipseState> eclipses;      ///< per observation; empty = no eclipses
    WeightRule rule = WeightRule::adopted;
};

/// Comparison window spanning both doublet members +- 1.3 v_inf.
Bandpass default_fit_window(const DoubletSpec& doublet, double v_inf);

/// Two line-free windows at 1.5 - 1.9 v_inf outside the doublet.
std::vector<Bandpass> default_continuum_windows(const DoubletSpec& doublet, double v_inf);

/// BSEI model for the observations' phases, normalizing each observation internally.
FitReport evaluate_fit(const FitContext& context, const std::vector<ObservedSpectrum>& observed);

enum class FitTarget { star1, star2, both };

struct FreeParam {
    std::string name;  ///< WindLawParams field, e.g. "t_tot_blue"
    double lo = 0.0;
    double hi = 0.0;
    FitTarget target = FitTarget::star1;
};

struct GridSearchOptions {
    int points = 9;
    int rounds = 3;
    double shrink = 3.0;
    int threads = 0;
};

struct GridSearchResult {
    std::vector<double> best;
    double score = 0.0;
    std::vector<double> final_step;  ///< grid spacing of the last scan per axis
    int evaluations = 0;
};

/// Coordinate descent over a box: one sweep of `points` values per axis,
/// then `rounds` sweeps in boxes shrunk by `shrink` around the incumbent.
/// Lower score wins; equal scores go to the lexicographically lower point.
GridSearchResult grid_search(const std::function<double(const std::vector<double>&)>& objective,
                             const std::vector<std::pair<double, double>>& bounds, const GridSearchOptions& options = {});

/// Reads or writes a WindLawParams field by its JSON name.
double get_param(const WindLawParams& params, const std::string& name);
void set_param(WindLawParams& params, const std::string& name, double value);

struct FitResult {
    WindLawParams params1;
    WindLawParams params2;
    std::vector<double> values;  ///< best value per free parameter
    std::vector<double> final_step;
    FitReport report;
    int evaluations = 0;
};

struct SynthOptions {
    double sigma = 0.02;       ///< Gaussian noise, normalized flux units
    std::uint64_t seed = 1;
    double step = 0.1;         ///< sampling in Angstrom
    double extent = 2.0;       ///< coverage in v_inf beyond each doublet member
    double continuum_slope = 0.0;  ///< relative change per Angstrom about the blue rest wavelength
};

/// Noisy observations of the BSEI model at `phases`, hjd = t0 + phase * P.
/// mt19937_64 + normal_distribution, so identical seeds give identical spectra.
std::vector<ObservedSpectrum> synthesize_observations(const WindLawParams& params1, const WindLawParams& params2,
                                                      const DoubletSpec& doublet, const OrbitalSolution& orbit,
                                                      const std::vector<PhasePoint>& phases, const GridConfig& grid,
                                                      const SynthOptions& options = {});

FitResult grid_refine(const std::vector<FreeParam>& free, const std::vector<ObservedSpectrum>& observed,
                      const FitContext& context, const GridSearchOptions& options = {});

}  // namespace bsei
