#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "bsei/binary_synthesis.hpp"
#include "bsei/fit.hpp"
#include "bsei/sei_engine.hpp"
#include "bsei/spectra_io.hpp"
#include "bsei/wind_model.hpp"

namespace bsei {

using json = nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

// Object readers are strict: unknown keys, wrong types and missing required
// keys raise ValidationError naming the fields; the result is validated, so
// cross-field invariants come back with is_invariant() set.

json to_json(const WindLawParams& p);
WindLawParams params_from_json(const json& j);  ///< every field required except epsilon (default 0)

json to_json(const DoubletSpec& d);
DoubletSpec doublet_from_json(const json& j);  ///< ion_label optional

json to_json(const OrbitalSolution& o);
OrbitalSolution orbit_from_json(const json& j);  ///< period_days, k1_kms, k2_kms, l1, l2 required

/// `threads` is not serialized: it never changes results.
json to_json(const GridConfig& g);
GridConfig grid_from_json(const json& j);  ///< all fields optional

json to_json(const EclipseState& e);
EclipseState eclipse_from_json(const json& j);

std::string to_string(WeightRule rule);
WeightRule weight_rule_from_string(const std::string& s);

/// {"phase", "eclipse"?} objects or bare numbers.
std::vector<PhasePoint> phases_from_json(const json& j);

json to_json(const SingleStarProfile& f);
json to_json(const BseiProfile& b);
json to_json(const ObservedSpectrum& s);
json to_json(const LightCurve& lc);
json to_json(const FitReport& r);

/// 64-bit FNV-1a over the compact dump (keys sorted) as 16 hex digits.
std::string fingerprint(const json& j);

/// Fingerprint of the version and the default numerical configuration.
std::string build_fingerprint();

/// `# {json}` header with params, doublet and grid, then `x f_core f_halo`
/// rows at 17 significant digits.
std::string format_profile_table(const SingleStarProfile& f, const WindLawParams& params, const DoubletSpec& doublet,
                                 const GridConfig& grid);

struct ProfileTable {
    json header;
    std::vector<double> x, f_core, f_halo;
};
ProfileTable parse_profile_table(const std::string& text);

/// Velocity and optical-depth laws sampled on log-spaced radii:
/// `r,w,dtau_dw_blue,dtau_dw_red`.
std::string format_laws_csv(const WindLawParams& params, const GridConfig& grid, int samples = 200);

/// `bsei_phi0.2500.dat`
std::string phase_file_name(double phase);

/// `# {json}` header with phase, weights and RVs, then `wavelength_A flux` rows.
std::string format_bsei_table(const BseiProfile& b);

/// Writes one table per requested phase plus manifest.json into `dir`; files are
/// named after the requested (unreduced) phase.
void export_phase_sequence(const std::vector<BseiProfile>& seq, const std::vector<PhasePoint>& phases,
                           const json& inputs, const std::filesystem::path& dir);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);
json read_json(const std::filesystem::path& path);

}  // namespace bsei
