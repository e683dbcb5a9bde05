#include "bsei/serialization.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "bsei/errors.hpp"
#include "bsei/numfmt.hpp"

namespace bsei {

namespace {

// Collects every bad field of one object before throwing.
class Reader {
public:
    Reader(const json& j, std::string what) : j_(j), what_(std::move(what)) {
        if (!j_.is_object()) throw ValidationError(what_ + " must be a JSON object", {what_});
    }

    double number(const std::string& key, std::optional<double> fallback = std::nullopt) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) {
            if (!fallback) fail(key, "is required");
            return fallback.value_or(0.0);
        }
        if (!it->is_number()) {
            fail(key, "must be a number");
            return 0.0;
        }
        return it->get<double>();
    }

    int integer(const std::string& key, int fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_number_integer()) {
            fail(key, "must be an integer");
            return fallback;
        }
        return it->get<int>();
    }

    bool boolean(const std::string& key, bool fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_boolean()) {
            fail(key, "must be true or false");
            return fallback;
        }
        return it->get<bool>();
    }

    std::string text(const std::string& key, std::string fallback) {
        seen_.insert(key);
        auto it = j_.find(key);
        if (it == j_.end()) return fallback;
        if (!it->is_string()) {
            fail(key, "must be a string");
            return fallback;
        }
        return it->get<std::string>();
    }

    void finish() {
        for (auto it = j_.begin(); it != j_.end(); ++it)
            if (!seen_.count(it.key())) fail(it.key(), "is not a known field");
        if (!bad_.empty()) throw ValidationError(what_ + ": " + msg_, bad_);
    }

private:
    void fail(const std::string& key, const std::string& why) {
        bad_.push_back(key);
        msg_ += (msg_.empty() ? "" : "; ") + key + " " + why;
    }

    const json& j_;
    std::string what_;
    std::set<std::string> seen_;
    std::vector<std::string> bad_;
    std::string msg_;
};

json numbers(const std::vector<double>& v) { return json(v); }

}  // namespace

json to_json(const WindLawParams& p) {
    return {{"w0", p.w0},
            {"beta", p.beta},
            {"w_gauss", p.w_gauss},
            {"w1", p.w1},
            {"alpha1", p.alpha1},
            {"alpha2", p.alpha2},
            {"t_tot_blue", p.t_tot_blue},
            {"t_tot_red", p.t_tot_red},
            {"a_phot_blue", p.a_phot_blue},
            {"a_phot_red", p.a_phot_red},
            {"w_phot_blue", p.w_phot_blue},
            {"w_phot_red", p.w_phot_red},
            {"v_inf", p.v_inf},
            {"epsilon", p.epsilon}};
}

WindLawParams params_from_json(const json& j) {
    Reader r(j, "params");
    WindLawParams p;
    p.w0 = r.number("w0");
    p.beta = r.number("beta");
    p.w_gauss = r.number("w_gauss");
    p.w1 = r.number("w1");
    p.alpha1 = r.number("alpha1");
    p.alpha2 = r.number("alpha2");
    p.t_tot_blue = r.number("t_tot_blue");
    p.t_tot_red = r.number("t_tot_red");
    p.a_phot_blue = r.number("a_phot_blue");
    p.a_phot_red = r.number("a_phot_red");
    p.w_phot_blue = r.number("w_phot_blue");
    p.w_phot_red = r.number("w_phot_red");
    p.v_inf = r.number("v_inf");
    p.epsilon = r.number("epsilon", 0.0);
    r.finish();
    p.validate();
    return p;
}

json to_json(const DoubletSpec& d) {
    return {{"lambda_blue", d.lambda_blue}, {"lambda_red", d.lambda_red}, {"ion_label", d.ion_label}};
}

DoubletSpec doublet_from_json(const json& j) {
    Reader r(j, "doublet");
    DoubletSpec d;
    d.lambda_blue = r.number("lambda_blue");
    d.lambda_red = r.number("lambda_red");
    d.ion_label = r.text("ion_label", "");
    r.finish();
    d.validate();
    return d;
}

json to_json(const OrbitalSolution& o) {
    return {{"period_days", o.period_days}, {"t0", o.t0},           {"eccentricity", o.eccentricity},
            {"omega_deg", o.omega_deg},     {"k1_kms", o.k1_kms},   {"k2_kms", o.k2_kms},
            {"gamma_kms", o.gamma_kms},     {"l1", o.l1},           {"l2", o.l2}};
}

OrbitalSolution orbit_from_json(const json& j) {
    Reader r(j, "orbit");
    OrbitalSolution o;
    o.period_days = r.number("period_days");
    o.t0 = r.number("t0", 0.0);
    o.eccentricity = r.number("eccentricity", 0.0);
    o.omega_deg = r.number("omega_deg", 90.0);
    o.k1_kms = r.number("k1_kms");
    o.k2_kms = r.number("k2_kms");
    o.gamma_kms = r.number("gamma_kms", 0.0);
    o.l1 = r.number("l1");
    o.l2 = r.number("l2");
    r.finish();
    o.validate();
    return o;
}

json to_json(const GridConfig& g) {
    return {{"x_step", g.x_step},   {"core_rays", g.core_rays}, {"halo_rays", g.halo_rays},
            {"z_samples", g.z_samples}, {"r_cap", g.r_cap},     {"w_floor", g.w_floor},
            {"occultation", g.occultation}};
}

GridConfig grid_from_json(const json& j) {
    Reader r(j, "grid");
    GridConfig g;
    g.x_step = r.number("x_step", g.x_step);
    g.core_rays = r.integer("core_rays", g.core_rays);
    g.halo_rays = r.integer("halo_rays", g.halo_rays);
    g.z_samples = r.integer("z_samples", g.z_samples);
    g.r_cap = r.number("r_cap", g.r_cap);
    g.w_floor = r.number("w_floor", g.w_floor);
    g.occultation = r.boolean("occultation", g.occultation);
    g.threads = r.integer("threads", g.threads);
    r.finish();
    std::vector<std::string> bad;
    if (!(g.x_step > 0.0 && g.x_step <= 0.1)) bad.push_back("x_step");
    if (g.core_rays < 2 || g.core_rays > 4096) bad.push_back("core_rays");
    if (g.halo_rays < 2 || g.halo_rays > 4096) bad.push_back("halo_rays");
    if (g.z_samples < 64 || g.z_samples > 65536) bad.push_back("z_samples");
    if (!(g.r_cap > 1.0)) bad.push_back("r_cap");
    if (!(g.w_floor >= 0.0)) bad.push_back("w_floor");
    if (g.threads < 0) bad.push_back("threads");
    if (!bad.empty()) throw ValidationError("grid: out of range", bad);
    return g;
}

json to_json(const EclipseState& e) {
    static const char* names[] = {"none", "primary_eclipsed", "secondary_eclipsed"};
    return {{"kind", names[static_cast<int>(e.kind)]}, {"lc", e.lc}};
}

EclipseState eclipse_from_json(const json& j) {
    Reader r(j, "eclipse");
    EclipseState e;
    const auto kind = r.text("kind", "none");
    e.lc = r.number("lc", 1.0);
    r.finish();
    if (kind == "none")
        e.kind = EclipseKind::none;
    else if (kind == "primary_eclipsed")
        e.kind = EclipseKind::primary_eclipsed;
    else if (kind == "secondary_eclipsed")
        e.kind = EclipseKind::secondary_eclipsed;
    else
        throw ValidationError("eclipse kind must be none, primary_eclipsed or secondary_eclipsed", {"kind"});
    e.validate();
    return e;
}

std::string to_string(WeightRule rule) { return rule == WeightRule::adopted ? "adopted" : "printed"; }

WeightRule weight_rule_from_string(const std::string& s) {
    if (s == "adopted") return WeightRule::adopted;
    if (s == "printed") return WeightRule::printed;
    throw ValidationError("rule must be adopted or printed", {"rule"});
}

std::vector<PhasePoint> phases_from_json(const json& j) {
    if (!j.is_array()) throw ValidationError("phases must be an array", {"phases"});
    std::vector<PhasePoint> out;
    for (const auto& item : j) {
        PhasePoint p;
        if (item.is_number()) {
            p.phase = item.get<double>();
        } else if (item.is_object()) {
            for (auto k = item.begin(); k != item.end(); ++k)
                if (k.key() != "phase" && k.key() != "eclipse")
                    throw ValidationError("phases[]: " + k.key() + " is not a known field", {k.key()});
            auto ph = item.find("phase");
            if (ph == item.end() || !ph->is_number()) throw ValidationError("phases[]: phase must be a number", {"phase"});
            p.phase = ph->get<double>();
            if (auto ec = item.find("eclipse"); ec != item.end()) p.eclipse = eclipse_from_json(*ec);
        } else {
            throw ValidationError("phases[] entries must be numbers or objects", {"phases"});
        }
        out.push_back(p);
    }
    return out;
}

json to_json(const SingleStarProfile& f) {
    return {{"n", f.grid.x.size()},
            {"lambda_ref", f.grid.lambda_ref},
            {"v_inf", f.grid.v_inf},
            {"x", numbers(f.grid.x)},
            {"wavelength", numbers(f.grid.wavelengths())},
            {"f_core", numbers(f.f_core)},
            {"f_halo", numbers(f.f_halo)},
            {"f_total", numbers(f.f_total)}};
}

json to_json(const BseiProfile& b) {
    return {{"phase", b.phase},
            {"n", b.wavelength.size()},
            {"wavelength", numbers(b.wavelength)},
            {"flux", numbers(b.flux)},
            {"weights", {b.w1, b.w2}},
            {"weights_clipped", b.weights_clipped},
            {"rv", {b.rv1, b.rv2}}};
}

json to_json(const ObservedSpectrum& s) {
    json j{{"id", s.id},
           {"hjd", s.hjd},
           {"n", s.wavelength.size()},
           {"wavelength", numbers(s.wavelength)},
           {"flux", numbers(s.flux)}};
    if (s.phase) j["phase"] = *s.phase;
    return j;
}

json to_json(const LightCurve& lc) {
    json pts = json::array();
    for (const auto& p : lc.points) pts.push_back({{"phase", p.phase}, {"lc", p.lc}, {"spectrum_id", p.spectrum_id}});
    return {{"band",
             {{"label", lc.band.label},
              {"lambda_min", lc.band.lambda_min},
              {"lambda_max", lc.band.lambda_max},
              {"kind", lc.band.kind == BandKind::continuum ? "continuum" : "wind"}}},
            {"n", lc.points.size()},
            {"points", pts}};
}

json to_json(const FitReport& r) {
    json phases = json::array();
    for (const auto& p : r.phases)
        phases.push_back({{"phase", p.phase},
                          {"spectrum_id", p.spectrum_id},
                          {"rms", p.rms},
                          {"chi2_reduced", p.chi2_reduced},
                          {"n", p.n}});
    json ranking = json::array();
    if (r.phases.size() >= 2)
        for (const auto& [ph, rms] : phase_quality_profile(r)) ranking.push_back({{"phase", ph}, {"rms", rms}});
    return {{"n", r.phases.size()},
            {"phases", phases},
            {"aggregate", r.aggregate},
            {"aggregate_rms", r.aggregate_rms},
            {"ranking", ranking}};
}

std::string fingerprint(const json& j) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : j.dump()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string build_fingerprint() {
    return fingerprint({{"version", kVersion}, {"grid", to_json(GridConfig{})}, {"c_kms", kSpeedOfLightKms}});
}

std::string format_profile_table(const SingleStarProfile& f, const WindLawParams& params, const DoubletSpec& doublet,
                                 const GridConfig& grid) {
    const json header{{"params", to_json(params)},
                      {"doublet", to_json(doublet)},
                      {"grid", to_json(grid)},
                      {"lambda_ref", f.grid.lambda_ref},
                      {"v_inf", f.grid.v_inf},
                      {"columns", {"x", "f_core", "f_halo"}}};
    std::string out = "# " + header.dump() + "\n";
    for (std::size_t i = 0; i < f.grid.x.size(); ++i)
        out += numfmt::sig(f.grid.x[i], 17) + " " + numfmt::sig(f.f_core[i], 17) + " " + numfmt::sig(f.f_halo[i], 17) + "\n";
    return out;
}

ProfileTable parse_profile_table(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    ProfileTable t;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (n == 1) {
            if (line.rfind("# ", 0) != 0) throw ParseError("expected '# {json}' header", 1);
            try {
                t.header = json::parse(line.substr(2));
            } catch (const json::exception& e) {
                throw ParseError(std::string("bad header json: ") + e.what(), 1);
            }
            continue;
        }
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string a, b, c, extra;
        if (!(row >> a >> b >> c) || (row >> extra)) throw ParseError("expected 3 columns", n);
        try {
            t.x.push_back(numfmt::parse_double(a));
            t.f_core.push_back(numfmt::parse_double(b));
            t.f_halo.push_back(numfmt::parse_double(c));
        } catch (const std::invalid_argument&) {
            throw ParseError("bad number", n);
        }
    }
    if (n == 0) throw ParseError("empty profile table", 0);
    return t;
}

std::string format_laws_csv(const WindLawParams& params, const GridConfig& grid, int samples) {
    params.validate();
    if (samples < 2) throw ValidationError("samples must be >= 2", {"samples"});
    const WindModel model(params);
    const double r_max = RayQuadrature::make(params, grid).p_max;
    std::string out = "r,w,dtau_dw_blue,dtau_dw_red\n";
    for (int i = 0; i < samples; ++i) {
        const double r = i == samples - 1 ? r_max : std::exp(std::log(r_max) * i / (samples - 1));
        const double w = std::min(model.velocity(r), params.w1);
        out += numfmt::sig(r, 10) + "," + numfmt::sig(w, 10) + "," +
               numfmt::sig(model.tau_radial(w, Component::blue), 10) + "," +
               numfmt::sig(model.tau_radial(w, Component::red), 10) + "\n";
    }
    return out;
}

std::string phase_file_name(double phase) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "bsei_phi%.4f.dat", phase);
    return buf;
}

std::string format_bsei_table(const BseiProfile& b) {
    const json header{{"phase", b.phase},
                      {"weights", {b.w1, b.w2}},
                      {"weights_clipped", b.weights_clipped},
                      {"rv", {b.rv1, b.rv2}},
                      {"columns", {"wavelength_A", "flux"}}};
    std::string out = "# " + header.dump() + "\n";
    for (std::size_t i = 0; i < b.wavelength.size(); ++i)
        out += numfmt::sig(b.wavelength[i], 17) + " " + numfmt::sig(b.flux[i], 17) + "\n";
    return out;
}

void export_phase_sequence(const std::vector<BseiProfile>& seq, const std::vector<PhasePoint>& phases,
                           const json& inputs, const std::filesystem::path& dir) {
    if (seq.size() != phases.size()) throw ContractError("profiles and phases differ in length");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
    json entries = json::array();
    std::set<std::string> names;
    for (const auto& p : phases)
        if (!names.insert(phase_file_name(p.phase)).second)
            throw ContractError("two phases share the file name " + phase_file_name(p.phase));
    for (std::size_t i = 0; i < seq.size(); ++i) {
        // Named after the requested phase, so 0 and 1 land in different files.
        const auto name = phase_file_name(phases[i].phase);
        write_text(dir / name, format_bsei_table(seq[i]));
        entries.push_back({{"phase", phases[i].phase},
                           {"reduced_phase", seq[i].phase},
                           {"file", name},
                           {"eclipse", to_json(phases[i].eclipse)},
                           {"weights", {seq[i].w1, seq[i].w2}},
                           {"weights_clipped", seq[i].weights_clipped},
                           {"rv", {seq[i].rv1, seq[i].rv2}}});
    }
    json manifest = inputs;
    manifest["n"] = seq.size();
    manifest["phases"] = entries;
    manifest["version"] = kVersion;
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");
}

std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    if (!out) throw IoError("write failed for " + path.string());
}

json read_json(const std::filesystem::path& path) {
    const auto text = read_text(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

}  // namespace bsei
