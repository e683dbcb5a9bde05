#include "bsei/service.hpp"

#include <httplib.h>

#include <future>
#include <map>
#include <mutex>
#include <shared_mutex>

#include "bsei/errors.hpp"
#include "bsei/serialization.hpp"

namespace bsei {

namespace {

struct HttpError {
    int status;
    std::string code;
    std::string detail;
    std::vector<std::string> fields;
};

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const HttpError& e) {
    send_json(res, e.status, {{"error", {{"code", e.code}, {"detail", e.detail}, {"fields", e.fields}}}});
}

json parse_body(const httplib::Request& req) {
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        throw HttpError{400, "bad_json", e.what(), {}};
    }
}

const json& require(const json& body, const std::string& key) {
    if (!body.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object", {}};
    auto it = body.find(key);
    if (it == body.end()) throw HttpError{400, "missing_field", key + " is required", {key}};
    return *it;
}

template <class T, class F>
T optional_field(const json& body, const std::string& key, T fallback, F&& read) {
    auto it = body.find(key);
    return it == body.end() ? fallback : read(*it);
}

void reject_unknown(const json& body, std::initializer_list<const char*> known) {
    if (!body.is_object()) throw HttpError{400, "bad_request", "request body must be a JSON object", {}};
    std::vector<std::string> bad;
    for (auto it = body.begin(); it != body.end(); ++it)
        if (std::none_of(known.begin(), known.end(), [&](const char* k) { return it.key() == k; })) bad.push_back(it.key());
    if (!bad.empty()) throw HttpError{400, "unknown_field", "unknown request fields", bad};
}

std::vector<double> number_list(const json& j, const std::string& name) {
    if (!j.is_array()) throw ValidationError(name + " must be an array of numbers", {name});
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) throw ValidationError(name + " must be an array of numbers", {name});
        out.push_back(v.get<double>());
    }
    return out;
}

Bandpass band_from_json(const json& j, const std::string& name) {
    if (!j.is_object()) throw ValidationError(name + " must be an object", {name});
    Bandpass b;
    for (auto it = j.begin(); it != j.end(); ++it)
        if (it.key() != "label" && it.key() != "lambda_min" && it.key() != "lambda_max" && it.key() != "kind")
            throw ValidationError(name + ": unknown field " + it.key(), {it.key()});
    if (!j.contains("lambda_min") || !j["lambda_min"].is_number() || !j.contains("lambda_max") ||
        !j["lambda_max"].is_number())
        throw ValidationError(name + " needs numeric lambda_min and lambda_max", {"lambda_min", "lambda_max"});
    b.label = j.value("label", name);
    b.lambda_min = j["lambda_min"].get<double>();
    b.lambda_max = j["lambda_max"].get<double>();
    const auto kind = j.value("kind", std::string("continuum"));
    if (kind == "continuum")
        b.kind = BandKind::continuum;
    else if (kind == "wind")
        b.kind = BandKind::wind;
    else
        throw ValidationError(name + ": kind must be continuum or wind", {"kind"});
    b.validate();
    return b;
}

std::vector<Bandpass> bands_from_json(const json& j, const std::string& name) {
    if (!j.is_array()) throw ValidationError(name + " must be an array", {name});
    std::vector<Bandpass> out;
    for (const auto& b : j) out.push_back(band_from_json(b, name));
    return out;
}

using ProfilePtr = std::shared_ptr<const SingleStarProfile>;

}  // namespace

struct Service::State {
    ServiceOptions options;

    mutable std::shared_mutex session_mutex;  // spectra, current params, orbit
    std::string session_id = "default";
    std::vector<std::string> spectrum_order;
    std::map<std::string, ObservedSpectrum> spectra;
    std::optional<WindLawParams> params1, params2;
    std::optional<OrbitalSolution> orbit;

    mutable std::mutex cache_mutex;
    std::map<std::string, std::shared_future<ProfilePtr>> cache;

    json session_json() const {
        json spectra_j = json::array();
        for (const auto& id : spectrum_order) spectra_j.push_back(to_json(spectra.at(id)));
        json j{{"id", session_id}, {"version", kVersion}, {"spectra", spectra_j}};
        if (params1) j["params1"] = to_json(*params1);
        if (params2) j["params2"] = to_json(*params2);
        if (orbit) j["orbit"] = to_json(*orbit);
        return j;
    }

    // Caller holds session_mutex exclusively.
    void persist() const {
        if (!options.session_file) return;
        const auto tmp = options.session_file->string() + ".tmp";
        write_text(tmp, session_json().dump(2) + "\n");
        std::filesystem::rename(tmp, *options.session_file);
    }

    static std::string profile_key(const WindLawParams& p, const DoubletSpec& d, const GridConfig& g) {
        return fingerprint({{"params", to_json(p)}, {"doublet", to_json(d)}, {"grid", to_json(g)}});
    }

    // One computation per fingerprint even under concurrent requests.
    ProfilePtr profile(const WindLawParams& p, const DoubletSpec& d, GridConfig g) {
        if (g.threads == 0) g.threads = options.compute_threads;
        const auto key = profile_key(p, d, g);
        std::promise<ProfilePtr> promise;
        std::shared_future<ProfilePtr> fut;
        bool owner = false;
        {
            std::lock_guard lock(cache_mutex);
            auto it = cache.find(key);
            if (it != cache.end()) {
                fut = it->second;
            } else {
                fut = promise.get_future().share();
                cache.emplace(key, fut);
                owner = true;
            }
        }
        if (owner) {
            try {
                promise.set_value(std::make_shared<const SingleStarProfile>(single_star_profile(p, d, g)));
            } catch (...) {
                {
                    std::lock_guard lock(cache_mutex);
                    cache.erase(key);
                }
                promise.set_exception(std::current_exception());
            }
        }
        return fut.get();
    }

    json handle_profile(const json& body) {
        reject_unknown(body, {"params", "doublet", "grid"});
        const auto params = params_from_json(require(body, "params"));
        const auto doublet = optional_field(body, "doublet", DoubletSpec{}, doublet_from_json);
        const auto grid = optional_field(body, "grid", GridConfig{}, grid_from_json);
        const auto f = profile(params, doublet, grid);
        auto out = to_json(*f);
        out["fingerprint"] = profile_key(params, doublet, grid);
        return out;
    }

    json handle_sequence(const json& body) {
        reject_unknown(body, {"params1", "params2", "orbit", "phases", "doublet", "grid", "rule"});
        const auto p1 = params_from_json(require(body, "params1"));
        const auto p2 = params_from_json(require(body, "params2"));
        const auto orb = orbit_from_json(require(body, "orbit"));
        const auto phases = phases_from_json(require(body, "phases"));
        const auto doublet = optional_field(body, "doublet", DoubletSpec{}, doublet_from_json);
        const auto grid = optional_field(body, "grid", GridConfig{}, grid_from_json);
        const auto rule = optional_field(body, "rule", WeightRule::adopted, [](const json& j) {
            if (!j.is_string()) throw ValidationError("rule must be a string", {"rule"});
            return weight_rule_from_string(j.get<std::string>());
        });
        for (std::size_t i = 0; i < phases.size(); ++i) {
            if (!(phases[i].phase >= 0.0 && phases[i].phase < 1.0))
                throw HttpError{400, "phase_out_of_range", "phases must lie in [0, 1)", {"phases"}};
            if (i > 0 && phases[i].phase < phases[i - 1].phase)
                throw HttpError{400, "unsorted_phases", "phases must be sorted ascending", {"phases"}};
        }
        {
            std::unique_lock lock(session_mutex);
            params1 = p1;
            params2 = p2;
            orbit = orb;
            persist();
        }
        json profiles = json::array();
        const auto k1 = profile_key(p1, doublet, grid), k2 = profile_key(p2, doublet, grid);
        if (!phases.empty()) {
            const auto f1 = profile(p1, doublet, grid);
            const auto f2 = profile(p2, doublet, grid);
            const int threads = grid.threads ? grid.threads : options.compute_threads;
            for (const auto& b : phase_sequence(*f1, *f2, orb, phases, rule, threads)) profiles.push_back(to_json(b));
        }
        return {{"n", profiles.size()},
                {"rule", to_string(rule)},
                {"fingerprints", {k1, k2}},
                {"profiles", profiles}};
    }

    json handle_upload(const std::string& text) {
        auto spec = parse_spectrum(text);
        std::unique_lock lock(session_mutex);
        if (!spectra.count(spec.id)) spectrum_order.push_back(spec.id);
        const auto id = spec.id;
        const auto n = spec.wavelength.size();
        spectra[id] = std::move(spec);
        persist();
        return {{"id", id}, {"n", n}};
    }

    std::optional<json> handle_get_spectrum(const std::string& id) const {
        std::shared_lock lock(session_mutex);
        auto it = spectra.find(id);
        if (it == spectra.end()) return std::nullopt;
        return to_json(it->second);
    }

    std::vector<ObservedSpectrum> select_spectra(const json& body) const {
        std::shared_lock lock(session_mutex);
        std::vector<ObservedSpectrum> out;
        auto it = body.find("spectrum_ids");
        if (it == body.end()) {
            for (const auto& id : spectrum_order) out.push_back(spectra.at(id));
        } else {
            if (!it->is_array()) throw ValidationError("spectrum_ids must be an array of strings", {"spectrum_ids"});
            for (const auto& id : *it) {
                if (!id.is_string()) throw ValidationError("spectrum_ids must be an array of strings", {"spectrum_ids"});
                auto s = spectra.find(id.get<std::string>());
                if (s == spectra.end()) throw HttpError{404, "not_found", "unknown spectrum " + id.get<std::string>(), {"spectrum_ids"}};
                out.push_back(s->second);
            }
        }
        return out;
    }

    json handle_lightcurve(const json& body) {
        reject_unknown(body, {"spectrum_ids", "band", "orbit", "out_of_eclipse"});
        const auto band = band_from_json(require(body, "band"), "band");
        const auto orb = orbit_from_json(require(body, "orbit"));
        std::optional<std::vector<PhaseWindow>> mask;
        if (auto it = body.find("out_of_eclipse"); it != body.end()) {
            if (!it->is_array()) throw ValidationError("out_of_eclipse must be an array", {"out_of_eclipse"});
            mask.emplace();
            for (const auto& w : *it) {
                if (!w.is_object() || !w.contains("from") || !w.contains("to") || !w["from"].is_number() ||
                    !w["to"].is_number())
                    throw ValidationError("out_of_eclipse entries need numeric from and to", {"out_of_eclipse"});
                mask->push_back({w["from"].get<double>(), w["to"].get<double>()});
            }
        }
        const auto spectra_sel = select_spectra(body);
        if (spectra_sel.empty()) throw ContractError("no spectra loaded");
        return to_json(extract_light_curve(spectra_sel, band, orb, mask));
    }

    json handle_goodness(const json& body) {
        reject_unknown(body, {"model", "spectrum_id", "observed", "window", "sigma", "continuum_windows", "normalize"});
        const auto& m = require(body, "model");
        if (!m.is_object()) throw ValidationError("model must be an object", {"model"});
        BseiProfile model;
        model.wavelength = number_list(require(m, "wavelength"), "model.wavelength");
        model.flux = number_list(require(m, "flux"), "model.flux");
        if (model.wavelength.size() != model.flux.size() || model.wavelength.size() < 2)
            throw ValidationError("model wavelength and flux must have equal length >= 2", {"model"});
        for (std::size_t i = 1; i < model.wavelength.size(); ++i)
            if (!(model.wavelength[i] > model.wavelength[i - 1]))
                throw ValidationError("model wavelength must be strictly increasing", {"model.wavelength"});
        model.w1 = 1.0;
        model.w2 = 0.0;
        if (auto w = m.find("weights"); w != m.end()) {
            const auto ws = number_list(*w, "model.weights");
            if (ws.size() != 2) throw ValidationError("model.weights needs two numbers", {"model.weights"});
            model.w1 = ws[0];
            model.w2 = ws[1];
        }

        ObservedSpectrum obs;
        if (auto id = body.find("spectrum_id"); id != body.end()) {
            if (!id->is_string()) throw ValidationError("spectrum_id must be a string", {"spectrum_id"});
            std::shared_lock lock(session_mutex);
            auto found = spectra.find(id->get<std::string>());
            if (found == spectra.end())
                throw HttpError{404, "not_found", "unknown spectrum " + id->get<std::string>(), {"spectrum_id"}};
            obs = found->second;
        } else {
            const auto& o = require(body, "observed");
            if (!o.is_object()) throw ValidationError("observed must be an object", {"observed"});
            obs.id = "inline";
            obs.wavelength = number_list(require(o, "wavelength"), "observed.wavelength");
            obs.flux = number_list(require(o, "flux"), "observed.flux");
            obs.validate();
        }
        const auto cw = optional_field(body, "continuum_windows", std::vector<Bandpass>{},
                                       [](const json& j) { return bands_from_json(j, "continuum_windows"); });
        const bool normalize = optional_field(body, "normalize", false, [](const json& j) {
            if (!j.is_boolean()) throw ValidationError("normalize must be true or false", {"normalize"});
            return j.get<bool>();
        });
        if (normalize) obs = normalize_spectrum(obs, cw);
        const auto window = band_from_json(require(body, "window"), "window");
        std::optional<double> sigma;
        if (auto s = body.find("sigma"); s != body.end()) {
            if (!s->is_number()) throw ValidationError("sigma must be a number", {"sigma"});
            sigma = s->get<double>();
        }
        const auto g = goodness(model, obs, window, sigma, cw);
        return {{"rms", g.rms}, {"chi2_reduced", g.chi2_reduced}, {"n", g.n}};
    }

    void load(const json& j) {
        if (!j.is_object()) throw ParseError("session file must hold a JSON object", 0);
        std::unique_lock lock(session_mutex);
        session_id = j.value("id", std::string("default"));
        spectra.clear();
        spectrum_order.clear();
        for (const auto& s : j.value("spectra", json::array())) {
            ObservedSpectrum o;
            o.id = s.at("id").get<std::string>();
            o.hjd = s.at("hjd").get<double>();
            o.wavelength = number_list(s.at("wavelength"), "wavelength");
            o.flux = number_list(s.at("flux"), "flux");
            if (s.contains("phase")) o.phase = s["phase"].get<double>();
            o.validate();
            spectrum_order.push_back(o.id);
            spectra[o.id] = std::move(o);
        }
        params1 = j.contains("params1") ? std::optional(params_from_json(j["params1"])) : std::nullopt;
        params2 = j.contains("params2") ? std::optional(params_from_json(j["params2"])) : std::nullopt;
        orbit = j.contains("orbit") ? std::optional(orbit_from_json(j["orbit"])) : std::nullopt;
    }
};

Service::Service(ServiceOptions options) : state_(std::make_unique<State>()) {
    state_->options = std::move(options);
    if (state_->options.session_file && std::filesystem::exists(*state_->options.session_file))
        load_session(*state_->options.session_file);
}

Service::~Service() = default;

std::size_t Service::cached_profiles() const {
    std::lock_guard lock(state_->cache_mutex);
    return state_->cache.size();
}

void Service::save_session(const std::filesystem::path& path) const {
    std::shared_lock lock(state_->session_mutex);
    write_text(path, state_->session_json().dump(2) + "\n");
}

void Service::load_session(const std::filesystem::path& path) {
    try {
        state_->load(read_json(path));
    } catch (const json::exception& e) {
        throw ParseError(path.string() + ": " + e.what(), 0);
    }
}

namespace {

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const HttpError& e) {
        send_error(res, e);
    } catch (const ValidationError& e) {
        send_error(res, {e.is_invariant() ? 422 : 400, e.is_invariant() ? "invariant_violation" : "invalid_field",
                         e.what(), e.fields()});
    } catch (const ParseError& e) {
        send_error(res, {400, "parse_error", e.what(), {}});
    } catch (const ContractError& e) {
        send_error(res, {400, "contract_violation", e.what(), {}});
    } catch (const CoverageError& e) {
        send_error(res, {422, "coverage", e.what(), {}});
    } catch (const DomainError& e) {
        send_error(res, {422, "domain", e.what(), {}});
    } catch (const NumericError& e) {
        send_error(res, {500, "numeric_failure", e.what(), {}});
    } catch (const json::exception& e) {
        send_error(res, {400, "bad_request", e.what(), {}});
    } catch (const std::exception& e) {
        send_error(res, {500, "internal", e.what(), {}});
    }
}

}  // namespace

void Service::mount(httplib::Server& server) {
    State& s = *state_;
    server.Post("/api/profile/single", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, s.handle_profile(parse_body(req))); });
    });
    server.Post("/api/bsei/sequence", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, s.handle_sequence(parse_body(req))); });
    });
    server.Post("/api/spectra", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 201, s.handle_upload(req.body)); });
    });
    server.Get(R"(/api/spectra/([^/]+))", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            const auto id = req.matches[1].str();
            auto found = s.handle_get_spectrum(id);
            if (!found) throw HttpError{404, "not_found", "unknown spectrum " + id, {"id"}};
            send_json(res, 200, *found);
        });
    });
    server.Post("/api/lightcurve", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, s.handle_lightcurve(parse_body(req))); });
    });
    server.Post("/api/fit/goodness", [&s](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, 200, s.handle_goodness(parse_body(req))); });
    });
    server.Get("/api/health", [](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, {{"status", "ok"}, {"version", kVersion}, {"fingerprint", build_fingerprint()}});
    });
    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_error(res, {res.status, res.status == 404 ? "not_found" : "http_error", "no such endpoint", {}});
    });
}

bool serve(const std::string& host, int port, ServiceOptions options) {
    Service service(std::move(options));
    httplib::Server server;
    service.mount(server);
    return server.listen(host, port);
}

}  // namespace bsei
