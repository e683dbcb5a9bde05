#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>

namespace httplib {
class Server;
}

namespace bsei {

struct ServiceOptions {
    std::optional<std::filesystem::path> session_file;  ///< loaded at start if present, rewritten on mutation
    int compute_threads = 0;                            ///< used when a request leaves grid.threads at 0
};

/// JSON API over the compute core. One in-memory session: uploaded spectra,
/// the last params pair and orbit, and single-star profiles cached by the
/// fingerprint of (params, doublet, grid).
class Service {
public:
    explicit Service(ServiceOptions options = {});
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    void mount(httplib::Server& server);

    std::size_t cached_profiles() const;
    void save_session(const std::filesystem::path& path) const;
    void load_session(const std::filesystem::path& path);

private:
    struct State;
    std::unique_ptr<State> state_;
};

/// Blocks until the server stops. Returns false if the address cannot be bound.
bool serve(const std::string& host, int port, ServiceOptions options = {});

}  // namespace bsei
