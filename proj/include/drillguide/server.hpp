#pragma once

// HTTP transport for the wire protocol. Each POST /v1/stream request carries
// a batch of NDJSON client lines; the response carries the server lines.
// Sessions outlive requests.

#include <memory>
#include <string>

#include <httplib.h>

#include "drillguide/wire.hpp"

namespace drillguide::wire {

class Server {
public:
    explicit Server(ExperimentConfig cfg) : engine_(std::move(cfg)) {
        http_.Get("/v1/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"v\":\"v1\",\"status\":\"ok\"}\n", "application/json");
        });
        http_.Post("/v1/stream", [this](const httplib::Request& req, httplib::Response& res) {
            const Outcome out = engine_.handle_batch(split_lines(req.body));
            if (out.close) res.set_header("Connection", "close");
            res.set_content(join_lines(out.lines), "application/x-ndjson");
        });
        http_.Options("/v1/stream", [](const httplib::Request&, httplib::Response&) {});
        http_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                   {"Access-Control-Allow-Headers", "Content-Type"},
                                   {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    }

    /// Binds to `port` (0 picks a free one) and returns the bound port, or -1.
    int bind(const std::string& host, int port) {
        if (port == 0) return http_.bind_to_any_port(host);
        return http_.bind_to_port(host, port) ? port : -1;
    }

    bool listen_after_bind() { return http_.listen_after_bind(); }
    void stop() { http_.stop(); }
    void wait_until_ready() { http_.wait_until_ready(); }

    Engine& engine() noexcept { return engine_; }

private:
    Engine engine_;
    httplib::Server http_;
};

}  // namespace drillguide::wire
