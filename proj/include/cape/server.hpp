#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <memory>
#include <mutex>
#include <string>
#include <thread>

#include "cape/io.hpp"
#include "cape/session.hpp"

namespace httplib {
class Server;
}

namespace cape {

struct ServeOptions {
    std::string host = "127.0.0.1";
    int port = 8080;  // 0 picks a free port
    /// Built UI assets mounted at "/" unless empty or missing.
    std::filesystem::path ui_dir;
    /// How long POST /api/answer waits for the round to be applied.
    std::chrono::milliseconds answer_wait{30000};
};

/// Parses "host:port", "host" or ":port".
void parse_bind(const std::string& bind, ServeOptions& opts);

/// Drives one session on a background thread and exposes it over HTTP.
/// The loop thread is the only writer of the session; handlers read a
/// snapshot refreshed after every round and forward answers through the
/// session's human channel.
class SessionServer {
public:
    SessionServer(Session& session, ServeOptions opts);
    ~SessionServer();
    SessionServer(const SessionServer&) = delete;
    SessionServer& operator=(const SessionServer&) = delete;

    /// Binds and starts both threads; returns the bound port.
    int start();
    /// Stops the loop and the listener, then writes a checkpoint.
    void stop();
    bool loop_done() const { return loop_done_.load(); }

    json session_view() const;
    json query_view() const;
    json marginals_view() const;
    json metrics_view() const;
    json history_view() const;

private:
    void loop();
    void refresh_snapshot();
    void install_routes();

    Session& session_;
    ServeOptions opts_;
    std::unique_ptr<httplib::Server> http_;
    std::thread loop_thread_;
    std::thread http_thread_;
    std::atomic<bool> stop_{false};
    std::atomic<bool> loop_done_{false};
    int port_ = 0;

    mutable std::mutex mu_;
    struct Snapshot {
        int round = 0;
        bool finished = false;
        std::string stop_reason;
        json marginals;
        json metrics;
        json history;
    } snap_;
};

}  // namespace cape
