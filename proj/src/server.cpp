#include "cape/server.hpp"

#include <spdlog/spdlog.h>

#include "httplib.h"

#include "cape/errors.hpp"

namespace cape {

namespace {

void send_json(httplib::Response& res, const json& body, int status = 200) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message) {
    send_json(res, json{{"error", message}}, status);
}

json matrix_json(const Square<double>& m) {
    json rows = json::array();
    for (std::size_t i = 0; i < m.d(); ++i) {
        json row = json::array();
        for (std::size_t j = 0; j < m.d(); ++j) row.push_back(i == j ? json(nullptr) : json(m(i, j)));
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace

void parse_bind(const std::string& bind, ServeOptions& opts) {
    if (bind.empty()) return;
    const auto colon = bind.rfind(':');
    if (colon == std::string::npos) {
        opts.host = bind;
        return;
    }
    if (colon > 0) opts.host = bind.substr(0, colon);
    try {
        std::size_t used = 0;
        const int port = std::stoi(bind.substr(colon + 1), &used);
        if (used != bind.size() - colon - 1 || port < 0 || port > 65535) throw std::invalid_argument("port");
        opts.port = port;
    } catch (const std::exception&) {
        throw ConfigError("bad bind address '" + bind + "'");
    }
}

SessionServer::SessionServer(Session& session, ServeOptions opts)
    : session_(session), opts_(std::move(opts)), http_(std::make_unique<httplib::Server>()) {
    refresh_snapshot();
    install_routes();
}

SessionServer::~SessionServer() { stop(); }

int SessionServer::start() {
    port_ = opts_.port == 0 ? http_->bind_to_any_port(opts_.host) : (http_->bind_to_port(opts_.host, opts_.port) ? opts_.port : -1);
    if (port_ < 0) throw std::runtime_error("cannot bind " + opts_.host + ":" + std::to_string(opts_.port));
    http_thread_ = std::thread([this] { http_->listen_after_bind(); });
    http_->wait_until_ready();
    loop_thread_ = std::thread([this] { loop(); });
    spdlog::info("serving on http://{}:{}", opts_.host, port_);
    return port_;
}

void SessionServer::stop() {
    if (stop_.exchange(true)) return;
    if (auto ch = session_.human_channel()) ch->cancel();
    if (loop_thread_.joinable()) loop_thread_.join();
    http_->stop();
    if (http_thread_.joinable()) http_thread_.join();
    try {
        session_.write_checkpoint();
    } catch (const std::exception& ex) {
        spdlog::error("checkpoint on shutdown failed: {}", ex.what());
    }
}

void SessionServer::loop() {
    try {
        while (!stop_.load()) {
            const auto st = session_.run_round();
            if (st == Session::Status::completed) refresh_snapshot();
            if (st == Session::Status::finished || st == Session::Status::exhausted) {
                session_.finalize();
                refresh_snapshot();
                break;
            }
        }
    } catch (const std::exception& ex) {
        spdlog::error("session loop stopped: {}", ex.what());
    }
    loop_done_ = true;
}

void SessionServer::refresh_snapshot() {
    Snapshot s;
    s.round = session_.round();
    s.finished = session_.finished();
    s.stop_reason = session_.stop_reason();
    s.marginals = matrix_json(edge_marginals(session_.particles()));
    json series = json::array();
    for (const auto& r : session_.results()) {
        json m = metrics_to_json(r.metrics);
        m["round"] = r.round;
        series.push_back(std::move(m));
    }
    s.metrics = json{{"names", metric_names()}, {"initial", metrics_to_json(session_.initial_metrics())}, {"series", series}};
    json hist = json::array();
    for (const auto& r : session_.history().records()) hist.push_back(record_to_json(r));
    s.history = std::move(hist);
    std::lock_guard lock(mu_);
    snap_ = std::move(s);
}

json SessionServer::session_view() const {
    const auto& cfg = session_.config();
    std::lock_guard lock(mu_);
    return json{{"round", snap_.round},
                {"rounds", cfg.rounds},
                {"policy", to_string(cfg.policy)},
                {"d", session_.names().size()},
                {"names", session_.names()},
                {"oracle", cfg.oracle.kind},
                {"finished", snap_.finished},
                {"stop_reason", snap_.stop_reason}};
}

json SessionServer::query_view() const {
    const auto& names = session_.names();
    json out{{"pending", false}, {"names", names}};
    {
        std::lock_guard lock(mu_);
        out["round"] = snap_.round;
        out["finished"] = snap_.finished;
    }
    const auto ch = session_.human_channel();
    if (!ch) return out;
    const auto q = ch->pending();
    if (!q) return out;
    out["pending"] = true;
    out["query_round"] = q->round;
    out["pair"] = json::array({q->pair.i, q->pair.j});
    out["pair_names"] = json::array({names.at(q->pair.i), names.at(q->pair.j)});
    out["predictive"] = json::array({q->predictive.p[0], q->predictive.p[1], q->predictive.p[2]});
    out["eig"] = q->eig ? json(*q->eig) : json(nullptr);
    return out;
}

json SessionServer::marginals_view() const {
    std::lock_guard lock(mu_);
    return json{{"round", snap_.round}, {"names", session_.names()}, {"marginals", snap_.marginals}};
}

json SessionServer::metrics_view() const {
    std::lock_guard lock(mu_);
    return snap_.metrics;
}

json SessionServer::history_view() const {
    std::lock_guard lock(mu_);
    return json{{"round", snap_.round}, {"history", snap_.history}};
}

void SessionServer::install_routes() {
    auto& svr = *http_;
    svr.Get("/api/session", [this](const httplib::Request&, httplib::Response& res) { send_json(res, session_view()); });
    svr.Get("/api/query", [this](const httplib::Request&, httplib::Response& res) { send_json(res, query_view()); });
    svr.Get("/api/marginals", [this](const httplib::Request&, httplib::Response& res) { send_json(res, marginals_view()); });
    svr.Get("/api/metrics", [this](const httplib::Request&, httplib::Response& res) { send_json(res, metrics_view()); });
    svr.Get("/api/history", [this](const httplib::Request&, httplib::Response& res) { send_json(res, history_view()); });

    svr.Post("/api/answer", [this](const httplib::Request& req, httplib::Response& res) {
        std::size_t i = 0, j = 0;
        int label = -1;
        try {
            const json body = json::parse(req.body);
            const auto& pair = body.at("pair");
            if (!pair.is_array() || pair.size() != 2) throw std::invalid_argument("pair must be [i, j]");
            i = pair.at(0).get<std::size_t>();
            j = pair.at(1).get<std::size_t>();
            if (!body.at("label").is_number_integer()) throw std::invalid_argument("label must be an integer");
            label = body.at("label").get<int>();
        } catch (const std::exception& ex) {
            send_error(res, 400, std::string("malformed answer: ") + ex.what());
            return;
        }
        const std::size_t d = session_.names().size();
        if (i >= d || j >= d || i == j) {
            send_error(res, 400, "pair out of range");
            return;
        }
        const auto ch = session_.human_channel();
        if (!ch) {
            send_error(res, 409, "this session has no human oracle");
            return;
        }
        const auto q = ch->pending();
        using R = HumanChannel::SubmitResult;
        switch (ch->submit(i, j, label)) {
            case R::bad_label:
                send_error(res, 400, "label must be 0, 1 or 2");
                return;
            case R::no_pending:
                send_error(res, 409, "no query is pending");
                return;
            case R::wrong_pair:
                send_error(res, 409, "pair is not the pending query");
                return;
            case R::already_answered:
                send_error(res, 409, "the pending query was already answered");
                return;
            case R::accepted:
                break;
        }
        // Wait until the round is applied and the next query (if any) is up.
        const int answered_round = q ? q->round : 0;
        const auto deadline = std::chrono::steady_clock::now() + opts_.answer_wait;
        while (std::chrono::steady_clock::now() < deadline && !stop_.load() && !loop_done_.load()) {
            bool applied;
            {
                std::lock_guard lock(mu_);
                applied = snap_.round >= answered_round;
            }
            if (applied) {
                const auto next = ch->pending();
                if (next && next->round > answered_round) break;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(5));
        }
        json out;
        {
            std::lock_guard lock(mu_);
            out = json{{"accepted", true}, {"round", snap_.round}, {"finished", snap_.finished}};
        }
        send_json(res, out);
    });

    svr.set_error_handler([](const httplib::Request&, httplib::Response& res) {
        if (res.body.empty()) send_error(res, res.status, "not found");
    });
    svr.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
        std::string msg = "internal error";
        try {
            if (ep) std::rethrow_exception(ep);
        } catch (const std::exception& ex) {
            msg = ex.what();
        } catch (...) {
        }
        send_error(res, 500, msg);
    });

    if (!opts_.ui_dir.empty()) {
        if (std::filesystem::is_directory(opts_.ui_dir)) svr.set_mount_point("/", opts_.ui_dir.string());
        else spdlog::warn("UI directory {} not found; serving the API only", opts_.ui_dir.string());
    }
}

}  // namespace cape
