// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "modgate/http_api.hpp"

#include <limits>
#include <regex>

#include <fmt/format.h>

#include "modgate/error.hpp"
#include "modgate/io.hpp"

namespace modgate::service {

int http_status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::UnknownFlag:
        case ErrorCode::NotFound: return 404;
        case ErrorCode::AlreadyResolved: return 409;
        case ErrorCode::Unauthorized: return 401;
        case ErrorCode::ModelUnavailable:
        case ErrorCode::ProviderUnavailable: return 503;
        case ErrorCode::UnreadableSource:
        case ErrorCode::CorruptLog: return 500;
        default: return 400;
    }
}

namespace {

ApiResponse error_response(ErrorCode code, const std::string &message) {
    return {http_status_for(code), {{"code", to_string(code)}, {"message", message}}};
}

nlohmann::json parse_json_body(const std::string &body) {
    auto j = nlohmann::json::parse(body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::BadRequest, "request body must be a JSON object");
    return j;
}

std::size_t query_size(const std::map<std::string, std::string> &q, const std::string &key, std::size_t fallback) {
    const auto it = q.find(key);
    if (it == q.end() || it->second.empty()) return fallback;
    try {
        std::size_t pos = 0;
        const auto v = std::stoull(it->second, &pos);
        if (pos != it->second.size() || v == 0) throw std::invalid_argument("bad");
        return static_cast<std::size_t>(v);
    } catch (const std::exception &) {
        throw Error(ErrorCode::BadRequest, fmt::format("query parameter '{}' must be a positive integer", key));
    }
}

nlohmann::json score_json(const ScoreOutcome &o) {
    nlohmann::json j{{"verdict", o.flagged ? "flag" : "pass"}};
    j["flag"] = o.flag ? nlohmann::json(*o.flag) : nlohmann::json(nullptr);
    if (o.prediction) {
        j["prediction"] = {{"label", o.prediction->label}, {"provider", o.prediction->provider}};
        j["prediction"]["scores"] = o.prediction->scores ? nlohmann::json(*o.prediction->scores) : nlohmann::json(nullptr);
    } else {
        j["prediction"] = nullptr;
    }
    return j;
}

}  // namespace

Api::Api(ModerationService &service, ApiConfig config) : service_(service), config_(std::move(config)) {}

ApiResponse Api::handle(const ApiRequest &req) {
    if (config_.bearer_token && req.authorization != "Bearer " + *config_.bearer_token) {
        return error_response(ErrorCode::Unauthorized, "missing or invalid bearer token");
    }
    try {
        return route(req);
    } catch (const Error &e) {
        return error_response(e.code(), e.what());
    } catch (const nlohmann::json::exception &e) {
        return error_response(ErrorCode::BadRequest, e.what());
    }
}

ApiResponse Api::serve_file(const std::optional<std::filesystem::path> &path, std::string_view what) const {
    if (!path || !std::filesystem::exists(*path)) {
        return error_response(ErrorCode::NotFound, fmt::format("no {} available", what));
    }
    auto j = nlohmann::json::parse(read_file(*path), nullptr, false);
    if (j.is_discarded()) return error_response(ErrorCode::InvalidValue, fmt::format("{} file is not JSON", what));
    return {200, std::move(j)};
}

ApiResponse Api::route(const ApiRequest &req) {
    static const std::regex verdict_path(R"(^/v1/flags/([^/]+)/verdict$)");
    std::smatch m;

    if (req.method == "POST" && req.path == "/v1/score") {
        const auto body = parse_json_body(req.body);
        const auto &msg_json = body.contains("message") ? body.at("message") : body;
        Message msg;
        try {
            msg = msg_json.get<Message>();
        } catch (const nlohmann::json::exception &e) {
            throw Error(ErrorCode::BadRequest, fmt::format("invalid message: {}", e.what()));
        }
        return {200, score_json(service_.score_message(msg))};
    }
    if (req.method == "GET" && req.path == "/v1/flags") {
        std::optional<FlagStatus> status;
        if (const auto it = req.query.find("status"); it != req.query.end() && !it->second.empty()) {
            try {
                status = parse_flag_status(it->second);
            } catch (const Error &) {
                throw Error(ErrorCode::BadRequest, fmt::format("unknown status filter '{}'", it->second));
            }
        }
        const auto page = service_.list_flags(status, query_size(req.query, "page", 1),
                                              query_size(req.query, "page_size", 50));
        return {200, {{"items", page.items}, {"page", page.page}, {"page_size", page.page_size}, {"total", page.total}}};
    }
    if (req.method == "POST" && std::regex_match(req.path, m, verdict_path)) {
        const auto body = parse_json_body(req.body);
        const auto label = body.value("label", std::string{});
        const auto moderator = body.value("moderator_id", std::string{});
        return {200, nlohmann::json(service_.resolve_flag(m[1].str(), label, moderator))};
    }
    if (req.method == "GET" && req.path == "/v1/stats/personas") return serve_file(config_.persona_stats, "persona stats");
    if (req.method == "GET" && req.path == "/v1/reports/eval") return serve_file(config_.eval_report, "eval report");
    if (req.method == "GET" && req.path == "/v1/stats/gate") {
        const auto c = service_.counters();
        return {200,
                {{"scored", c.scored},
                 {"passed", c.passed},
                 {"flagged", c.flagged},
                 {"fail_closed", c.fail_closed},
                 {"retraining_examples", service_.retraining_log().size()},
                 {"tau", service_.policy().tau}}};
    }
    if (req.method == "POST" && req.path == "/v1/corpus/export") {
        const auto body = req.body.empty() ? nlohmann::json::object() : parse_json_body(req.body);
        TimestampMs since = std::numeric_limits<TimestampMs>::min();
        if (body.contains("since") && !body.at("since").is_null()) {
            const auto &s = body.at("since");
            if (s.is_number_integer()) {
                since = s.get<TimestampMs>();
            } else if (s.is_string()) {
                const auto ts = parse_iso8601(s.get<std::string>());
                if (!ts) throw Error(ErrorCode::BadRequest, "since must be an ISO-8601 instant");
                since = *ts;
            } else {
                throw Error(ErrorCode::BadRequest, "since must be an ISO-8601 instant or epoch milliseconds");
            }
        }
        const auto corpus = service_.export_retraining_corpus(since);
        return {200, {{"corpus", corpus.bytes}, {"count", corpus.count}}};
    }
    return error_response(ErrorCode::NotFound, fmt::format("no route for {} {}", req.method, req.path));
}

// ---------------------------------------------------------------------------

struct HttpServer::Impl {
    Api &api;
    httplib::Server server;
    std::thread thread;

    explicit Impl(Api &a) : api(a) {
        const auto handler = [this](const httplib::Request &hreq, httplib::Response &hres) {
            ApiRequest req;
            req.method = hreq.method;
            req.path = hreq.path;
            for (const auto &[k, v] : hreq.params) req.query[k] = v;
            req.body = hreq.body;
            req.authorization = hreq.get_header_value("Authorization");
            const auto resp = api.handle(req);
            hres.status = resp.status;
            hres.set_content(resp.body.dump(-1, ' ', false, nlohmann::json::error_handler_t::replace),
                             "application/json");
        };
        server.Get(".*", handler);
        server.Post(".*", handler);
    }
};

HttpServer::HttpServer(Api &api) : impl_(std::make_unique<Impl>(api)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string &host, int port) {
    int bound = port;
    if (port == 0) {
        bound = impl_->server.bind_to_any_port(host);
    } else if (!impl_->server.bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error(ErrorCode::UnreadableSource, fmt::format("cannot bind {}:{}", host, port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HttpServer::listen_blocking(const std::string &host, int port) {
    if (!impl_->server.listen(host, port)) {
        throw Error(ErrorCode::UnreadableSource, fmt::format("cannot listen on {}:{}", host, port));
    }
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

}  // namespace modgate::service
