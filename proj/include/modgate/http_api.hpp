// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <thread>

#include <json.hpp>

#include "modgate/service.hpp"

namespace modgate::service {

struct ApiRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
    std::string authorization;  // raw Authorization header
};

struct ApiResponse {
    int status = 200;
    nlohmann::json body;
};

struct ApiConfig {
    /// When set, every request needs `Authorization: Bearer <token>`.
    std::optional<std::string> bearer_token;
    /// Served verbatim by GET /v1/stats/personas and GET /v1/reports/eval.
    std::optional<std::filesystem::path> persona_stats;
    std::optional<std::filesystem::path> eval_report;
};

/// Transport-independent request router for the moderation API. Errors
/// come back as `{code, message}` with a matching HTTP status.
class Api {
public:
    Api(ModerationService &service, ApiConfig config);

    ApiResponse handle(const ApiRequest &req);

private:
    ApiResponse route(const ApiRequest &req);
    ApiResponse serve_file(const std::optional<std::filesystem::path> &path, std::string_view what) const;

    ModerationService &service_;
    ApiConfig config_;
};

int http_status_for(ErrorCode code);

/// Binds an Api to a cpp-httplib server running on a background thread.
class HttpServer {
public:
    explicit HttpServer(Api &api);
    ~HttpServer();
    HttpServer(const HttpServer &) = delete;
    HttpServer &operator=(const HttpServer &) = delete;

    /// Port 0 picks a free port. Returns the bound port.
    int start(const std::string &host, int port);
    /// Blocks in the calling thread until stop() is called.
    void listen_blocking(const std::string &host, int port);
    void stop();

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

}  // namespace modgate::service
