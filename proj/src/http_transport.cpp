// SPDX-License-Identifier: Apache-2.0
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "modgate/gateway.hpp"

namespace modgate::gateway {

namespace {

class HttplibTransport final : public Transport {
public:
    HttplibTransport(EndpointConfig cfg, std::string api_key) : cfg_(std::move(cfg)), api_key_(std::move(api_key)) {}

    HttpResponse post_json(const std::string &path, const std::string &body) override {
        auto cli = client();
        return convert(cli.Post(path, body, "application/json"));
    }

    HttpResponse get(const std::string &path) override {
        auto cli = client();
        return convert(cli.Get(path));
    }

    HttpResponse upload_file(const std::string &path, const std::string &purpose, const std::string &filename,
                             const std::string &bytes) override {
        auto cli = client();
        httplib::MultipartFormDataItems items = {
            {"purpose", purpose, "", ""},
            {"file", bytes, filename, "application/jsonl"},
        };
        return convert(cli.Post(path, items));
    }

private:
    // One client per request: httplib::Client is not safe for concurrent use.
    httplib::Client client() const {
        httplib::Client cli(cfg_.base_url);
        const auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
        const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(cfg_.timeout - secs);
        cli.set_connection_timeout(secs.count(), usecs.count());
        cli.set_read_timeout(secs.count(), usecs.count());
        cli.set_write_timeout(secs.count(), usecs.count());
        cli.set_bearer_token_auth(api_key_);
        return cli;
    }

    static HttpResponse convert(const httplib::Result &res) {
        HttpResponse out;
        if (!res) {
            out.error = httplib::to_string(res.error());
            return out;
        }
        out.status = res->status;
        out.body = res->body;
        return out;
    }

    EndpointConfig cfg_;
    std::string api_key_;
};

}  // namespace

std::unique_ptr<Transport> make_http_transport(const EndpointConfig &cfg, const std::string &api_key) {
    return std::make_unique<HttplibTransport>(cfg, api_key);
}

}  // namespace modgate::gateway
