#pragma once

#include "sgl/llm.hpp"

#include <httplib.h>

#include <memory>
#include <string>

namespace sgl {

struct ParsedUrl {
    std::string origin;
    std::string path;
};

/// Splits "scheme://host[:port]/path" into origin and path.
inline ParsedUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos)
        throw Error(ErrorCode::InvalidArgument, "endpoint URL lacks a scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos)
        return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

/// Blocking HTTPS/HTTP transport on cpp-httplib.
class HttplibTransport final : public HttpTransport {
public:
    HttpResponse post(const HttpRequest& request) override {
        const auto url = split_url(request.url);
        httplib::Client cli(url.origin);
        const auto secs = static_cast<time_t>(request.timeout_s);
        const auto usecs = static_cast<time_t>((request.timeout_s - static_cast<double>(secs)) * 1e6);
        cli.set_connection_timeout(secs, usecs);
        cli.set_read_timeout(secs, usecs);
        cli.set_write_timeout(secs, usecs);
        httplib::Headers headers;
        std::string content_type = "application/json";
        for (const auto& [k, v] : request.headers) {
            if (k == "Content-Type")
                content_type = v;
            else
                headers.emplace(k, v);
        }
        auto res = cli.Post(url.path, headers, request.body, content_type);
        if (!res) {
            const auto err = res.error();
            const bool timed_out = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read;
            throw Error(timed_out ? ErrorCode::Timeout : ErrorCode::Backend,
                        "HTTP request to " + url.origin + " failed: " + httplib::to_string(err));
        }
        return {res->status, res->body};
    }
};

inline std::shared_ptr<ChatBackend> make_backend(const BackendConfig& config) {
    return make_backend(config, std::make_shared<HttplibTransport>());
}

} // namespace sgl
