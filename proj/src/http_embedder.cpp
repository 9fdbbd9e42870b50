#include <httplib.h>

#include <nlohmann/json.hpp>

#include "http_util.hpp"
#include "propwatch/embeddings.hpp"
#include "propwatch/error.hpp"

namespace propwatch {

namespace detail {

UrlParts split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) fail(ErrorKind::usage, "URL lacks a scheme: " + url);
    auto slash = url.find('/', scheme + 3);
    UrlParts p;
    p.origin = url.substr(0, slash);
    if (slash != std::string::npos) p.prefix = url.substr(slash);
    while (!p.prefix.empty() && p.prefix.back() == '/') p.prefix.pop_back();
    return p;
}

}  // namespace detail

struct HttpEmbedder::Impl {
    httplib::Client client;
    std::string path;
    Impl(const detail::UrlParts& u) : client(u.origin), path(u.prefix + "/embed") {}
};

HttpEmbedder::HttpEmbedder(std::string base_url, std::size_t expected_dim, int timeout_seconds)
    : base_url_(std::move(base_url)), dim_(expected_dim) {
    impl_ = std::make_unique<Impl>(detail::split_url(base_url_));
    impl_->client.set_connection_timeout(timeout_seconds, 0);
    impl_->client.set_read_timeout(timeout_seconds, 0);
}

HttpEmbedder::~HttpEmbedder() = default;

std::vector<Vector> HttpEmbedder::embed(const std::vector<std::string>& texts) {
    nlohmann::json body = {{"texts", texts}};
    auto res = impl_->client.Post(impl_->path, body.dump(), "application/json");
    if (!res) fail(ErrorKind::io, "embed endpoint unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) fail(ErrorKind::io, "embed endpoint returned HTTP " + std::to_string(res->status));
    std::vector<Vector> out;
    try {
        auto j = nlohmann::json::parse(res->body);
        auto d = j.at("dim").get<std::size_t>();
        if (dim_ == 0) dim_ = d;
        if (d != dim_)
            fail(ErrorKind::format, "embed endpoint dim " + std::to_string(d) + " != expected " + std::to_string(dim_));
        out = j.at("vectors").get<std::vector<Vector>>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::parse, std::string("bad embed response: ") + e.what());
    }
    if (out.size() != texts.size()) fail(ErrorKind::format, "embed endpoint returned a wrong number of vectors");
    for (const auto& v : out)
        if (v.size() != dim_) fail(ErrorKind::format, "embed endpoint returned a vector of the wrong length");
    return out;
}

}  // namespace propwatch
