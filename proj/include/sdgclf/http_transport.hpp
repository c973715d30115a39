#pragma once
// Live transport: OpenAI-compatible /chat/completions over cpp-httplib.

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>

#include <cstdlib>
#include <string>

#include <nlohmann/json.hpp>

#include "sdgclf/llm.hpp"

namespace sdgclf {

class HttpTransport : public Transport {
public:
    // base_url like "https://api.openai.com/v1" or "http://127.0.0.1:8080/v1".
    explicit HttpTransport(const ProviderConfig& config) {
        const std::string& url = config.base_url;
        const auto scheme_end = url.find("://");
        require(scheme_end != std::string::npos, ErrorKind::Config, "base_url needs a scheme: " + url);
        const auto path_start = url.find('/', scheme_end + 3);
        origin_ = path_start == std::string::npos ? url : url.substr(0, path_start);
        prefix_ = path_start == std::string::npos ? "" : url.substr(path_start);
        while (!prefix_.empty() && prefix_.back() == '/') prefix_.pop_back();
        if (!config.api_key_env.empty())
            if (const char* key = std::getenv(config.api_key_env.c_str())) api_key_ = key;
    }

    std::string complete(const std::string& prompt, const ProviderConfig& config) override {
        httplib::Client client(origin_);
        client.set_connection_timeout(config.timeout_seconds, 0);
        client.set_read_timeout(config.timeout_seconds, 0);
        httplib::Headers headers;
        if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);
        nlohmann::json body{{"model", config.model.empty() ? config.provider_id : config.model},
                            {"messages", {{{"role", "user"}, {"content", prompt}}}},
                            {"temperature", config.temperature},
                            {"top_p", config.top_p}};
        auto res = client.Post(prefix_ + "/chat/completions", headers, body.dump(), "application/json");
        if (!res) throw TransportError("transport error: " + httplib::to_string(res.error()), true);
        if (res->status == 429 || res->status >= 500)
            throw TransportError("HTTP " + std::to_string(res->status), true);
        if (res->status != 200) throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body, false);
        try {
            auto j = nlohmann::json::parse(res->body);
            return j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed completion body: ") + e.what(), false);
        }
    }

private:
    std::string origin_;
    std::string prefix_;
    std::string api_key_;
};

} // namespace sdgclf
