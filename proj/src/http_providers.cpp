#include "lexagent/http_providers.hpp"

#include <cstdlib>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::optional<std::string> env(const char* name) {
    const char* v = std::getenv(name);
    if (!v || !*v) return std::nullopt;
    return std::string(v);
}

std::optional<ProviderEndpoint> endpoint_from_env(const char* url_var, const char* key_var) {
    auto url = env(url_var);
    if (!url) return std::nullopt;
    return ProviderEndpoint{*url, env(key_var).value_or("")};
}

struct Target {
    std::string origin;  // scheme://host[:port]
    std::string path;    // without trailing slash
};

Target split_url(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::kConfig, "not an absolute URL: " + url);
    auto path_start = url.find('/', scheme + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto path = url.substr(path_start);
    while (!path.empty() && path.back() == '/') path.pop_back();
    return {url.substr(0, path_start), path};
}

std::unique_ptr<httplib::Client> client_for(const std::string& origin, std::chrono::seconds timeout) {
    auto client = std::make_unique<httplib::Client>(origin);
    client->set_connection_timeout(timeout);
    client->set_read_timeout(timeout);
    client->set_write_timeout(timeout);
    client->set_follow_location(true);
    return client;
}

/// POSTs JSON and maps transport failures: timeouts and 5xx/429 are
/// retryable, other 4xx are rejections.
nlohmann::json post_json(const ProviderEndpoint& ep, const std::string& path, const nlohmann::json& body,
                         const httplib::Headers& headers, std::chrono::seconds timeout, const RetryPolicy& retry) {
    auto target = split_url(ep.url);
    return with_retry(
        [&]() -> nlohmann::json {
            auto client = client_for(target.origin, timeout);
            auto res = client->Post(target.path + path, headers, body.dump(), "application/json");
            if (!res) {
                auto err = res.error();
                auto code = err == httplib::Error::Read || err == httplib::Error::Write ||
                                    err == httplib::Error::ConnectionTimeout
                                ? ErrorCode::kProviderTimeout
                                : ErrorCode::kProviderUnavailable;
                throw Error(code, target.origin + ": " + httplib::to_string(err));
            }
            if (res->status >= 500 || res->status == 429) {
                throw Error(ErrorCode::kProviderUnavailable, target.origin + " HTTP " + std::to_string(res->status));
            }
            if (res->status >= 400) {
                throw Error(ErrorCode::kProviderRejected, target.origin + " HTTP " + std::to_string(res->status));
            }
            auto parsed = nlohmann::json::parse(res->body, nullptr, false);
            if (parsed.is_discarded()) throw Error(ErrorCode::kProviderUnavailable, "invalid JSON from " + target.origin);
            return parsed;
        },
        retry);
}

httplib::Headers bearer(const ProviderEndpoint& ep) {
    if (ep.key.empty()) return {};
    return {{"Authorization", "Bearer " + ep.key}};
}

class HttpChatProvider : public ChatProvider {
public:
    HttpChatProvider(ProviderEndpoint ep, const ProviderConfig& cfg) : ep_(std::move(ep)), cfg_(cfg) {}

    std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params) override {
        nlohmann::json body{{"model", cfg_.chat_model}, {"messages", nlohmann::json::array()}};
        for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
        if (params.temperature) body["temperature"] = *params.temperature;
        if (params.max_tokens) body["max_tokens"] = *params.max_tokens;
        auto j = post_json(ep_, "/chat/completions", body, bearer(ep_), cfg_.timeout, cfg_.retry);
        std::string text;
        try {
            text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::kProviderUnavailable, "chat response without content");
        }
        if (trim(text).empty()) throw Error(ErrorCode::kProviderUnavailable, "empty chat completion");
        return text;
    }

private:
    ProviderEndpoint ep_;
    ProviderConfig cfg_;
};

class HttpEmbeddingProvider : public EmbeddingProvider {
public:
    HttpEmbeddingProvider(ProviderEndpoint ep, const ProviderConfig& cfg) : ep_(std::move(ep)), cfg_(cfg) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, EmbeddingProfile profile) override {
        if (texts.empty()) return {};
        const auto& model = profile == EmbeddingProfile::kChunk ? cfg_.chunk_embed_model : cfg_.title_embed_model;
        nlohmann::json body{{"model", model}, {"input", texts}};
        auto j = post_json(ep_, "/embeddings", body, bearer(ep_), cfg_.timeout, cfg_.retry);
        std::vector<std::vector<double>> out(texts.size());
        for (const auto& item : j.at("data")) {
            auto index = item.value("index", std::size_t{0});
            if (index >= out.size()) throw Error(ErrorCode::kProviderUnavailable, "embedding index out of range");
            out[index] = item.at("embedding").get<std::vector<double>>();
        }
        return out;
    }

    std::size_t dimension(EmbeddingProfile profile) const override {
        return profile == EmbeddingProfile::kChunk ? cfg_.chunk_dimension : cfg_.title_dimension;
    }

private:
    ProviderEndpoint ep_;
    ProviderConfig cfg_;
};

class HttpWebSearchProvider : public WebSearchProvider {
public:
    HttpWebSearchProvider(ProviderEndpoint ep, const ProviderConfig& cfg) : ep_(std::move(ep)), cfg_(cfg) {}

    std::vector<WebResult> search(std::string_view query, const std::optional<std::string>& site_filter) override {
        std::string q(query);
        if (site_filter) q += " site:" + *site_filter;
        httplib::Headers headers;
        if (!ep_.key.empty()) headers.emplace("X-API-KEY", ep_.key);
        auto j = post_json(ep_, "/search", {{"q", q}, {"num", 10}}, headers, cfg_.timeout, cfg_.retry);
        std::vector<WebResult> out;
        if (!j.contains("organic")) return out;
        for (const auto& r : j.at("organic")) {
            out.push_back({r.value("title", std::string{}), r.value("link", std::string{}),
                           r.value("snippet", std::string{})});
        }
        return out;
    }

private:
    ProviderEndpoint ep_;
    ProviderConfig cfg_;
};

class HttpResearchProvider : public DeepResearchProvider {
public:
    HttpResearchProvider(ProviderEndpoint ep, const ProviderConfig& cfg) : ep_(std::move(ep)), cfg_(cfg) {}

    ResearchResult research(std::string_view question,
                            const std::optional<std::vector<std::string>>& allowed_domains) override {
        nlohmann::json body{{"model", cfg_.research_model},
                            {"messages", {{{"role", "user"}, {"content", std::string(question)}}}}};
        if (allowed_domains) body["search_domain_filter"] = *allowed_domains;
        auto j = post_json(ep_, "/chat/completions", body, bearer(ep_), cfg_.timeout, cfg_.retry);
        ResearchResult out;
        try {
            out.answer_text = j.at("choices").at(0).at("message").at("content").get<std::string>();
        } catch (const nlohmann::json::exception&) {
            throw Error(ErrorCode::kProviderUnavailable, "research response without content");
        }
        if (j.contains("citations")) {
            for (const auto& c : j.at("citations")) {
                if (c.is_string()) out.source_urls.push_back(c.get<std::string>());
            }
        } else if (j.contains("search_results")) {
            for (const auto& r : j.at("search_results")) out.source_urls.push_back(r.value("url", std::string{}));
        }
        auto parsed = extract_json_object(out.answer_text);
        const char* key = parsed && parsed->contains("candidate_cases") ? "candidate_cases" : "cases";
        if (parsed && parsed->contains(key) && parsed->at(key).is_array()) {
            std::vector<std::string> titles;
            for (const auto& t : parsed->at(key)) {
                if (t.is_string()) titles.push_back(t.get<std::string>());
                else if (t.is_object() && t.contains("title")) titles.push_back(t.at("title").get<std::string>());
            }
            out.candidate_cases = std::move(titles);
        }
        return out;
    }

private:
    ProviderEndpoint ep_;
    ProviderConfig cfg_;
};

template <typename T>
T require(const std::optional<T>& v, const char* what) {
    if (!v) throw Error(ErrorCode::kConfig, std::string(what) + " is not set");
    return *v;
}

}  // namespace

ProviderConfig ProviderConfig::from_env() {
    ProviderConfig c;
    c.chat = endpoint_from_env("CHAT_PROVIDER_URL", "CHAT_PROVIDER_KEY");
    c.embed = endpoint_from_env("EMBED_PROVIDER_URL", "EMBED_PROVIDER_KEY");
    c.websearch = endpoint_from_env("WEBSEARCH_PROVIDER_URL", "WEBSEARCH_PROVIDER_KEY");
    c.research = endpoint_from_env("RESEARCH_PROVIDER_URL", "RESEARCH_PROVIDER_KEY");
    auto number = [](const char* var, auto fallback) {
        auto v = env(var);
        if (!v) return fallback;
        try {
            return static_cast<decltype(fallback)>(std::stoll(*v));
        } catch (const std::exception&) {
            throw Error(ErrorCode::kConfig, std::string(var) + " is not a number");
        }
    };
    c.timeout = std::chrono::seconds(number("PROVIDER_TIMEOUT_SECS", 30LL));
    if (auto v = env("CHAT_MODEL")) c.chat_model = *v;
    if (auto v = env("RESEARCH_MODEL")) c.research_model = *v;
    if (auto v = env("EMBED_MODEL_CHUNK")) c.chunk_embed_model = *v;
    if (auto v = env("EMBED_MODEL_TITLE")) c.title_embed_model = *v;
    c.chunk_dimension = number("EMBED_DIM_CHUNK", c.chunk_dimension);
    c.title_dimension = number("EMBED_DIM_TITLE", c.title_dimension);
    return c;
}

std::unique_ptr<ChatProvider> make_chat_provider(const ProviderConfig& config) {
    return std::make_unique<HttpChatProvider>(require(config.chat, "CHAT_PROVIDER_URL"), config);
}

std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config) {
    auto ep = require(config.embed, "EMBED_PROVIDER_URL");
    if (ep.url.rfind("hash://", 0) == 0) {
        spdlog::info("using the deterministic hash embedder");
        return std::make_unique<HashEmbeddingProvider>();
    }
    return std::make_unique<HttpEmbeddingProvider>(ep, config);
}

std::unique_ptr<WebSearchProvider> make_web_search_provider(const ProviderConfig& config) {
    return std::make_unique<HttpWebSearchProvider>(require(config.websearch, "WEBSEARCH_PROVIDER_URL"), config);
}

std::unique_ptr<DeepResearchProvider> make_research_provider(const ProviderConfig& config) {
    return std::make_unique<HttpResearchProvider>(require(config.research, "RESEARCH_PROVIDER_URL"), config);
}

std::string HttpDocumentSource::fetch(const std::string& url) {
    auto scheme = url.find("://");
    if (scheme == std::string::npos) throw Error(ErrorCode::kNotFound, "not a URL: " + url);
    auto path_start = url.find('/', scheme + 3);
    auto origin = path_start == std::string::npos ? url : url.substr(0, path_start);
    auto path = path_start == std::string::npos ? std::string("/") : url.substr(path_start);
    auto client = client_for(origin, timeout_);
    auto res = client->Get(path);
    if (!res) throw Error(ErrorCode::kProviderUnavailable, url + ": " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::kNotFound, url + " HTTP " + std::to_string(res->status));
    return res->body;
}

}  // namespace lexagent
