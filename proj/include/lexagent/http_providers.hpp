#pragma once

#include <chrono>
#include <memory>
#include <optional>
#include <string>

#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"

namespace lexagent {

struct ProviderEndpoint {
    std::string url;
    std::string key;
};

/// Backends and credentials, read from the environment:
///   CHAT_PROVIDER_URL/KEY       OpenAI-compatible chat completions
///   EMBED_PROVIDER_URL/KEY      OpenAI-compatible embeddings, or "hash://" for
///                               the offline deterministic embedder
///   WEBSEARCH_PROVIDER_URL/KEY  Serper-compatible search
///   RESEARCH_PROVIDER_URL/KEY   search-grounded chat completions
///   PROVIDER_TIMEOUT_SECS       default 30
/// Optional model overrides: CHAT_MODEL, RESEARCH_MODEL, EMBED_MODEL_CHUNK,
/// EMBED_MODEL_TITLE, EMBED_DIM_CHUNK, EMBED_DIM_TITLE.
struct ProviderConfig {
    std::optional<ProviderEndpoint> chat;
    std::optional<ProviderEndpoint> embed;
    std::optional<ProviderEndpoint> websearch;
    std::optional<ProviderEndpoint> research;
    std::chrono::seconds timeout{30};
    RetryPolicy retry;
    std::string chat_model = "gpt-4o-mini";
    std::string research_model = "sonar";
    std::string chunk_embed_model = "text-embedding-ada-002";
    std::string title_embed_model = "text-embedding-3-small";
    std::size_t chunk_dimension = 1536;
    std::size_t title_dimension = 1536;

    static ProviderConfig from_env();
};

/// Each factory throws Error{kConfig} when its endpoint is not configured.
std::unique_ptr<ChatProvider> make_chat_provider(const ProviderConfig& config);
std::unique_ptr<EmbeddingProvider> make_embedding_provider(const ProviderConfig& config);
std::unique_ptr<WebSearchProvider> make_web_search_provider(const ProviderConfig& config);
std::unique_ptr<DeepResearchProvider> make_research_provider(const ProviderConfig& config);

/// Plain HTTP(S) GET of decision documents.
class HttpDocumentSource : public DocumentSource {
public:
    explicit HttpDocumentSource(std::chrono::seconds timeout = std::chrono::seconds(30)) : timeout_(timeout) {}
    std::string fetch(const std::string& url) override;

private:
    std::chrono::seconds timeout_;
};

}  // namespace lexagent
