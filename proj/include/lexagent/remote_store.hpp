#pragma once

#include <chrono>
#include <string>

#include "lexagent/vector_store.hpp"

namespace httplib {
class Server;
}

namespace lexagent {

/// VectorStore client for the HTTP wire contract:
///   PUT  /collections/{name}          {"profile", "dimension"}
///   GET  /collections/{name}          -> {"profile", "dimension", "size"} | 404
///   POST /collections/{name}/upsert   {"entries": [{"id", "vector", "payload"}]}
///   POST /collections/{name}/query    {"vector", "profile", "top_k", "filter"} -> {"results": [{"id","vector","payload","score"}]}
///   POST /collections/{name}/scan     {"filter"} -> {"results": [{"id","vector","payload"}]}
/// Errors come back as {"error": code, "message": text} with a 4xx/5xx status.
class RemoteVectorStore : public VectorStore {
public:
    explicit RemoteVectorStore(std::string base_url, std::chrono::seconds timeout = std::chrono::seconds(30));

    void ensure_collection(const std::string& name, EmbeddingProfile profile, std::size_t dimension) override;
    std::optional<CollectionInfo> info(const std::string& name) override;
    void upsert(const std::string& name, const std::vector<VectorEntry>& entries) override;
    std::vector<ScoredEntry> query(const std::string& name, const Embedding& query, std::size_t top_k,
                                   const PayloadFilter& filter = {}) override;
    std::vector<VectorEntry> scan(const std::string& name, const PayloadFilter& filter = {}) override;

private:
    std::string base_url_;
    std::chrono::seconds timeout_;
};

/// Serves `store` over the same contract on `server`.
void mount_vector_store_routes(httplib::Server& server, VectorStore& store);

}  // namespace lexagent
