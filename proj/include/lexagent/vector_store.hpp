#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/chunking.hpp"
#include "lexagent/domain.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"

namespace lexagent {

inline constexpr const char* kChunkCollection = "chunks";
inline constexpr const char* kTitleCollection = "titles";

struct VectorEntry {
    std::string id;
    std::vector<double> vector;
    nlohmann::json payload;
};

struct ScoredEntry {
    VectorEntry entry;
    double score = 0.0;
};

struct CollectionInfo {
    EmbeddingProfile profile = EmbeddingProfile::kChunk;
    std::size_t dimension = 0;
    std::size_t size = 0;
};

/// Entries whose payload[key] is the string value, for every pair.
using PayloadFilter = std::map<std::string, std::string>;

class VectorStore {
public:
    virtual ~VectorStore() = default;

    /// Creates the collection or checks that an existing one has the same
    /// profile (kProfileMismatch) and dimension (kDimensionMismatch).
    virtual void ensure_collection(const std::string& name, EmbeddingProfile profile, std::size_t dimension) = 0;
    virtual std::optional<CollectionInfo> info(const std::string& name) = 0;

    /// Insert or replace by id.
    virtual void upsert(const std::string& name, const std::vector<VectorEntry>& entries) = 0;

    /// At most top_k entries by descending cosine similarity, ties by id.
    virtual std::vector<ScoredEntry> query(const std::string& name, const Embedding& query, std::size_t top_k,
                                           const PayloadFilter& filter = {}) = 0;

    /// Every matching entry, in id order.
    virtual std::vector<VectorEntry> scan(const std::string& name, const PayloadFilter& filter = {}) = 0;
};

/// In-process reference backend: flat arrays, linear scan. With a directory
/// it loads on construction and persists on flush():
///   manifest.json          {"collections": {name: {profile, dimension, count}}}
///   <name>.vec             "LXV1" then length-prefixed records
///                          [u32 len][u32 id_len][id][u32 dim][f64 x dim][u32 payload_len][payload JSON]
/// All integers and doubles little-endian.
class FlatVectorStore : public VectorStore {
public:
    FlatVectorStore() = default;
    explicit FlatVectorStore(std::filesystem::path dir);

    void ensure_collection(const std::string& name, EmbeddingProfile profile, std::size_t dimension) override;
    std::optional<CollectionInfo> info(const std::string& name) override;
    void upsert(const std::string& name, const std::vector<VectorEntry>& entries) override;
    std::vector<ScoredEntry> query(const std::string& name, const Embedding& query, std::size_t top_k,
                                   const PayloadFilter& filter = {}) override;
    std::vector<VectorEntry> scan(const std::string& name, const PayloadFilter& filter = {}) override;

    /// Writes all collections to the directory given at construction.
    void flush();

private:
    struct Collection {
        EmbeddingProfile profile = EmbeddingProfile::kChunk;
        std::size_t dimension = 0;
        std::vector<VectorEntry> entries;
        std::unordered_map<std::string, std::size_t> by_id;
        mutable std::shared_mutex lease;
    };

    Collection& collection(const std::string& name);
    void load();

    std::optional<std::filesystem::path> dir_;
    std::mutex collections_mu_;
    std::map<std::string, std::unique_ptr<Collection>> collections_;
};

bool payload_matches(const nlohmann::json& payload, const PayloadFilter& filter);

/// dot(a,b) / (|a||b|). Throws kProfileMismatch, kDimensionMismatch, kZeroVector.
double cosine_similarity(const Embedding& a, const Embedding& b);
double cosine_similarity(std::span<const double> a, std::span<const double> b);

/// One embedding per text, in order; every vector must have the provider's
/// declared dimension (kDimensionMismatch otherwise).
std::vector<Embedding> embed_batch(const std::vector<std::string>& texts, EmbeddingProvider& provider,
                                   EmbeddingProfile profile);

/// Embeds (where missing) and upserts the chunks with payload
/// {case_id, chunk_id, page, source_url, text}, then upserts the title
/// embedding keyed by case_id. Returns the number of chunks written.
std::size_t index_case(const CaseRecord& c, std::vector<DocumentChunk> chunks, VectorStore& store,
                       EmbeddingProvider& embed);

struct RankedChunk {
    DocumentChunk chunk;
    double score = 0.0;
};

/// All chunks of one case ordered by chunk_id.
std::vector<DocumentChunk> load_case_chunks(VectorStore& store, const std::string& case_id);

/// At most top_k chunks of `case_id`, by descending cosine similarity to the
/// question; ties by ascending page, then chunk_id.
std::vector<RankedChunk> query_chunks(VectorStore& store, const Embedding& question, const std::string& case_id,
                                      std::size_t top_k);

/// Same ranking over an already loaded chunk set.
std::vector<RankedChunk> rank_chunks(const std::vector<DocumentChunk>& chunks, const Embedding& question,
                                     std::size_t top_k);

/// Case title embeddings used by database search. Reads the title
/// collection when present and embeds any title it lacks.
class TitleIndex {
public:
    TitleIndex() = default;
    static TitleIndex build(const CaseStore& cases, EmbeddingProvider& embed, VectorStore* store = nullptr);

    const Embedding* find(const std::string& case_id) const;
    void put(const std::string& case_id, Embedding e) { by_case_[case_id] = std::move(e); }
    std::size_t size() const { return by_case_.size(); }

private:
    std::unordered_map<std::string, Embedding> by_case_;
};

}  // namespace lexagent
