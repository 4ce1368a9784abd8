#include "lexagent/vector_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "lexagent/error.hpp"

namespace lexagent {

namespace {

static_assert(std::endian::native == std::endian::little, "store format assumes a little-endian host");

constexpr char kMagic[4] = {'L', 'X', 'V', '1'};

template <typename T>
void put(std::string& out, T v) {
    char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view& in) {
    if (in.size() < sizeof(T)) throw Error(ErrorCode::kStoreUnavailable, "truncated store record");
    T v;
    std::memcpy(&v, in.data(), sizeof(T));
    in.remove_prefix(sizeof(T));
    return v;
}

std::string_view take_bytes(std::string_view& in, std::size_t n) {
    if (in.size() < n) throw Error(ErrorCode::kStoreUnavailable, "truncated store record");
    auto out = in.substr(0, n);
    in.remove_prefix(n);
    return out;
}

std::string encode_entry(const VectorEntry& e) {
    std::string body;
    put<std::uint32_t>(body, static_cast<std::uint32_t>(e.id.size()));
    body += e.id;
    put<std::uint32_t>(body, static_cast<std::uint32_t>(e.vector.size()));
    for (double v : e.vector) put<double>(body, v);
    auto payload = e.payload.dump();
    put<std::uint32_t>(body, static_cast<std::uint32_t>(payload.size()));
    body += payload;
    std::string rec;
    put<std::uint32_t>(rec, static_cast<std::uint32_t>(body.size()));
    rec += body;
    return rec;
}

VectorEntry decode_entry(std::string_view body) {
    VectorEntry e;
    e.id = std::string(take_bytes(body, take<std::uint32_t>(body)));
    auto dim = take<std::uint32_t>(body);
    e.vector.reserve(dim);
    for (std::uint32_t i = 0; i < dim; ++i) e.vector.push_back(take<double>(body));
    auto payload = take_bytes(body, take<std::uint32_t>(body));
    e.payload = nlohmann::json::parse(payload, nullptr, false);
    if (e.payload.is_discarded()) throw Error(ErrorCode::kStoreUnavailable, "corrupt payload for " + e.id);
    return e;
}

bool ranks_before(const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.entry.id < b.entry.id;
}

}  // namespace

bool payload_matches(const nlohmann::json& payload, const PayloadFilter& filter) {
    for (const auto& [key, value] : filter) {
        if (!payload.is_object() || !payload.contains(key)) return false;
        const auto& v = payload.at(key);
        if (!v.is_string() || v.get<std::string>() != value) return false;
    }
    return true;
}

FlatVectorStore::FlatVectorStore(std::filesystem::path dir) : dir_(std::move(dir)) { load(); }

FlatVectorStore::Collection& FlatVectorStore::collection(const std::string& name) {
    std::lock_guard lock(collections_mu_);
    auto it = collections_.find(name);
    if (it == collections_.end()) throw Error(ErrorCode::kNotFound, "collection " + name);
    return *it->second;
}

void FlatVectorStore::ensure_collection(const std::string& name, EmbeddingProfile profile, std::size_t dimension) {
    std::lock_guard lock(collections_mu_);
    auto& slot = collections_[name];
    if (!slot) {
        slot = std::make_unique<Collection>();
        slot->profile = profile;
        slot->dimension = dimension;
        return;
    }
    if (slot->profile != profile) {
        throw Error(ErrorCode::kProfileMismatch, "collection " + name + " holds " +
                                                     std::string(to_string(slot->profile)) + " embeddings");
    }
    if (slot->dimension != dimension) {
        throw Error(ErrorCode::kDimensionMismatch, "collection " + name + " has dimension " +
                                                       std::to_string(slot->dimension));
    }
}

std::optional<CollectionInfo> FlatVectorStore::info(const std::string& name) {
    std::lock_guard lock(collections_mu_);
    auto it = collections_.find(name);
    if (it == collections_.end()) return std::nullopt;
    std::shared_lock read(it->second->lease);
    return CollectionInfo{it->second->profile, it->second->dimension, it->second->entries.size()};
}

void FlatVectorStore::upsert(const std::string& name, const std::vector<VectorEntry>& entries) {
    auto& c = collection(name);
    std::unique_lock write(c.lease);
    for (const auto& e : entries) {
        if (e.vector.size() != c.dimension) {
            throw Error(ErrorCode::kDimensionMismatch, e.id + " has " + std::to_string(e.vector.size()) +
                                                           " components, collection expects " +
                                                           std::to_string(c.dimension));
        }
    }
    for (const auto& e : entries) {
        auto [it, inserted] = c.by_id.emplace(e.id, c.entries.size());
        if (inserted) {
            c.entries.push_back(e);
        } else {
            c.entries[it->second] = e;
        }
    }
}

std::vector<ScoredEntry> FlatVectorStore::query(const std::string& name, const Embedding& query, std::size_t top_k,
                                                const PayloadFilter& filter) {
    auto& c = collection(name);
    std::shared_lock read(c.lease);
    if (query.profile != c.profile) throw Error(ErrorCode::kProfileMismatch, "query profile differs from " + name);
    std::vector<ScoredEntry> scored;
    for (const auto& e : c.entries) {
        if (!payload_matches(e.payload, filter)) continue;
        scored.push_back({e, cosine_similarity(query.values, e.vector)});
    }
    auto k = std::min(top_k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(k), scored.end(), ranks_before);
    scored.resize(k);
    return scored;
}

std::vector<VectorEntry> FlatVectorStore::scan(const std::string& name, const PayloadFilter& filter) {
    auto& c = collection(name);
    std::shared_lock read(c.lease);
    std::vector<VectorEntry> out;
    for (const auto& e : c.entries) {
        if (payload_matches(e.payload, filter)) out.push_back(e);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.id < b.id; });
    return out;
}

void FlatVectorStore::flush() {
    if (!dir_) return;
    std::error_code ec;
    std::filesystem::create_directories(*dir_, ec);
    if (ec) throw Error(ErrorCode::kStoreUnavailable, "cannot create " + dir_->string() + ": " + ec.message());
    nlohmann::json manifest{{"version", 1}, {"collections", nlohmann::json::object()}};
    std::lock_guard lock(collections_mu_);
    for (const auto& [name, c] : collections_) {
        std::shared_lock read(c->lease);
        std::string data(kMagic, sizeof kMagic);
        for (const auto& e : c->entries) data += encode_entry(e);
        auto tmp = *dir_ / (name + ".vec.tmp");
        {
            std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
            out.write(data.data(), static_cast<std::streamsize>(data.size()));
            if (!out) throw Error(ErrorCode::kStoreUnavailable, "cannot write " + tmp.string());
        }
        std::filesystem::rename(tmp, *dir_ / (name + ".vec"));
        manifest["collections"][name] = {
            {"profile", std::string(to_string(c->profile))}, {"dimension", c->dimension}, {"count", c->entries.size()}};
    }
    std::ofstream out(*dir_ / "manifest.json", std::ios::trunc);
    out << manifest.dump(2) << '\n';
    if (!out) throw Error(ErrorCode::kStoreUnavailable, "cannot write manifest");
}

void FlatVectorStore::load() {
    auto manifest_path = *dir_ / "manifest.json";
    if (!std::filesystem::exists(manifest_path)) return;
    std::ifstream in(manifest_path);
    auto manifest = nlohmann::json::parse(in, nullptr, false);
    if (manifest.is_discarded() || !manifest.contains("collections")) {
        throw Error(ErrorCode::kStoreUnavailable, "corrupt manifest " + manifest_path.string());
    }
    for (const auto& [name, meta] : manifest.at("collections").items()) {
        auto profile = parse_profile(meta.at("profile").get<std::string>());
        if (!profile) throw Error(ErrorCode::kStoreUnavailable, "unknown profile in manifest for " + name);
        ensure_collection(name, *profile, meta.at("dimension").get<std::size_t>());
        std::ifstream file(*dir_ / (name + ".vec"), std::ios::binary);
        if (!file) throw Error(ErrorCode::kStoreUnavailable, "missing collection file for " + name);
        std::string data((std::istreambuf_iterator<char>(file)), std::istreambuf_iterator<char>());
        std::string_view view(data);
        if (view.substr(0, 4) != std::string_view(kMagic, 4)) {
            throw Error(ErrorCode::kStoreUnavailable, "bad magic in " + name + ".vec");
        }
        view.remove_prefix(4);
        std::vector<VectorEntry> entries;
        while (!view.empty()) {
            auto len = take<std::uint32_t>(view);
            entries.push_back(decode_entry(take_bytes(view, len)));
        }
        upsert(name, entries);
    }
}

double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw Error(ErrorCode::kDimensionMismatch,
                    std::to_string(a.size()) + " vs " + std::to_string(b.size()) + " components");
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::kZeroVector, "cosine of a zero vector");
    return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

double cosine_similarity(const Embedding& a, const Embedding& b) {
    if (a.profile != b.profile) {
        throw Error(ErrorCode::kProfileMismatch,
                    std::string(to_string(a.profile)) + " vs " + std::string(to_string(b.profile)));
    }
    return cosine_similarity(a.values, b.values);
}

std::vector<Embedding> embed_batch(const std::vector<std::string>& texts, EmbeddingProvider& provider,
                                   EmbeddingProfile profile) {
    if (texts.empty()) return {};
    auto vectors = provider.embed(texts, profile);
    if (vectors.size() != texts.size()) {
        throw Error(ErrorCode::kDimensionMismatch, "provider returned " + std::to_string(vectors.size()) +
                                                       " vectors for " + std::to_string(texts.size()) + " texts");
    }
    const auto dim = provider.dimension(profile);
    std::vector<Embedding> out;
    out.reserve(vectors.size());
    for (auto& v : vectors) {
        if (v.size() != dim) {
            throw Error(ErrorCode::kDimensionMismatch,
                        "vector of " + std::to_string(v.size()) + " components, declared " + std::to_string(dim));
        }
        out.push_back({std::move(v), profile});
    }
    return out;
}

std::size_t index_case(const CaseRecord& c, std::vector<DocumentChunk> chunks, VectorStore& store,
                       EmbeddingProvider& embed) {
    std::vector<std::string> missing;
    for (const auto& ch : chunks) {
        if (ch.case_id != c.case_id) {
            throw Error(ErrorCode::kInvalidArgument, "chunk " + ch.chunk_id + " does not belong to " + c.case_id);
        }
        if (!ch.embedding) missing.push_back(ch.text);
    }
    auto fresh = embed_batch(missing, embed, EmbeddingProfile::kChunk);
    std::size_t next = 0;
    std::vector<VectorEntry> entries;
    for (auto& ch : chunks) {
        if (!ch.embedding) ch.embedding = std::move(fresh[next++]);
        if (ch.embedding->profile != EmbeddingProfile::kChunk) {
            throw Error(ErrorCode::kProfileMismatch, "chunk " + ch.chunk_id + " carries a title embedding");
        }
        entries.push_back({ch.chunk_id,
                           ch.embedding->values,
                           {{"case_id", ch.case_id},
                            {"chunk_id", ch.chunk_id},
                            {"page", ch.page},
                            {"source_url", ch.source_url},
                            {"text", ch.text}}});
    }
    store.ensure_collection(kChunkCollection, EmbeddingProfile::kChunk, embed.dimension(EmbeddingProfile::kChunk));
    store.ensure_collection(kTitleCollection, EmbeddingProfile::kTitle, embed.dimension(EmbeddingProfile::kTitle));
    if (!entries.empty()) store.upsert(kChunkCollection, entries);
    auto title = embed_batch({c.case_title}, embed, EmbeddingProfile::kTitle);
    store.upsert(kTitleCollection,
                 {{c.case_id, title.front().values, {{"case_id", c.case_id}, {"case_title", c.case_title}}}});
    return entries.size();
}

namespace {

DocumentChunk chunk_from_entry(const VectorEntry& e) {
    DocumentChunk ch;
    ch.chunk_id = e.id;
    ch.case_id = e.payload.value("case_id", std::string{});
    ch.text = e.payload.value("text", std::string{});
    ch.page = e.payload.value("page", 1);
    ch.source_url = e.payload.value("source_url", std::string{});
    ch.embedding = Embedding{e.vector, EmbeddingProfile::kChunk};
    return ch;
}

}  // namespace

std::vector<DocumentChunk> load_case_chunks(VectorStore& store, const std::string& case_id) {
    if (!store.info(kChunkCollection)) return {};
    std::vector<DocumentChunk> out;
    for (const auto& e : store.scan(kChunkCollection, {{"case_id", case_id}})) out.push_back(chunk_from_entry(e));
    return out;
}

std::vector<RankedChunk> rank_chunks(const std::vector<DocumentChunk>& chunks, const Embedding& question,
                                     std::size_t top_k) {
    if (top_k < 1) throw Error(ErrorCode::kInvalidArgument, "top_k must be >= 1");
    std::vector<RankedChunk> ranked;
    ranked.reserve(chunks.size());
    for (const auto& ch : chunks) {
        if (!ch.embedding) throw Error(ErrorCode::kInvalidArgument, "chunk " + ch.chunk_id + " has no embedding");
        ranked.push_back({ch, cosine_similarity(question, *ch.embedding)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const RankedChunk& a, const RankedChunk& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.chunk.page != b.chunk.page) return a.chunk.page < b.chunk.page;
        return a.chunk.chunk_id < b.chunk.chunk_id;
    });
    if (ranked.size() > top_k) ranked.resize(top_k);
    return ranked;
}

std::vector<RankedChunk> query_chunks(VectorStore& store, const Embedding& question, const std::string& case_id,
                                      std::size_t top_k) {
    return rank_chunks(load_case_chunks(store, case_id), question, top_k);
}

TitleIndex TitleIndex::build(const CaseStore& cases, EmbeddingProvider& embed, VectorStore* store) {
    TitleIndex index;
    if (store && store->info(kTitleCollection)) {
        for (const auto& e : store->scan(kTitleCollection)) {
            index.by_case_[e.id] = Embedding{e.vector, EmbeddingProfile::kTitle};
        }
    }
    std::vector<std::string> ids;
    std::vector<std::string> titles;
    for (const auto& c : cases.records()) {
        if (index.by_case_.count(c.case_id)) continue;
        ids.push_back(c.case_id);
        titles.push_back(c.case_title);
    }
    auto embedded = embed_batch(titles, embed, EmbeddingProfile::kTitle);
    for (std::size_t i = 0; i < ids.size(); ++i) index.by_case_[ids[i]] = std::move(embedded[i]);
    return index;
}

const Embedding* TitleIndex::find(const std::string& case_id) const {
    auto it = by_case_.find(case_id);
    return it == by_case_.end() ? nullptr : &it->second;
}

}  // namespace lexagent
