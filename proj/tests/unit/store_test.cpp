#include <cmath>
#include <filesystem>
#include <thread>

#include <unistd.h>

#include <gtest/gtest.h>
#include <httplib.h>

#include "lexagent/error.hpp"
#include "lexagent/remote_store.hpp"
#include "lexagent/vector_store.hpp"
#include "support.hpp"

using namespace lexagent;
namespace lt = lexagent::testing;

namespace {

ErrorCode code_of(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no error thrown";
    return ErrorCode::kConfig;
}

void fill(VectorStore& store) {
    store.ensure_collection("c", EmbeddingProfile::kChunk, 3);
    store.upsert("c", {{"b", {1, 0, 0}, {{"case_id", "X"}}},
                       {"a", {1, 0, 0}, {{"case_id", "Y"}}},
                       {"c", {0, 1, 0}, {{"case_id", "X"}}},
                       {"d", {1, 1, 0}, {{"case_id", "X"}, {"page", 2}}}});
}

// Shared checks for both backends: the same contract must hold.
void check_contract(VectorStore& store) {
    fill(store);
    auto info = store.info("c");
    ASSERT_TRUE(info);
    EXPECT_EQ(info->size, 4u);
    EXPECT_EQ(info->dimension, 3u);
    EXPECT_FALSE(store.info("missing"));

    auto hits = store.query("c", Embedding{{1, 0, 0}, EmbeddingProfile::kChunk}, 3);
    ASSERT_EQ(hits.size(), 3u);
    // equal scores tie by id
    EXPECT_EQ(hits[0].entry.id, "a");
    EXPECT_EQ(hits[1].entry.id, "b");
    EXPECT_EQ(hits[2].entry.id, "d");
    EXPECT_NEAR(hits[2].score, 1 / std::sqrt(2.0), 1e-12);

    auto filtered = store.query("c", Embedding{{0, 1, 0}, EmbeddingProfile::kChunk}, 10, {{"case_id", "X"}});
    ASSERT_EQ(filtered.size(), 3u);
    EXPECT_EQ(filtered[0].entry.id, "c");

    store.upsert("c", {{"b", {0, 0, 1}, {{"case_id", "Z"}}}});
    EXPECT_EQ(store.info("c")->size, 4u);
    auto scanned = store.scan("c");
    ASSERT_EQ(scanned.size(), 4u);
    EXPECT_EQ(scanned[1].id, "b");
    EXPECT_EQ(scanned[1].payload["case_id"], "Z");
    EXPECT_EQ(store.scan("c", {{"case_id", "X"}}).size(), 2u);

    EXPECT_EQ(code_of([&] { store.ensure_collection("c", EmbeddingProfile::kTitle, 3); }), ErrorCode::kProfileMismatch);
    EXPECT_EQ(code_of([&] { store.ensure_collection("c", EmbeddingProfile::kChunk, 4); }),
              ErrorCode::kDimensionMismatch);
    EXPECT_EQ(code_of([&] { store.upsert("c", {{"e", {1, 2}, {}}}); }), ErrorCode::kDimensionMismatch);
    EXPECT_EQ(code_of([&] { store.query("c", Embedding{{1, 0, 0}, EmbeddingProfile::kTitle}, 1); }),
              ErrorCode::kProfileMismatch);
    EXPECT_EQ(code_of([&] { store.scan("missing"); }), ErrorCode::kNotFound);
}

}  // namespace

TEST(Cosine, MatchesOracleAndRejectsBadInput) {
    std::vector<double> a{0.3, -1.2, 4.0}, b{2.0, 0.5, -0.25};
    EXPECT_NEAR(cosine_similarity(a, b), lt::oracle_cosine(a, b), 1e-15);
    EXPECT_EQ(code_of([&] { cosine_similarity(std::vector<double>{0, 0, 0}, b); }), ErrorCode::kZeroVector);
    EXPECT_EQ(code_of([&] { cosine_similarity(std::vector<double>{1, 0}, b); }), ErrorCode::kDimensionMismatch);
    EXPECT_EQ(code_of([&] {
                  cosine_similarity(Embedding{a, EmbeddingProfile::kChunk}, Embedding{b, EmbeddingProfile::kTitle});
              }),
              ErrorCode::kProfileMismatch);
}

TEST(FlatStore, Contract) {
    FlatVectorStore store;
    check_contract(store);
}

TEST(FlatStore, PersistsAcrossInstances) {
    auto dir = std::filesystem::temp_directory_path() / ("lexagent_store_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    {
        FlatVectorStore store(dir);
        fill(store);
        store.flush();
    }
    FlatVectorStore again(dir);
    auto info = again.info("c");
    ASSERT_TRUE(info);
    EXPECT_EQ(info->size, 4u);
    auto d = again.scan("c", {{"case_id", "X"}});
    ASSERT_EQ(d.size(), 3u);
    EXPECT_EQ(d[2].id, "d");
    EXPECT_EQ(d[2].vector, (std::vector<double>{1, 1, 0}));
    EXPECT_EQ(d[2].payload["page"], 2);
    std::filesystem::remove_all(dir);
}

TEST(FlatStore, CorruptFileIsStoreUnavailable) {
    auto dir = std::filesystem::temp_directory_path() / ("lexagent_corrupt_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    {
        FlatVectorStore store(dir);
        fill(store);
        store.flush();
    }
    std::filesystem::resize_file(dir / "c.vec", 10);
    EXPECT_EQ(code_of([&] { FlatVectorStore broken(dir); }), ErrorCode::kStoreUnavailable);
    std::filesystem::remove_all(dir);
}

TEST(RemoteStore, ContractOverLoopback) {
    FlatVectorStore backing;
    httplib::Server server;
    mount_vector_store_routes(server, backing);
    int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    {
        RemoteVectorStore remote("http://127.0.0.1:" + std::to_string(port), std::chrono::seconds(5));
        check_contract(remote);
        // writes landed in the backing store
        EXPECT_EQ(backing.info("c")->size, 4u);
    }
    server.stop();
    t.join();
}

TEST(RemoteStore, UnreachableIsStoreUnavailable) {
    RemoteVectorStore remote("http://127.0.0.1:1", std::chrono::seconds(1));
    EXPECT_EQ(code_of([&] { remote.info("c"); }), ErrorCode::kStoreUnavailable);
}

TEST(Indexing, ChunksAndTitlesWritten) {
    HashEmbeddingProvider embed;
    FlatVectorStore store;
    auto c = lt::make_case("AT.1", "Trucks");
    auto chunks = chunk_document({{1, "one two three four five six"}, {2, "seven eight nine ten"}}, c.case_id,
                                 c.pdf_url, ChunkingOptions{4, 1, false});
    EXPECT_EQ(index_case(c, chunks, store, embed), chunks.size());
    auto loaded = load_case_chunks(store, "AT.1");
    ASSERT_EQ(loaded.size(), chunks.size());
    for (std::size_t i = 0; i < loaded.size(); ++i) {
        EXPECT_EQ(loaded[i].chunk_id, chunks[i].chunk_id);
        EXPECT_EQ(loaded[i].page, chunks[i].page);
        EXPECT_EQ(loaded[i].text, chunks[i].text);
        EXPECT_EQ(loaded[i].source_url, c.pdf_url);
    }
    EXPECT_TRUE(load_case_chunks(store, "AT.2").empty());

    CaseStore cases({c});
    auto before = embed.texts_embedded();
    auto titles = TitleIndex::build(cases, embed, &store);
    EXPECT_EQ(embed.texts_embedded(), before);  // read back, not re-embedded
    ASSERT_TRUE(titles.find("AT.1"));
    EXPECT_EQ(titles.find("AT.1")->values, embed.embed({"Trucks"}, EmbeddingProfile::kTitle)[0]);

    auto wrong = chunks;
    wrong[0].case_id = "AT.2";
    EXPECT_EQ(code_of([&] { index_case(c, wrong, store, embed); }), ErrorCode::kInvalidArgument);
}

TEST(Indexing, RankTiesByPageThenId) {
    std::vector<DocumentChunk> chunks(3);
    for (std::size_t i = 0; i < 3; ++i) {
        chunks[i].chunk_id = make_chunk_id("X", 2 - i);
        chunks[i].page = i == 0 ? 1 : 2;
        chunks[i].embedding = Embedding{{1, 0}, EmbeddingProfile::kChunk};
    }
    auto ranked = rank_chunks(chunks, Embedding{{1, 0}, EmbeddingProfile::kChunk}, 8);
    ASSERT_EQ(ranked.size(), 3u);
    EXPECT_EQ(ranked[0].chunk.chunk_id, "X#0002");
    EXPECT_EQ(ranked[1].chunk.chunk_id, "X#0000");
    EXPECT_EQ(ranked[2].chunk.chunk_id, "X#0001");
    EXPECT_EQ(rank_chunks(chunks, Embedding{{1, 0}, EmbeddingProfile::kChunk}, 2).size(), 2u);
}
