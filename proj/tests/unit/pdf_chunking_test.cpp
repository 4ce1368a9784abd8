#include <gtest/gtest.h>

#include "lexagent/chunking.hpp"
#include "lexagent/error.hpp"
#include "lexagent/pdf.hpp"
#include "lexagent/text.hpp"
#include "support.hpp"

using namespace lexagent;
namespace lt = lexagent::testing;

namespace {

std::vector<PdfPage> as_pages(const std::vector<std::string>& texts) {
    std::vector<PdfPage> pages;
    for (std::size_t i = 0; i < texts.size(); ++i) pages.push_back({static_cast<int>(i + 1), texts[i]});
    return pages;
}

// whitespace-split word count, the way the generator counts: words and "." marks
std::size_t oracle_tokens(const std::string& s) {
    std::size_t n = 0;
    bool in_word = false;
    for (char c : s) {
        if (c == '.') {
            ++n;
            in_word = false;
        } else if (std::isspace(static_cast<unsigned char>(c))) {
            in_word = false;
        } else if (!in_word) {
            ++n;
            in_word = true;
        }
    }
    return n;
}

}  // namespace

TEST(Pdf, RoundTripPlainAndFlate) {
    std::vector<std::string> texts{"Decision of the Commission\nCase AT.40099 (Google Android)", "Page two \\ text",
                                   "Fines"};
    for (bool compress : {false, true}) {
        auto pages = extract_pdf_pages(lt::make_pdf(texts, compress));
        ASSERT_EQ(pages.size(), 3u);
        EXPECT_EQ(pages[0].number, 1);
        EXPECT_NE(pages[0].text.find("Case AT.40099 (Google Android)"), std::string::npos);
        EXPECT_NE(pages[0].text.find("Decision of the Commission"), std::string::npos);
        EXPECT_NE(pages[1].text.find("Page two \\ text"), std::string::npos);
        EXPECT_EQ(pages[2].number, 3);
    }
}

TEST(Pdf, MalformedInput) {
    for (std::string bad : {std::string("not a pdf"), std::string("%PDF-1.4\n1 0 obj\n<< >>\nendobj\n"), std::string()}) {
        try {
            extract_pdf_pages(bad);
            ADD_FAILURE();
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kMalformedDocument);
        }
    }
}

TEST(Pdf, LeadingPagesOnly) {
    auto pdf = lt::make_pdf({"one", "two", "three"});
    EXPECT_EQ(leading_pages_text(pdf, 2), "one\n\ntwo");
    EXPECT_EQ(leading_pages_text(pdf, 0), "one\n\ntwo\n\nthree");
}

TEST(Chunking, GeneratorOracleAgreesWithTokenizer) {
    auto doc = lt::generate_document(777, 3, 5);
    std::size_t total = 0;
    for (const auto& p : doc) {
        EXPECT_EQ(count_tokens(p), oracle_tokens(p));
        total += oracle_tokens(p);
    }
    EXPECT_EQ(total, 777u);
}

TEST(Chunking, WindowsOverlapAndCover) {
    auto doc = lt::generate_document(3000, 4, 9);
    auto chunks = chunk_document(as_pages(doc), "AT.1", "https://ec.europa.eu/a.pdf");
    ASSERT_GE(chunks.size(), 3u);
    EXPECT_EQ(chunks.front().first_token, 0u);
    EXPECT_EQ(chunks.back().end_token, 3000u);
    for (std::size_t i = 0; i < chunks.size(); ++i) {
        const auto& c = chunks[i];
        EXPECT_EQ(c.chunk_id, make_chunk_id("AT.1", i));
        EXPECT_LE(c.end_token - c.first_token, 1024u);
        EXPECT_EQ(count_tokens(c.text), c.end_token - c.first_token);
        if (i > 0) EXPECT_EQ(chunks[i - 1].end_token - c.first_token, 20u);
        if (i + 1 < chunks.size()) EXPECT_GE(c.end_token - c.first_token, 1024u - 102u);
    }
    EXPECT_EQ(make_chunk_id("AT.1", 7), "AT.1#0007");
}

TEST(Chunking, SentenceAwareEndsOnFullStop) {
    auto doc = lt::generate_document(2500, 1, 4);
    auto chunks = chunk_document(as_pages(doc), "X", "u");
    for (std::size_t i = 0; i + 1 < chunks.size(); ++i) {
        EXPECT_EQ(chunks[i].text.back(), '.') << i;
    }
    auto fixed = chunk_document(as_pages(doc), "X", "u", ChunkingOptions{1024, 20, false});
    EXPECT_EQ(fixed[0].end_token, 1024u);
}

TEST(Chunking, PageIsFirstTokenPage) {
    // page 2 is empty; chunks starting on page 3 must say 3
    std::vector<PdfPage> pages{{1, "a b c d e f g h"}, {2, ""}, {3, "i j k l m n o p"}};
    auto chunks = chunk_document(pages, "X", "u", ChunkingOptions{5, 2, false});
    std::vector<int> got;
    for (const auto& c : chunks) got.push_back(c.page);
    // windows start at tokens 0, 3, 6, 9, 12; page 1 holds tokens 0..7
    EXPECT_EQ(got, (std::vector<int>{1, 1, 1, 3, 3}));
    EXPECT_EQ(chunks[1].text, "d e f g h");
    EXPECT_EQ(chunks[2].text, "g h\n\ni j k");
}

TEST(Chunking, Degenerate) {
    EXPECT_TRUE(chunk_document({{1, "  "}}, "X", "u").empty());
    auto one = chunk_document({{1, "short text."}}, "X", "u");
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].text, "short text.");
    EXPECT_THROW(chunk_document({{1, "x"}}, "X", "u", ChunkingOptions{20, 20, true}), Error);
}
