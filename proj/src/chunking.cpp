#include "lexagent/chunking.hpp"

#include <cstdio>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

struct PlacedToken {
    std::size_t page_index;
    Token span;
};

}  // namespace

std::string make_chunk_id(const std::string& case_id, std::size_t index) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04zu", index);
    return case_id + "#" + buf;
}

std::vector<DocumentChunk> chunk_document(const std::vector<PdfPage>& pages, const std::string& case_id,
                                          const std::string& source_url, const ChunkingOptions& options) {
    if (options.chunk_size <= options.overlap) {
        throw Error(ErrorCode::kInvalidArgument, "chunk_size must exceed overlap");
    }
    std::vector<PlacedToken> tokens;
    for (std::size_t p = 0; p < pages.size(); ++p) {
        for (const auto& t : tokenize(pages[p].text)) tokens.push_back({p, t});
    }

    auto token_text = [&](std::size_t i) {
        const auto& t = tokens[i];
        return std::string_view(pages[t.page_index].text).substr(t.span.begin, t.span.end - t.span.begin);
    };
    auto slice = [&](std::size_t first, std::size_t last) {  // inclusive token range
        std::string text;
        auto first_page = tokens[first].page_index;
        auto last_page = tokens[last].page_index;
        for (auto p = first_page; p <= last_page; ++p) {
            std::string_view page = pages[p].text;
            std::size_t b = p == first_page ? tokens[first].span.begin : 0;
            std::size_t e = p == last_page ? tokens[last].span.end : page.size();
            if (p != first_page) text += '\n';
            text += trim(page.substr(b, e - b));
        }
        return text;
    };

    const std::size_t size = options.chunk_size;
    const std::size_t min_len = size - size / 10;
    const bool adjust = options.sentence_aware && min_len > options.overlap;

    std::vector<DocumentChunk> chunks;
    std::size_t start = 0;
    while (start < tokens.size()) {
        std::size_t end = std::min(start + size, tokens.size());  // exclusive
        if (adjust && end < tokens.size()) {
            for (std::size_t e = end; e > start + min_len; --e) {
                if (is_sentence_end(token_text(e - 1))) {
                    end = e;
                    break;
                }
            }
        }
        DocumentChunk c;
        c.chunk_id = make_chunk_id(case_id, chunks.size());
        c.case_id = case_id;
        c.text = slice(start, end - 1);
        c.page = pages[tokens[start].page_index].number;
        c.source_url = source_url;
        c.first_token = start;
        c.end_token = end;
        chunks.push_back(std::move(c));
        if (end == tokens.size()) break;
        start = end - options.overlap;
    }
    return chunks;
}

}  // namespace lexagent
