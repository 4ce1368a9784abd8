#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "lexagent/domain.hpp"
#include "lexagent/pdf.hpp"

namespace lexagent {

struct ChunkingOptions {
    std::size_t chunk_size = 1024;  // tokens
    std::size_t overlap = 20;       // tokens
    /// Allow a chunk to end early, at a sentence end, when one falls inside
    /// its last 10% of tokens. Overlap stays exact either way.
    bool sentence_aware = true;
};

struct DocumentChunk {
    std::string chunk_id;
    std::string case_id;
    std::string text;
    int page = 1;
    std::string source_url;
    std::optional<Embedding> embedding;

    // Global token positions [first_token, last_token) within the document;
    // kept for coverage checks.
    std::size_t first_token = 0;
    std::size_t end_token = 0;

    bool operator==(const DocumentChunk&) const = default;
};

/// "<case_id>#<index, zero-padded to 4>".
std::string make_chunk_id(const std::string& case_id, std::size_t index);

/// Splits page texts into overlapping token windows. Each chunk is labelled
/// with the page of its first token; chunk text is the source text from the
/// first to the last token (pages joined by a newline).
std::vector<DocumentChunk> chunk_document(const std::vector<PdfPage>& pages, const std::string& case_id,
                                          const std::string& source_url, const ChunkingOptions& options = {});

}  // namespace lexagent
