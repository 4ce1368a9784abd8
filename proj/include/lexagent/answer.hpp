#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/chunking.hpp"
#include "lexagent/domain.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"
#include "lexagent/vector_store.hpp"

namespace lexagent {

inline constexpr std::size_t kCaseContextChunks = 8;
inline constexpr std::size_t kMaxFollowups = 3;

struct Citation {
    int marker = 0;
    std::string source_url;
    std::optional<int> page;

    bool operator==(const Citation&) const = default;
};

/// Answer text with inline "[n]" markers; each distinct marker has exactly
/// one citation entry.
struct CitedAnswer {
    std::string text;
    std::vector<Citation> citations;
    std::vector<std::string> followups;
    std::size_t citation_violations = 0;  // markers stripped because they pointed nowhere

    bool operator==(const CitedAnswer&) const = default;
};

void to_json(nlohmann::json& j, const CitedAnswer& a);
void from_json(const nlohmann::json& j, CitedAnswer& a);

struct CitationSource {
    std::string source_url;
    std::optional<int> page;
    bool usable = true;  // false: markers to this source are stripped like out-of-range ones
};

/// Maps "[n]" (1-based into `sources`) to citations. Markers outside the
/// list, or to unusable sources, are removed from the text and counted.
CitedAnswer resolve_citations(std::string_view answer_text, const std::vector<CitationSource>& sources);
CitedAnswer resolve_citations(std::string_view answer_text, const std::vector<DocumentChunk>& chunks);

struct CaseAnswer {
    CitedAnswer answer;
    std::vector<DocumentChunk> case_chunks;  // every chunk of the case (the active case)
    std::vector<RankedChunk> context;        // the chunks placed in the prompt, in marker order
    std::string prompt;
};

/// Numbered context blocks: "[n] (page P, URL)" followed by the chunk text.
std::string render_chunk_context(const std::vector<RankedChunk>& context);

/// RAG answer over one case's chunks: the top `top_k` chunks by similarity to
/// the question go into the prompt with the chat history. Throws
/// Error{kCaseNotIndexed} when the store holds no chunk for the case.
CaseAnswer answer_case(std::string_view question, const std::string& case_id,
                       const std::vector<ChatMessage>& history, VectorStore& store, EmbeddingProvider& embed,
                       ChatProvider& chat, const std::string& prompt_template, std::size_t top_k = kCaseContextChunks);

/// Fetches, chunks and indexes a case's decision document. Returns the number
/// of chunks written.
std::size_t index_case_document(const CaseRecord& c, DocumentSource& documents, VectorStore& store,
                                EmbeddingProvider& embed, const ChunkingOptions& options = {});

/// Domain-restricted research answer. Sources outside `allowed_domains` are
/// never cited; with no allowed source left the answer is rejected
/// (Error{kUngroundedAnswer}). Up to three follow-up questions are attached.
CitedAnswer answer_theoretical(std::string_view question, const std::vector<ChatMessage>& history,
                               DeepResearchProvider& research, const std::vector<std::string>& allowed_domains,
                               const std::string& prompt_template);

/// Follow-up questions listed after a "Follow-up questions:" heading.
std::vector<std::string> parse_followups(std::string& answer_text);

/// One specific question for the user about the missing information.
std::string ask_clarification(std::string_view question, std::string_view scratchpad,
                              const std::vector<ChatMessage>& history, const std::vector<CaseRecord>& session_cases,
                              ChatProvider& chat, const std::string& prompt_template);

/// Drops apologies/refusals, keeps the text to the first question mark.
std::string sanitize_clarification(std::string_view reply);

}  // namespace lexagent
