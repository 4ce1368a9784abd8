#pragma once

#include <map>
#include <string>
#include <vector>

#include "lexagent/domain.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"
#include "lexagent/vector_store.hpp"

namespace lexagent {

inline constexpr std::size_t kMaxSearchResults = 5;

/// Titles match when their cosine similarity strictly exceeds this value.
inline constexpr double kTitleMatchThreshold = 0.85;
/// Similarities within this distance of the threshold count as equal to it
/// (floating-point noise), so they do not match.
inline constexpr double kSimilarityTolerance = 1e-9;

inline bool exceeds_title_threshold(double similarity) {
    return similarity > kTitleMatchThreshold + kSimilarityTolerance;
}

enum class SearchOrigin { kDatabase, kWeb };

struct SearchResult {
    std::vector<CaseRecord> cases;  // at most kMaxSearchResults
    SearchOrigin origin = SearchOrigin::kDatabase;
    std::size_t dropped_unverified = 0;  // web: no official source found
    std::size_t dropped_mismatch = 0;    // web: metadata disagrees with the question
};

/// Asks the model for the six filter dimensions of `question`. Constrained
/// dimensions outside their vocabulary are dropped individually.
/// Throws Error{kExtractionUnparseable} when the reply holds no JSON object.
QueryVector extract_query_vector(std::string_view question, const std::vector<ChatMessage>& history,
                                 ChatProvider& chat, const Vocabularies& vocab, const std::string& prompt_template,
                                 std::vector<std::string>* dropped = nullptr);

/// Every non-title dimension of qv holds for c (case_id, jurisdiction,
/// violation, sector exact; companies as a normalized subset).
bool matches_exact_dimensions(const QueryVector& qv, const CaseRecord& c);

/// Cases satisfying every present dimension of qv. Titles match by cosine
/// similarity of title embeddings. More than five candidates are ranked by
/// similarity of the embedded question to each title, then newer
/// decision_date, then case_id, and cut to five.
/// Throws Error{kEmptyQueryVector}.
SearchResult database_search(const QueryVector& qv, std::string_view question, const CaseStore& cases,
                             const TitleIndex& titles, EmbeddingProvider& embed);

struct WebSearchConfig {
    std::map<Jurisdiction, std::string> official_domains;
    std::size_t results_per_title = 5;
    std::string candidates_prompt;  // {question}
    std::string extraction_prompt;  // query-vector prompt
};

/// Dimensions present in both vectors that disagree; empty means compatible.
std::vector<std::string> conflicting_dimensions(const QueryVector& wanted, const QueryVector& candidate,
                                                EmbeddingProvider& embed);

/// Web fallback: candidate titles from the research provider, each verified
/// against the official authority domain (unverified titles are treated as
/// hallucinated), then filtered by the metadata extracted from the official
/// result description.
SearchResult web_search_fallback(std::string_view question, const QueryVector& qv, DeepResearchProvider& research,
                                 WebSearchProvider& web, ChatProvider& chat, EmbeddingProvider& embed,
                                 const Vocabularies& vocab, const WebSearchConfig& config);

}  // namespace lexagent
