#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/agent.hpp"
#include "lexagent/domain.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"
#include "lexagent/vector_store.hpp"

namespace lexagent::testing {

const Vocabularies& vocab();
const Assets& assets();
std::filesystem::path fixture(const std::string& name);

/// Minimal PDF writer: one page per entry, lines split on '\n'. Flate
/// compression of the content streams is optional.
std::string make_pdf(const std::vector<std::string>& pages, bool compress = false);

CaseRecord make_case(std::string id, std::string title, std::optional<Jurisdiction> j = Jurisdiction::kEU,
                     std::optional<std::string> violation = "Article 101 TFEU",
                     std::optional<std::string> sector = std::nullopt, std::vector<std::string> companies = {},
                     std::optional<std::string> date = std::nullopt);

/// Deterministic synthetic cases with consistent jurisdiction/violation pairs.
std::vector<CaseRecord> generate_cases(std::size_t n, std::uint64_t seed);

/// Random query vectors over the vocabulary of `cases` (1 to 3 dimensions).
std::vector<QueryVector> generate_query_vectors(const std::vector<CaseRecord>& cases, std::size_t n,
                                                std::uint64_t seed);

/// Brute force: every case checked against every present dimension, then
/// the five-case cut by title similarity to `question`, newer date, case_id.
std::vector<std::string> oracle_search(const QueryVector& qv, const std::string& question,
                                       const std::vector<CaseRecord>& cases, EmbeddingProvider& embed);

/// Plain cosine written out, independent of the library.
double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b);

/// Unit vector with cosine `similarity` to `base` (a unit vector), built in
/// the plane of `base` and the first axis orthogonal to it.
std::vector<double> vector_at_similarity(const std::vector<double>& base, double similarity);

/// Pages of synthetic prose with a known token count.
std::vector<std::string> generate_document(std::size_t tokens, std::size_t pages, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Agent harness over scripted providers.

struct Harness {
    HashEmbeddingProvider embed;
    ScriptedChatProvider agent_chat;
    ScriptedChatProvider tool_chat;
    ScriptedResearchProvider research;
    ScriptedWebSearchProvider web;
    InMemoryDocumentSource documents;
    FlatVectorStore store;
    CaseStore cases;
    TitleIndex titles;
    std::unique_ptr<Agent> agent;

    /// Indexes every case with a few chunks of generated decision text.
    explicit Harness(const std::vector<CaseRecord>& dataset, AgentOptions options = {});
};

/// The six routing scenario cases used by the conformance suite.
std::vector<CaseRecord> scenario_dataset();

/// Reply strings for the scripted agent.
std::string act(const std::string& tool, const nlohmann::json& arguments = nlohmann::json::object(),
                const std::string& thought = "");
std::string final_reply(const std::string& text, const std::string& thought = "");

struct TurnReport {
    std::vector<std::string> tools;
    std::string outcome;  // answer | clarification | error
    std::string status;
    std::optional<std::string> active_case;
    std::optional<CitedAnswer> answer;
    std::string clarification;
    /// (source_url, page) pairs an answer may cite: every indexed chunk, plus
    /// the research sources of the turn and the session cases' decision
    /// documents (page absent).
    std::vector<std::pair<std::string, std::optional<int>>> grounding;
};

struct ScenarioReport {
    std::string name;
    std::vector<TurnReport> turns;
    std::vector<std::string> failures;  // empty when every expectation holds
};

/// Runs one scenario file: {name, session_cases, documents, turns: [{user,
/// agent, tool_chat, research, web, expect}]}.
ScenarioReport run_scenario(const nlohmann::json& scenario);
std::vector<nlohmann::json> load_scenarios();

}  // namespace lexagent::testing
