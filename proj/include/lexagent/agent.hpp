#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/answer.hpp"
#include "lexagent/assets.hpp"
#include "lexagent/chunking.hpp"
#include "lexagent/domain.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/providers.hpp"
#include "lexagent/search.hpp"
#include "lexagent/vector_store.hpp"

namespace lexagent {

enum class ToolName { kDatabaseSearch, kWebSearch, kAnswerCase, kAnswerTheoretical, kAskClarification };

std::string to_string(ToolName t);
/// Throws Error{kInvalidValue}.
ToolName parse_tool(std::string_view name);
std::optional<ToolName> try_parse_tool(std::string_view name);

struct ToolAction {
    ToolName tool = ToolName::kAskClarification;
    nlohmann::json arguments = nlohmann::json::object();

    bool operator==(const ToolAction&) const = default;
};

struct ReactStep {
    std::string thought;
    ToolAction action;
    std::string observation;
    bool forced = false;  // the validator replaced the model's choice

    bool operator==(const ReactStep&) const = default;
};

void to_json(nlohmann::json& j, const ReactStep& s);
void from_json(const nlohmann::json& j, ReactStep& s);

enum class SessionStatus { kIdle, kRunning, kAwaitingClarification };

std::string to_string(SessionStatus s);
SessionStatus parse_session_status(std::string_view s);

enum class EntryKind { kMessage, kAnswer, kClarification, kError };

std::string to_string(EntryKind k);
EntryKind parse_entry_kind(std::string_view s);

/// One chat-history entry. Assistant entries carry the turn's tool trace.
struct HistoryEntry {
    std::string role;  // "user" | "assistant"
    std::string content;
    EntryKind kind = EntryKind::kMessage;
    std::optional<CitedAnswer> answer;
    std::vector<ReactStep> trace;

    bool operator==(const HistoryEntry&) const = default;
};

void to_json(nlohmann::json& j, const HistoryEntry& e);
void from_json(const nlohmann::json& j, HistoryEntry& e);

struct ActiveCase {
    std::string case_id;
    std::vector<DocumentChunk> chunks;

    bool operator==(const ActiveCase&) const = default;
};

struct SessionState {
    std::string session_id;
    std::vector<HistoryEntry> chat_history;
    std::vector<ReactStep> scratchpad;
    std::vector<CaseRecord> session_cases;  // retrieval order, unique ids
    std::optional<ActiveCase> active_case;
    SessionStatus status = SessionStatus::kIdle;
    std::optional<std::string> pending_question;  // the question a clarification interrupted

    /// Appends unless the id is already present. Returns true when appended.
    bool add_case(const CaseRecord& c);
    const CaseRecord* find_case(std::string_view case_id) const;
    std::vector<ChatMessage> messages() const;

    bool operator==(const SessionState&) const = default;
};

void to_json(nlohmann::json& j, const SessionState& s);
void from_json(const nlohmann::json& j, SessionState& s);

struct CaseReference {
    enum class Kind { kCase, kAmbiguous, kNone };
    Kind kind = Kind::kNone;
    std::string case_id;

    static CaseReference none() { return {}; }
    static CaseReference ambiguous() { return {Kind::kAmbiguous, {}}; }
    static CaseReference to(std::string id) { return {Kind::kCase, std::move(id)}; }
    bool operator==(const CaseReference&) const = default;
};

/// Case identifiers that appear literally in `text` (EU "AT.39398", "M.1234";
/// German "B1-23-20" or "B1-23/20"), in order of appearance.
std::vector<std::string> find_case_ids(std::string_view text);

/// Which case a question refers to: an explicit id, an ordinal into
/// session_cases, or a bare "the case" when exactly one case is known.
CaseReference resolve_case_reference(std::string_view question, const std::vector<CaseRecord>& session_cases);

struct PromptBudget {
    std::size_t max_tokens = 6000;
    std::size_t summary_tokens = 12;  // observation tokens kept for a summarized step
};

std::string describe_tools();
std::string render_step(const ReactStep& s, std::size_t index);
std::string summarize_step(const ReactStep& s, std::size_t index, std::size_t observation_tokens);

/// System prompt, then a context message (session cases and scratchpad) when
/// there is any, then the chat history. Over budget, the oldest scratchpad
/// steps are summarized first.
std::vector<ChatMessage> build_agent_prompt(const SessionState& session, const std::string& system_template,
                                            const std::string& tools_description, const PromptBudget& budget = {});

struct AgentPrompts {
    std::string system;
    std::string query_vector;
    std::string web_candidates;
    std::string case_qa;
    std::string theoretical;
    std::string clarification;

    static AgentPrompts from_assets(const Assets& assets);
};

/// Everything the tools need. Pointers are borrowed; `documents` is optional.
struct AgentTools {
    const CaseStore* cases = nullptr;
    const TitleIndex* titles = nullptr;
    VectorStore* store = nullptr;
    EmbeddingProvider* embed = nullptr;
    ChatProvider* tool_chat = nullptr;
    DeepResearchProvider* research = nullptr;
    WebSearchProvider* web = nullptr;
    DocumentSource* documents = nullptr;
    const Vocabularies* vocab = nullptr;
    AgentPrompts prompts;
    std::map<Jurisdiction, std::string> official_domains;
    std::vector<std::string> allowed_domains;
    ChunkingOptions chunking;
};

struct AgentOptions {
    std::size_t max_steps = 8;
    PromptBudget budget;
};

enum class AgentEventType { kThinking, kToolStarted, kToolFinished, kAnswerReady, kClarificationNeeded, kError };

std::string to_string(AgentEventType t);

struct AgentEvent {
    AgentEventType type;
    std::optional<ToolName> tool;
    std::string detail;
};

using AgentObserver = std::function<void(const AgentEvent&)>;

struct TurnOutcome {
    enum class Kind { kAnswer, kClarification, kError };
    Kind kind = Kind::kError;
    std::optional<CitedAnswer> answer;
    std::string clarification;
    std::string error;
    std::vector<ReactStep> steps;

    std::vector<ToolName> tool_sequence() const;
};

class Agent {
public:
    Agent(AgentTools tools, ChatProvider& chat, AgentOptions options = {});

    /// Starts a turn. Throws Error{kConflict} when the session is running.
    TurnOutcome run_turn(SessionState& session, std::string_view user_message, const AgentObserver& observer = {});

    /// Continues the turn a clarification interrupted. A reply that is a new
    /// question of its own starts a fresh turn instead.
    TurnOutcome resume_with_clarification(SessionState& session, std::string_view user_reply,
                                          const AgentObserver& observer = {});

    /// run_turn or resume_with_clarification depending on the session status.
    TurnOutcome handle_message(SessionState& session, std::string_view text, const AgentObserver& observer = {});

    const AgentOptions& options() const { return options_; }

private:
    struct Turn;

    TurnOutcome run(SessionState& session, Turn& turn, const AgentObserver& observer);

    AgentTools tools_;
    ChatProvider& chat_;
    AgentOptions options_;
    std::string tools_description_;
};

/// True when a reply to a clarification reads as a separate question rather
/// than an answer to it.
bool looks_like_new_question(std::string_view reply, const std::vector<CaseRecord>& session_cases);

/// Serializes turns of one session; readers get consistent snapshots while a
/// turn runs.
class SessionExecutor {
public:
    explicit SessionExecutor(SessionState initial);

    /// Throws Error{kConflict} when a turn is already running.
    TurnOutcome post(Agent& agent, std::string_view text, const AgentObserver& observer = {});
    SessionState snapshot() const;
    bool running() const;

private:
    mutable std::mutex state_mutex_;
    std::mutex turn_mutex_;
    SessionState state_;
    bool running_ = false;
};

}  // namespace lexagent
