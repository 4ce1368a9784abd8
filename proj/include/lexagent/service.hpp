#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/agent.hpp"
#include "lexagent/journal.hpp"

namespace httplib {
class Server;
}

namespace lexagent {

struct ProgressEvent {
    std::uint64_t id = 0;  // increasing per session; the SSE event id
    AgentEventType event = AgentEventType::kThinking;
    std::optional<ToolName> tool;
    std::string detail;
    int turn = 0;
    nlohmann::json payload;  // answer or clarification on terminal events

    bool terminal() const;
};

void to_json(nlohmann::json& j, const ProgressEvent& e);

/// Checks one turn's events against
///   thinking (tool_started tool_finished)* (answer_ready | clarification_needed | error)
/// with matching tool names in each started/finished pair.
bool valid_event_sequence(const std::vector<ProgressEvent>& events);

struct CaseQuery {
    QueryVector qv;
    std::string text;  // optional free text used to rank more than five matches
};

/// Parses /cases parameters. Throws Error{kInvalidArgument} when none is given
/// and Error{kInvalidValue} for values outside the vocabularies.
CaseQuery parse_case_query(const std::multimap<std::string, std::string>& params, const Vocabularies& vocab);

class ResearchService {
public:
    /// Loads journaled sessions. Throws Error{kStorageUnavailable}.
    ResearchService(Agent& agent, const CaseStore& cases, const TitleIndex& titles, EmbeddingProvider& embed,
                    const Vocabularies& vocab, std::filesystem::path journal_dir);
    ~ResearchService();

    ResearchService(const ResearchService&) = delete;
    ResearchService& operator=(const ResearchService&) = delete;

    /// Throws Error{kStorageUnavailable}.
    ApiSession create_session();
    std::optional<ApiSession> session(const std::string& id) const;

    /// Starts a turn in the background and returns its number.
    /// Throws Error{kNotFound}, Error{kConflict}, Error{kInvalidArgument}.
    int post_message(const std::string& id, const std::string& text);

    /// Events with id > after_id, for `turn` when given. Blocks up to `wait`
    /// for at least one event.
    std::vector<ProgressEvent> events(const std::string& id, std::uint64_t after_id, std::optional<int> turn,
                                      std::chrono::milliseconds wait) const;
    int current_turn(const std::string& id) const;

    /// Throws Error{kNotFound}.
    nlohmann::json history(const std::string& id) const;

    std::vector<CaseRecord> search_cases(const CaseQuery& query) const;

    /// Blocks until no turn of the session is running.
    void wait_idle(const std::string& id) const;

    void mount(httplib::Server& server);

private:
    struct Entry {
        ApiSession api;
        std::unique_ptr<SessionExecutor> executor;
        std::vector<ProgressEvent> events;
        std::uint64_t next_event_id = 1;
        bool busy = false;
    };

    Entry& entry(const std::string& id);
    const Entry& entry(const std::string& id) const;
    void run_turn(std::string id, std::string text, int turn);
    void push_event(const std::string& id, ProgressEvent e);

    Agent& agent_;
    const CaseStore& cases_;
    const TitleIndex& titles_;
    EmbeddingProvider& embed_;
    const Vocabularies& vocab_;
    SessionJournal journal_;

    mutable std::mutex mutex_;
    mutable std::condition_variable changed_;
    std::map<std::string, std::unique_ptr<Entry>> sessions_;
    std::vector<std::thread> workers_;
};

/// HTTP status for an error code.
int http_status(ErrorCode code);

}  // namespace lexagent
