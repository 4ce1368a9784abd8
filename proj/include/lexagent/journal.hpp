#pragma once

#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "lexagent/agent.hpp"

namespace lexagent {

struct ApiSession {
    std::string session_id;
    std::string created_at;  // ISO-8601 UTC
    SessionStatus status = SessionStatus::kIdle;
    int turns = 0;

    bool operator==(const ApiSession&) const = default;
};

void to_json(nlohmann::json& j, const ApiSession& s);
void from_json(const nlohmann::json& j, ApiSession& s);

struct JournaledSession {
    ApiSession api;
    SessionState state;
};

/// Append-only journal, one line-delimited file per session. Every write is a
/// full snapshot record; loading takes the last complete one, so a torn
/// trailing line from a crash is ignored.
class SessionJournal {
public:
    /// Throws Error{kStorageUnavailable} when the directory cannot be created.
    explicit SessionJournal(std::filesystem::path dir);

    /// Throws Error{kStorageUnavailable}.
    void append(const ApiSession& api, const SessionState& state);
    std::optional<JournaledSession> load(const std::string& session_id) const;
    std::vector<JournaledSession> load_all() const;

    std::filesystem::path file_for(const std::string& session_id) const;
    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    mutable std::mutex mutex_;
};

std::string utc_now_iso();

}  // namespace lexagent
