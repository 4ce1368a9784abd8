#include "lexagent/journal.hpp"

#include <chrono>
#include <ctime>
#include <fstream>

#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"

namespace lexagent {

namespace fs = std::filesystem;

void to_json(nlohmann::json& j, const ApiSession& s) {
    j = nlohmann::json{{"session_id", s.session_id},
                       {"created_at", s.created_at},
                       {"status", to_string(s.status)},
                       {"turns", s.turns}};
}

void from_json(const nlohmann::json& j, ApiSession& s) {
    s.session_id = j.at("session_id").get<std::string>();
    s.created_at = j.value("created_at", std::string{});
    s.status = parse_session_status(j.value("status", std::string("idle")));
    s.turns = j.value("turns", 0);
}

std::string utc_now_iso() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

SessionJournal::SessionJournal(fs::path dir) : dir_(std::move(dir)) {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec || !fs::is_directory(dir_)) {
        throw Error(ErrorCode::kStorageUnavailable, "cannot use journal directory " + dir_.string());
    }
}

fs::path SessionJournal::file_for(const std::string& session_id) const {
    return dir_ / (session_id + ".jsonl");
}

void SessionJournal::append(const ApiSession& api, const SessionState& state) {
    nlohmann::json record{{"type", "snapshot"}, {"at", utc_now_iso()}, {"session", api}, {"state", state}};
    auto line = record.dump() + "\n";
    std::lock_guard lock(mutex_);
    std::ofstream out(file_for(api.session_id), std::ios::app | std::ios::binary);
    if (!out) throw Error(ErrorCode::kStorageUnavailable, "cannot open journal for " + api.session_id);
    out << line;
    out.flush();
    if (!out) throw Error(ErrorCode::kStorageUnavailable, "cannot write journal for " + api.session_id);
}

std::optional<JournaledSession> SessionJournal::load(const std::string& session_id) const {
    std::lock_guard lock(mutex_);
    std::ifstream in(file_for(session_id), std::ios::binary);
    if (!in) return std::nullopt;
    std::optional<JournaledSession> last;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || j.value("type", std::string{}) != "snapshot") continue;
        try {
            last = JournaledSession{j.at("session").get<ApiSession>(), j.at("state").get<SessionState>()};
        } catch (const std::exception& e) {
            spdlog::warn("journal {}: skipping bad record ({})", session_id, e.what());
        }
    }
    return last;
}

std::vector<JournaledSession> SessionJournal::load_all() const {
    std::vector<std::string> ids;
    std::error_code ec;
    for (const auto& entry : fs::directory_iterator(dir_, ec)) {
        if (entry.path().extension() == ".jsonl") ids.push_back(entry.path().stem().string());
    }
    std::sort(ids.begin(), ids.end());
    std::vector<JournaledSession> out;
    for (const auto& id : ids) {
        if (auto s = load(id)) out.push_back(std::move(*s));
    }
    return out;
}

}  // namespace lexagent
