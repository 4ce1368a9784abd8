#include "lexagent/service.hpp"

#include <random>

#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/search.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::string new_session_id() {
    static std::mutex m;
    static std::mt19937_64 rng{std::random_device{}()};
    std::lock_guard lock(m);
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(rng()));
    return buf;
}

void send_error(httplib::Response& res, int status, std::string_view code, std::string_view message) {
    res.status = status;
    res.set_content(nlohmann::json{{"error", code}, {"message", message}}.dump(), "application/json");
}

void send_error(httplib::Response& res, const Error& e) {
    send_error(res, http_status(e.code()), to_string(e.code()), e.what());
}

void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

std::string sse_frame(const ProgressEvent& e) {
    nlohmann::json j = e;
    return "id: " + std::to_string(e.id) + "\nevent: " + to_string(e.event) + "\ndata: " + j.dump() + "\n\n";
}

}  // namespace

bool ProgressEvent::terminal() const {
    return event == AgentEventType::kAnswerReady || event == AgentEventType::kClarificationNeeded ||
           event == AgentEventType::kError;
}

void to_json(nlohmann::json& j, const ProgressEvent& e) {
    j = nlohmann::json{{"id", e.id},
                       {"event", to_string(e.event)},
                       {"tool", e.tool ? nlohmann::json(to_string(*e.tool)) : nlohmann::json(nullptr)},
                       {"detail", e.detail},
                       {"turn", e.turn}};
    if (!e.payload.is_null()) {
        for (auto it = e.payload.begin(); it != e.payload.end(); ++it) j[it.key()] = it.value();
    }
}

bool valid_event_sequence(const std::vector<ProgressEvent>& events) {
    if (events.size() < 2 || events.front().event != AgentEventType::kThinking) return false;
    std::optional<ToolName> open;
    for (std::size_t i = 1; i < events.size(); ++i) {
        const auto& e = events[i];
        bool last = i + 1 == events.size();
        if (e.turn != events.front().turn) return false;
        switch (e.event) {
            case AgentEventType::kThinking: return false;
            case AgentEventType::kToolStarted:
                if (open || !e.tool || last) return false;
                open = e.tool;
                break;
            case AgentEventType::kToolFinished:
                if (!open || e.tool != open || last) return false;
                open.reset();
                break;
            default:
                if (!last || open) return false;
        }
    }
    return events.back().terminal();
}

int http_status(ErrorCode code) {
    switch (code) {
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kInvalidValue:
        case ErrorCode::kUnknownViolation:
        case ErrorCode::kEmptyQueryVector: return 422;
        case ErrorCode::kNotFound: return 404;
        case ErrorCode::kConflict: return 409;
        case ErrorCode::kStorageUnavailable:
        case ErrorCode::kStoreUnavailable:
        case ErrorCode::kProviderUnavailable:
        case ErrorCode::kProviderTimeout: return 503;
        default: return 500;
    }
}

CaseQuery parse_case_query(const std::multimap<std::string, std::string>& params, const Vocabularies& vocab) {
    nlohmann::json j = nlohmann::json::object();
    std::vector<std::string> companies;
    CaseQuery q;
    for (const auto& [key, raw] : params) {
        auto value = trim(raw);
        if (value.empty()) continue;
        if (key == "companies" || key == "company") {
            for (auto& c : parse_company_list(value)) companies.push_back(std::move(c));
        } else if (key == "case_id" || key == "case_title" || key == "jurisdiction" || key == "violation" ||
                   key == "sector") {
            j[key] = value;
        } else if (key == "q") {
            q.text = value;
        }
    }
    if (!companies.empty()) j["companies"] = companies;
    std::vector<std::string> dropped;
    q.qv = query_vector_from_json(j, vocab, &dropped);
    if (!dropped.empty()) throw Error(ErrorCode::kInvalidValue, "unsupported value for " + dropped.front());
    if (q.qv.is_empty()) throw Error(ErrorCode::kInvalidArgument, "at least one search parameter is required");
    return q;
}

// ---------------------------------------------------------------------------

ResearchService::ResearchService(Agent& agent, const CaseStore& cases, const TitleIndex& titles,
                                 EmbeddingProvider& embed, const Vocabularies& vocab, std::filesystem::path journal_dir)
    : agent_(agent), cases_(cases), titles_(titles), embed_(embed), vocab_(vocab), journal_(std::move(journal_dir)) {
    for (auto& s : journal_.load_all()) {
        auto e = std::make_unique<Entry>();
        if (s.state.status == SessionStatus::kRunning) s.state.status = SessionStatus::kIdle;  // interrupted turn
        s.api.status = s.state.status;
        e->api = s.api;
        e->executor = std::make_unique<SessionExecutor>(std::move(s.state));
        sessions_.emplace(e->api.session_id, std::move(e));
    }
    if (!sessions_.empty()) spdlog::info("restored {} session(s) from {}", sessions_.size(), journal_.dir().string());
}

ResearchService::~ResearchService() {
    std::vector<std::thread> workers;
    {
        std::lock_guard lock(mutex_);
        workers.swap(workers_);
    }
    for (auto& t : workers) {
        if (t.joinable()) t.join();
    }
}

ResearchService::Entry& ResearchService::entry(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "unknown session " + id);
    return *it->second;
}

const ResearchService::Entry& ResearchService::entry(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::kNotFound, "unknown session " + id);
    return *it->second;
}

ApiSession ResearchService::create_session() {
    ApiSession api{new_session_id(), utc_now_iso(), SessionStatus::kIdle, 0};
    SessionState state;
    state.session_id = api.session_id;
    journal_.append(api, state);
    auto e = std::make_unique<Entry>();
    e->api = api;
    e->executor = std::make_unique<SessionExecutor>(std::move(state));
    std::lock_guard lock(mutex_);
    sessions_.emplace(api.session_id, std::move(e));
    return api;
}

std::optional<ApiSession> ResearchService::session(const std::string& id) const {
    std::lock_guard lock(mutex_);
    auto it = sessions_.find(id);
    if (it == sessions_.end()) return std::nullopt;
    return it->second->api;
}

int ResearchService::post_message(const std::string& id, const std::string& text) {
    std::lock_guard lock(mutex_);
    auto& e = entry(id);
    if (trim(text).empty()) throw Error(ErrorCode::kInvalidArgument, "message text is empty");
    if (e.busy) throw Error(ErrorCode::kConflict, "a turn is already running for " + id);
    e.busy = true;
    int turn = ++e.api.turns;
    e.api.status = SessionStatus::kRunning;
    workers_.emplace_back(&ResearchService::run_turn, this, id, text, turn);
    return turn;
}

void ResearchService::push_event(const std::string& id, ProgressEvent e) {
    {
        std::lock_guard lock(mutex_);
        auto& s = entry(id);
        e.id = s.next_event_id++;
        s.events.push_back(std::move(e));
    }
    changed_.notify_all();
}

void ResearchService::run_turn(std::string id, std::string text, int turn) {
    SessionExecutor* executor;
    {
        std::lock_guard lock(mutex_);
        executor = entry(id).executor.get();
    }
    AgentObserver observer = [&](const AgentEvent& ev) {
        if (ev.type == AgentEventType::kAnswerReady || ev.type == AgentEventType::kClarificationNeeded ||
            ev.type == AgentEventType::kError) {
            return;  // sent below, with its payload, once the session is persisted
        }
        push_event(id, ProgressEvent{0, ev.type, ev.tool, ev.detail, turn, nullptr});
    };
    ProgressEvent last{0, AgentEventType::kError, std::nullopt, "", turn, nullptr};
    bool saw_thinking = false;
    AgentObserver tracking = [&](const AgentEvent& ev) {
        if (ev.type == AgentEventType::kThinking) saw_thinking = true;
        observer(ev);
    };
    try {
        auto outcome = executor->post(agent_, text, tracking);
        switch (outcome.kind) {
            case TurnOutcome::Kind::kAnswer:
                last.event = AgentEventType::kAnswerReady;
                last.detail = outcome.answer ? outcome.answer->text : "";
                last.payload = {{"answer", outcome.answer ? nlohmann::json(*outcome.answer) : nlohmann::json(nullptr)}};
                break;
            case TurnOutcome::Kind::kClarification:
                last.event = AgentEventType::kClarificationNeeded;
                last.detail = outcome.clarification;
                last.payload = {{"clarification", outcome.clarification}};
                break;
            case TurnOutcome::Kind::kError: last.detail = outcome.error; break;
        }
    } catch (const std::exception& ex) {
        spdlog::error("session {} turn {} failed: {}", id, turn, ex.what());
        last.detail = ex.what();
    }
    if (!saw_thinking) push_event(id, ProgressEvent{0, AgentEventType::kThinking, std::nullopt, "", turn, nullptr});

    auto snapshot = executor->snapshot();
    ApiSession api;
    {
        std::lock_guard lock(mutex_);
        auto& e = entry(id);
        e.api.status = snapshot.status;
        api = e.api;
    }
    try {
        journal_.append(api, snapshot);
    } catch (const Error& ex) {
        spdlog::error("session {}: {}", id, ex.what());
    }
    push_event(id, std::move(last));
    {
        std::lock_guard lock(mutex_);
        entry(id).busy = false;
    }
    changed_.notify_all();
}

std::vector<ProgressEvent> ResearchService::events(const std::string& id, std::uint64_t after_id,
                                                   std::optional<int> turn, std::chrono::milliseconds wait) const {
    std::unique_lock lock(mutex_);
    auto collect = [&] {
        std::vector<ProgressEvent> out;
        for (const auto& e : entry(id).events) {
            if (e.id > after_id && (!turn || e.turn == *turn)) out.push_back(e);
        }
        return out;
    };
    auto out = collect();
    if (out.empty() && wait.count() > 0) {
        changed_.wait_for(lock, wait, [&] {
            out = collect();
            return !out.empty();
        });
    }
    return out;
}

int ResearchService::current_turn(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return entry(id).api.turns;
}

nlohmann::json ResearchService::history(const std::string& id) const {
    SessionExecutor* executor;
    ApiSession api;
    {
        std::lock_guard lock(mutex_);
        const auto& e = entry(id);
        executor = e.executor.get();
        api = e.api;
    }
    auto state = executor->snapshot();
    return {{"session_id", id},
            {"status", to_string(api.status)},
            {"turns", api.turns},
            {"history", state.chat_history},
            {"session_cases", state.session_cases}};
}

std::vector<CaseRecord> ResearchService::search_cases(const CaseQuery& query) const {
    return database_search(query.qv, query.text, cases_, titles_, embed_).cases;
}

void ResearchService::wait_idle(const std::string& id) const {
    std::unique_lock lock(mutex_);
    changed_.wait(lock, [&] { return !entry(id).busy; });
}

void ResearchService::mount(httplib::Server& server) {
    server.Post("/sessions", [this](const httplib::Request&, httplib::Response& res) {
        try {
            send_json(res, 200, create_session());
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    server.Post(R"(/sessions/([^/]+)/messages)", [this](const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        auto body = nlohmann::json::parse(req.body, nullptr, false);
        if (body.is_discarded() || !body.is_object()) {
            send_error(res, 400, "bad_request", "body must be a JSON object with a \"text\" field");
            return;
        }
        std::string text;
        for (const char* key : {"text", "message", "content"}) {
            if (body.contains(key) && body.at(key).is_string()) {
                text = body.at(key).get<std::string>();
                break;
            }
        }
        try {
            int turn = post_message(id, text);
            send_json(res, 202, {{"session_id", id},
                                 {"turn", turn},
                                 {"events", "/sessions/" + id + "/events?turn=" + std::to_string(turn)}});
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    server.Get(R"(/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
        std::string id = req.matches[1];
        if (!session(id)) {
            send_error(res, 404, "not_found", "unknown session " + id);
            return;
        }
        std::uint64_t after = 0;
        bool resumed = false;
        auto header = req.get_header_value("Last-Event-ID");
        if (header.empty() && req.has_param("last_event_id")) header = req.get_param_value("last_event_id");
        if (!header.empty()) {
            try {
                after = std::stoull(header);
                resumed = true;
            } catch (const std::exception&) {
                send_error(res, 422, "invalid_argument", "Last-Event-ID must be a number");
                return;
            }
        }
        std::optional<int> turn;
        if (req.has_param("turn")) {
            try {
                turn = std::stoi(req.get_param_value("turn"));
            } catch (const std::exception&) {
                send_error(res, 422, "invalid_argument", "turn must be a number");
                return;
            }
        } else if (!resumed) {
            turn = current_turn(id);
        }
        if (turn && *turn == 0) {
            res.status = 204;
            return;
        }
        struct Cursor {
            std::uint64_t after;
            bool done = false;
        };
        auto cursor = std::make_shared<Cursor>(Cursor{after});
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider("text/event-stream", [this, id, turn, cursor](std::size_t,
                                                                                       httplib::DataSink& sink) {
            if (cursor->done) {
                sink.done();
                return true;
            }
            auto batch = events(id, cursor->after, turn, std::chrono::seconds(15));
            if (batch.empty()) {
                static const std::string keepalive = ": keepalive\n\n";
                return sink.write(keepalive.data(), keepalive.size());
            }
            for (const auto& e : batch) {
                auto frame = sse_frame(e);
                if (!sink.write(frame.data(), frame.size())) return false;
                cursor->after = e.id;
                if (e.terminal()) {
                    cursor->done = true;
                    break;
                }
            }
            if (cursor->done) sink.done();
            return true;
        });
    });

    server.Get(R"(/sessions/([^/]+)/history)", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            send_json(res, 200, history(req.matches[1]));
        } catch (const Error& e) {
            send_error(res, e);
        }
    });

    server.Get("/cases", [this](const httplib::Request& req, httplib::Response& res) {
        try {
            std::multimap<std::string, std::string> params(req.params.begin(), req.params.end());
            auto cases = search_cases(parse_case_query(params, vocab_));
            send_json(res, 200, {{"cases", cases}});
        } catch (const Error& e) {
            send_error(res, e);
        }
    });
}

}  // namespace lexagent
