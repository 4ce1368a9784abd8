#include "lexagent/agent.hpp"

#include <algorithm>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

constexpr std::pair<ToolName, const char*> kToolNames[] = {
    {ToolName::kDatabaseSearch, "database_search"},
    {ToolName::kWebSearch, "web_search"},
    {ToolName::kAnswerCase, "answer_case"},
    {ToolName::kAnswerTheoretical, "answer_theoretical"},
    {ToolName::kAskClarification, "ask_clarification"},
};

bool is_provider_failure(const Error& e) {
    return e.code() == ErrorCode::kProviderUnavailable || e.code() == ErrorCode::kProviderTimeout;
}

std::string case_line(const CaseRecord& c) {
    std::string out = c.case_id + " – " + c.case_title;
    std::vector<std::string> meta;
    if (c.jurisdiction) meta.emplace_back(to_string(*c.jurisdiction));
    if (c.violation) meta.push_back(*c.violation);
    if (c.decision_date) meta.push_back(c.decision_date->iso());
    if (!meta.empty()) {
        out += " (";
        for (std::size_t i = 0; i < meta.size(); ++i) out += (i ? ", " : "") + meta[i];
        out += ")";
    }
    return out;
}

std::string first_tokens(std::string_view text, std::size_t n) {
    auto tokens = tokenize(text);
    if (tokens.size() <= n) return std::string(text);
    return std::string(text.substr(0, tokens[n - 1].end)) + " …";
}

std::string describe_filters(const QueryVector& qv) {
    auto j = to_json(qv);
    nlohmann::json present = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!it.value().is_null()) present[it.key()] = it.value();
    }
    return present.dump();
}

std::optional<std::string> string_arg(const nlohmann::json& args, const char* key) {
    if (args.is_object() && args.contains(key) && args.at(key).is_string()) {
        auto v = trim(args.at(key).get<std::string>());
        if (!v.empty()) return v;
    }
    return std::nullopt;
}

bool has_filter_args(const nlohmann::json& args) {
    if (!args.is_object()) return false;
    for (const char* k : {"case_id", "case_title", "jurisdiction", "violation", "sector", "companies"}) {
        if (args.contains(k) && !args.at(k).is_null()) return true;
    }
    return false;
}

struct Decision {
    std::string thought;
    std::optional<ToolAction> action;
    std::optional<std::string> final_text;
};

std::optional<Decision> parse_decision(std::string_view reply) {
    auto j = extract_json_object(reply);
    if (!j) return std::nullopt;
    Decision d;
    if (j->contains("thought") && j->at("thought").is_string()) d.thought = j->at("thought").get<std::string>();
    if (j->contains("final") && j->at("final").is_string()) {
        d.final_text = j->at("final").get<std::string>();
        return d;
    }
    if (!j->contains("action")) return std::nullopt;
    const auto& a = j->at("action");
    std::string name;
    nlohmann::json args = nlohmann::json::object();
    if (a.is_object()) {
        name = a.value("tool", a.value("name", std::string{}));
        if (a.contains("arguments")) args = a.at("arguments");
        else if (a.contains("args")) args = a.at("args");
    } else if (a.is_string()) {
        name = a.get<std::string>();
        if (j->contains("action_input")) args = j->at("action_input");
    }
    if (!args.is_object()) args = nlohmann::json::object();
    auto tool = try_parse_tool(name);
    if (!tool) return std::nullopt;
    d.action = ToolAction{*tool, std::move(args)};
    return d;
}

int ordinal_index(const std::string& word) {
    static const std::map<std::string, int> table{{"first", 0},  {"1st", 0},   {"second", 1}, {"2nd", 1},
                                                  {"third", 2},  {"3rd", 2},   {"fourth", 3}, {"4th", 3},
                                                  {"fifth", 4},  {"5th", 4},   {"last", -1},  {"latest", -1}};
    auto it = table.find(word);
    return it == table.end() ? -2 : it->second;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(ToolName t) {
    for (const auto& [tool, name] : kToolNames) {
        if (tool == t) return name;
    }
    return "unknown";
}

std::optional<ToolName> try_parse_tool(std::string_view name) {
    auto n = to_lower_ascii(trim(name));
    for (const auto& [tool, text] : kToolNames) {
        if (n == text) return tool;
    }
    return std::nullopt;
}

ToolName parse_tool(std::string_view name) {
    auto t = try_parse_tool(name);
    if (!t) throw Error(ErrorCode::kInvalidValue, "unknown tool '" + std::string(name) + "'");
    return *t;
}

std::string to_string(SessionStatus s) {
    switch (s) {
        case SessionStatus::kIdle: return "idle";
        case SessionStatus::kRunning: return "running";
        case SessionStatus::kAwaitingClarification: return "awaiting_clarification";
    }
    return "idle";
}

SessionStatus parse_session_status(std::string_view s) {
    if (s == "idle") return SessionStatus::kIdle;
    if (s == "running") return SessionStatus::kRunning;
    if (s == "awaiting_clarification") return SessionStatus::kAwaitingClarification;
    throw Error(ErrorCode::kInvalidValue, "unknown session status '" + std::string(s) + "'");
}

std::string to_string(EntryKind k) {
    switch (k) {
        case EntryKind::kMessage: return "message";
        case EntryKind::kAnswer: return "answer";
        case EntryKind::kClarification: return "clarification";
        case EntryKind::kError: return "error";
    }
    return "message";
}

EntryKind parse_entry_kind(std::string_view s) {
    if (s == "message") return EntryKind::kMessage;
    if (s == "answer") return EntryKind::kAnswer;
    if (s == "clarification") return EntryKind::kClarification;
    if (s == "error") return EntryKind::kError;
    throw Error(ErrorCode::kInvalidValue, "unknown history entry kind '" + std::string(s) + "'");
}

std::string to_string(AgentEventType t) {
    switch (t) {
        case AgentEventType::kThinking: return "thinking";
        case AgentEventType::kToolStarted: return "tool_started";
        case AgentEventType::kToolFinished: return "tool_finished";
        case AgentEventType::kAnswerReady: return "answer_ready";
        case AgentEventType::kClarificationNeeded: return "clarification_needed";
        case AgentEventType::kError: return "error";
    }
    return "error";
}

void to_json(nlohmann::json& j, const ReactStep& s) {
    j = nlohmann::json{{"thought", s.thought},
                       {"action", {{"tool", to_string(s.action.tool)}, {"arguments", s.action.arguments}}},
                       {"observation", s.observation}};
    if (s.forced) j["forced"] = true;
}

void from_json(const nlohmann::json& j, ReactStep& s) {
    s = ReactStep{};
    s.thought = j.value("thought", std::string{});
    s.action.tool = parse_tool(j.at("action").at("tool").get<std::string>());
    s.action.arguments = j.at("action").value("arguments", nlohmann::json::object());
    s.observation = j.value("observation", std::string{});
    s.forced = j.value("forced", false);
}

void to_json(nlohmann::json& j, const HistoryEntry& e) {
    j = nlohmann::json{{"role", e.role}, {"content", e.content}, {"kind", to_string(e.kind)}};
    if (e.answer) j["answer"] = *e.answer;
    if (e.role == "assistant") j["trace"] = e.trace;
}

void from_json(const nlohmann::json& j, HistoryEntry& e) {
    e = HistoryEntry{};
    e.role = j.at("role").get<std::string>();
    e.content = j.value("content", std::string{});
    e.kind = parse_entry_kind(j.value("kind", std::string("message")));
    if (j.contains("answer") && !j.at("answer").is_null()) e.answer = j.at("answer").get<CitedAnswer>();
    if (j.contains("trace")) e.trace = j.at("trace").get<std::vector<ReactStep>>();
}

void to_json(nlohmann::json& j, const SessionState& s) {
    j = nlohmann::json{{"session_id", s.session_id},
                       {"chat_history", s.chat_history},
                       {"scratchpad", s.scratchpad},
                       {"session_cases", s.session_cases},
                       {"status", to_string(s.status)}};
    if (s.active_case) {
        nlohmann::json chunks = nlohmann::json::array();
        for (const auto& c : s.active_case->chunks) chunks.push_back(c.chunk_id);
        j["active_case"] = {{"case_id", s.active_case->case_id}, {"chunk_ids", chunks}};
    } else {
        j["active_case"] = nullptr;
    }
    j["pending_question"] = s.pending_question ? nlohmann::json(*s.pending_question) : nlohmann::json(nullptr);
}

void from_json(const nlohmann::json& j, SessionState& s) {
    s = SessionState{};
    s.session_id = j.at("session_id").get<std::string>();
    s.chat_history = j.value("chat_history", std::vector<HistoryEntry>{});
    s.scratchpad = j.value("scratchpad", std::vector<ReactStep>{});
    s.session_cases = j.value("session_cases", std::vector<CaseRecord>{});
    s.status = parse_session_status(j.value("status", std::string("idle")));
    // Chunks are reloaded from the store on the next answer; only the id persists.
    if (j.contains("active_case") && j.at("active_case").is_object()) {
        s.active_case = ActiveCase{j.at("active_case").at("case_id").get<std::string>(), {}};
    }
    if (j.contains("pending_question") && j.at("pending_question").is_string()) {
        s.pending_question = j.at("pending_question").get<std::string>();
    }
}

bool SessionState::add_case(const CaseRecord& c) {
    if (find_case(c.case_id)) return false;
    session_cases.push_back(c);
    return true;
}

const CaseRecord* SessionState::find_case(std::string_view case_id) const {
    for (const auto& c : session_cases) {
        if (c.case_id == case_id) return &c;
    }
    return nullptr;
}

std::vector<ChatMessage> SessionState::messages() const {
    std::vector<ChatMessage> out;
    out.reserve(chat_history.size());
    for (const auto& e : chat_history) out.push_back({e.role, e.content});
    return out;
}

std::vector<ToolName> TurnOutcome::tool_sequence() const {
    std::vector<ToolName> out;
    for (const auto& s : steps) out.push_back(s.action.tool);
    return out;
}

// ---------------------------------------------------------------------------
// Case references

std::vector<std::string> find_case_ids(std::string_view text) {
    static const std::regex pattern(R"(\b(?:(?:AT|M|SA|IV)\.\d{2,6}|COMP/[A-Z]?\.?\d?/?\d{3,6}|[A-Z]\d{1,2}-\d{1,4}[-/]\d{2})\b)");
    std::string s(text);
    std::vector<std::string> out;
    for (auto it = std::sregex_iterator(s.begin(), s.end(), pattern); it != std::sregex_iterator(); ++it) {
        auto id = it->str();
        if (id.size() > 3 && std::isalpha(static_cast<unsigned char>(id[0])) &&
            std::isdigit(static_cast<unsigned char>(id[1]))) {
            std::replace(id.begin(), id.end(), '/', '-');  // German file numbers: B1-23/20 is B1-23-20
        }
        if (std::find(out.begin(), out.end(), id) == out.end()) out.push_back(std::move(id));
    }
    return out;
}

CaseReference resolve_case_reference(std::string_view question, const std::vector<CaseRecord>& session_cases) {
    auto lower = to_lower_ascii(question);

    // Explicit identifiers: session ids matched literally, then id-shaped tokens.
    std::size_t best_pos = std::string::npos;
    std::string best;
    for (const auto& c : session_cases) {
        if (c.case_id.empty()) continue;
        auto pos = lower.find(to_lower_ascii(c.case_id));
        if (pos != std::string::npos && pos < best_pos) {
            best_pos = pos;
            best = c.case_id;
        }
    }
    for (const auto& id : find_case_ids(question)) {
        auto pos = lower.find(to_lower_ascii(id));
        if (pos == std::string::npos) pos = 0;
        if (best.empty() || pos < best_pos) {
            best_pos = pos;
            best = id;
        }
        break;
    }
    if (!best.empty()) return CaseReference::to(best);

    // Ordinals: "the second case", "the last one", or a bare "second".
    static const std::regex ordinal_phrase(
        R"(\b(first|second|third|fourth|fifth|last|latest|1st|2nd|3rd|4th|5th)\s+(?:case|one|decision)\b)");
    static const std::regex ordinal_only(
        R"(^\s*(?:the\s+)?(first|second|third|fourth|fifth|last|latest|1st|2nd|3rd|4th|5th)(?:\s+(?:one|case|decision))?(?:\s+please)?\s*[.!?]*\s*$)");
    std::smatch m;
    if (std::regex_search(lower, m, ordinal_phrase) || std::regex_match(lower, m, ordinal_only)) {
        if (session_cases.empty()) return CaseReference::none();
        int idx = ordinal_index(m[1].str());
        if (idx == -1) return CaseReference::to(session_cases.back().case_id);
        if (idx >= 0 && static_cast<std::size_t>(idx) < session_cases.size()) {
            return CaseReference::to(session_cases[static_cast<std::size_t>(idx)].case_id);
        }
        return CaseReference::ambiguous();
    }

    static const std::regex definite(R"(\b(?:the|this|that)\s+(?:case|decision)\b)");
    if (std::regex_search(lower, definite)) {
        if (session_cases.size() == 1) return CaseReference::to(session_cases.front().case_id);
        if (session_cases.size() >= 2) return CaseReference::ambiguous();
    }
    return CaseReference::none();
}

bool looks_like_new_question(std::string_view reply, const std::vector<CaseRecord>& session_cases) {
    auto r = trim(reply);
    if (r.empty()) return false;
    if (resolve_case_reference(r, session_cases).kind != CaseReference::Kind::kNone) return false;
    std::size_t words = 0;
    for (const auto& w : split(r, ' ')) words += trim(w).empty() ? 0 : 1;
    if (words < 4) return false;
    if (r.back() == '?') return true;
    static const char* starters[] = {"what", "which", "how", "why", "when", "who", "is ", "are ", "does", "do ",
                                     "can ", "could", "explain", "tell me", "list", "find", "show"};
    auto lower = to_lower_ascii(r);
    return std::any_of(std::begin(starters), std::end(starters),
                       [&](const char* s) { return lower.rfind(s, 0) == 0; });
}

// ---------------------------------------------------------------------------
// Prompt

std::string describe_tools() {
    return "- database_search: find cases in the case database. Arguments: {\"question\": text} and optionally "
           "filters case_id, case_title, jurisdiction, violation, sector, companies.\n"
           "- web_search: find a case on the web, verified against the official authority sites. Only after "
           "database_search found nothing. Arguments: {\"question\": text}.\n"
           "- answer_case: answer a question about one case from its decision text. Arguments: {\"case_id\": id, "
           "\"question\": text}.\n"
           "- answer_theoretical: answer a general competition-law question from official sources. Arguments: "
           "{\"question\": text}.\n"
           "- ask_clarification: ask the user one question when the request is ambiguous. Arguments: {}.";
}

std::string render_step(const ReactStep& s, std::size_t index) {
    return "Step " + std::to_string(index) + "\nThought: " + s.thought + "\nAction: " + to_string(s.action.tool) +
           " " + s.action.arguments.dump() + "\nObservation: " + s.observation;
}

std::string summarize_step(const ReactStep& s, std::size_t index, std::size_t observation_tokens) {
    return "Step " + std::to_string(index) + " (summary): " + to_string(s.action.tool) + " -> " +
           first_tokens(s.observation, observation_tokens);
}

std::vector<ChatMessage> build_agent_prompt(const SessionState& session, const std::string& system_template,
                                            const std::string& tools_description, const PromptBudget& budget) {
    std::vector<ChatMessage> out;
    out.push_back({"system", fill_template(system_template, {{"tools", tools_description}})});

    std::string cases;
    for (std::size_t i = 0; i < session.session_cases.size(); ++i) {
        cases += std::to_string(i + 1) + ". " + case_line(session.session_cases[i]) + "\n";
    }
    const auto& pad = session.scratchpad;
    std::vector<std::string> steps;
    for (std::size_t i = 0; i < pad.size(); ++i) steps.push_back(render_step(pad[i], i + 1));

    auto context_text = [&] {
        std::string ctx;
        if (!cases.empty()) ctx += "Session cases (in the order they were found):\n" + cases;
        if (!steps.empty()) {
            if (!ctx.empty()) ctx += "\n";
            ctx += "Scratchpad:\n";
            for (const auto& s : steps) ctx += s + "\n";
        }
        return ctx;
    };

    std::size_t fixed = count_tokens(out.front().content);
    std::vector<std::size_t> history_tokens;
    std::size_t history_total = 0;
    for (const auto& e : session.chat_history) {
        history_tokens.push_back(count_tokens(e.content));
        history_total += history_tokens.back();
    }
    std::size_t ctx_tokens = count_tokens(context_text());

    // Oldest steps first; the newest stays verbatim.
    for (std::size_t i = 0; i + 1 < steps.size() && fixed + ctx_tokens + history_total > budget.max_tokens; ++i) {
        auto before = count_tokens(steps[i]);
        steps[i] = summarize_step(pad[i], i + 1, budget.summary_tokens);
        auto after = count_tokens(steps[i]);
        ctx_tokens = ctx_tokens - before + after;
    }
    std::size_t first_history = 0;
    while (fixed + ctx_tokens + history_total > budget.max_tokens && first_history + 1 < session.chat_history.size()) {
        history_total -= history_tokens[first_history++];
    }

    auto ctx = context_text();
    if (!ctx.empty()) out.push_back({"system", ctx});
    for (std::size_t i = first_history; i < session.chat_history.size(); ++i) {
        out.push_back({session.chat_history[i].role, session.chat_history[i].content});
    }
    return out;
}

// ---------------------------------------------------------------------------
// Agent

AgentPrompts AgentPrompts::from_assets(const Assets& assets) {
    return {assets.prompt("agent_system"), assets.prompt("query_vector"), assets.prompt("web_candidates"),
            assets.prompt("case_qa"),      assets.prompt("theoretical"),  assets.prompt("clarification")};
}

struct Agent::Turn {
    std::string question;        // what the turn answers
    std::string search_text;     // question plus any clarification reply
    std::string reply;           // clarification reply, when resuming
    std::vector<ChatMessage> prior_history;
    std::vector<ReactStep> steps;

    bool db_searched = false;
    bool web_pending = false;  // a database miss obliges web_search next
    std::optional<QueryVector> qv;
    std::vector<CaseRecord> hits;  // cases found by the latest search of this turn
    std::vector<std::string> searches;

    CaseReference reference(const std::vector<CaseRecord>& cases) const {
        if (!reply.empty()) {
            auto r = resolve_case_reference(reply, cases);
            if (r.kind != CaseReference::Kind::kNone) return r;
        }
        return resolve_case_reference(question, cases);
    }
};

Agent::Agent(AgentTools tools, ChatProvider& chat, AgentOptions options)
    : tools_(std::move(tools)), chat_(chat), options_(options), tools_description_(describe_tools()) {
    if (!tools_.cases || !tools_.titles || !tools_.store || !tools_.embed || !tools_.tool_chat || !tools_.research ||
        !tools_.web || !tools_.vocab) {
        throw Error(ErrorCode::kInvalidArgument, "agent tools are incomplete");
    }
    if (options_.max_steps == 0) throw Error(ErrorCode::kInvalidArgument, "max_steps must be positive");
}

TurnOutcome Agent::handle_message(SessionState& session, std::string_view text, const AgentObserver& observer) {
    if (session.status == SessionStatus::kAwaitingClarification) {
        return resume_with_clarification(session, text, observer);
    }
    return run_turn(session, text, observer);
}

TurnOutcome Agent::run_turn(SessionState& session, std::string_view user_message, const AgentObserver& observer) {
    if (session.status == SessionStatus::kRunning) throw Error(ErrorCode::kConflict, "a turn is already running");
    auto text = trim(user_message);
    if (text.empty()) throw Error(ErrorCode::kInvalidArgument, "empty message");
    Turn turn;
    turn.question = text;
    turn.search_text = text;
    turn.prior_history = session.messages();
    session.pending_question.reset();
    session.chat_history.push_back({"user", text, EntryKind::kMessage, std::nullopt, {}});
    return run(session, turn, observer);
}

TurnOutcome Agent::resume_with_clarification(SessionState& session, std::string_view user_reply,
                                             const AgentObserver& observer) {
    if (session.status == SessionStatus::kRunning) throw Error(ErrorCode::kConflict, "a turn is already running");
    if (session.status != SessionStatus::kAwaitingClarification || !session.pending_question ||
        looks_like_new_question(user_reply, session.session_cases)) {
        session.status = SessionStatus::kIdle;
        return run_turn(session, user_reply, observer);
    }
    auto reply = trim(user_reply);
    if (reply.empty()) throw Error(ErrorCode::kInvalidArgument, "empty message");
    Turn turn;
    turn.question = *session.pending_question;
    turn.reply = reply;
    turn.search_text = turn.question + " (" + reply + ")";
    turn.prior_history = session.messages();
    session.chat_history.push_back({"user", reply, EntryKind::kMessage, std::nullopt, {}});
    return run(session, turn, observer);
}

TurnOutcome Agent::run(SessionState& session, Turn& turn, const AgentObserver& observer) {
    auto emit = [&](AgentEventType type, std::optional<ToolName> tool, std::string detail) {
        if (observer) observer(AgentEvent{type, tool, std::move(detail)});
    };
    session.status = SessionStatus::kRunning;
    emit(AgentEventType::kThinking, std::nullopt, "");

    TurnOutcome outcome;
    auto finish = [&](TurnOutcome::Kind kind, std::string text, std::optional<CitedAnswer> answer) -> TurnOutcome {
        outcome.kind = kind;
        outcome.steps = turn.steps;
        HistoryEntry entry{"assistant", text, EntryKind::kAnswer, std::nullopt, turn.steps};
        switch (kind) {
            case TurnOutcome::Kind::kAnswer:
                outcome.answer = answer;
                entry.answer = std::move(answer);
                session.status = SessionStatus::kIdle;
                session.pending_question.reset();
                break;
            case TurnOutcome::Kind::kClarification:
                outcome.clarification = text;
                entry.kind = EntryKind::kClarification;
                session.status = SessionStatus::kAwaitingClarification;
                session.pending_question = turn.question;
                break;
            case TurnOutcome::Kind::kError:
                outcome.error = text;
                entry.kind = EntryKind::kError;
                session.status = SessionStatus::kIdle;
                session.pending_question.reset();
                break;
        }
        session.chat_history.push_back(std::move(entry));
        emit(kind == TurnOutcome::Kind::kAnswer         ? AgentEventType::kAnswerReady
             : kind == TurnOutcome::Kind::kClarification ? AgentEventType::kClarificationNeeded
                                                         : AgentEventType::kError,
             std::nullopt, text);
        return outcome;
    };

    // Legality of a proposed action under the routing rules. Returns the
    // (possibly completed) action when legal, or the reason and a forced
    // replacement when not.
    struct Verdict {
        bool legal = true;
        std::string reason;
        std::optional<ToolAction> action;  // nullopt with legal = true means "final"
    };
    auto validate = [&](const Decision& d) -> Verdict {
        auto fallback_default = [&]() -> ToolAction {
            if (turn.web_pending) return {ToolName::kWebSearch, {{"question", turn.search_text}}};
            return {ToolName::kAskClarification, nlohmann::json::object()};
        };
        if (d.final_text) {
            if (turn.web_pending) {
                return {false, "database_search found nothing, so web_search must run before concluding.",
                        fallback_default()};
            }
            if (turn.steps.empty()) {
                return {false, "No tool has run yet; a final answer needs a tool result to rest on.",
                        fallback_default()};
            }
            return {true, "", std::nullopt};
        }
        auto a = *d.action;
        if (turn.web_pending && a.tool != ToolName::kWebSearch) {
            return {false, "database_search found nothing; web_search must be called next.", fallback_default()};
        }
        if (a.tool == ToolName::kWebSearch && !turn.db_searched) {
            auto args = a.arguments;
            if (!string_arg(args, "question")) args["question"] = turn.search_text;
            return {false, "web_search may only run after database_search found nothing; search the database first.",
                    ToolAction{ToolName::kDatabaseSearch, args}};
        }
        if (a.tool == ToolName::kAnswerCase) {
            auto explicit_id = string_arg(a.arguments, "case_id");
            std::optional<std::string> id = explicit_id;
            if (!id) {
                auto ref = turn.reference(session.session_cases);
                if (ref.kind == CaseReference::Kind::kCase) {
                    id = ref.case_id;
                } else if (turn.hits.size() == 1) {
                    id = turn.hits.front().case_id;
                } else {
                    return {false,
                            ref.kind == CaseReference::Kind::kAmbiguous
                                ? "The question could refer to several session cases; ask the user which one."
                                : "The question does not identify a case; ask the user which case is meant.",
                            ToolAction{ToolName::kAskClarification, nlohmann::json::object()}};
                }
            }
            if (session.find_case(*id)) {
                a.arguments["case_id"] = *id;
                return {true, "", a};
            }
            if (!turn.db_searched) {
                return {false, "Case " + *id + " is not among the session cases; search for it first.",
                        ToolAction{ToolName::kDatabaseSearch, {{"case_id", *id}, {"question", turn.search_text}}}};
            }
            if (turn.hits.size() == 1) {
                a.arguments["case_id"] = turn.hits.front().case_id;
                return {false, "Case " + *id + " was not found; the search returned " + turn.hits.front().case_id + ".",
                        a};
            }
            return {false, "Case " + *id + " is not among the session cases.",
                    ToolAction{ToolName::kAskClarification, nlohmann::json::object()}};
        }
        return {true, "", a};
    };

    auto ask = [&](const std::vector<ChatMessage>& messages) { return chat_.complete(messages); };

    while (turn.steps.size() < options_.max_steps) {
        auto messages = build_agent_prompt(session, tools_.prompts.system, tools_description_, options_.budget);
        std::string reply;
        std::optional<Decision> decision;
        Verdict verdict;
        bool forced = false;
        try {
            reply = ask(messages);
            decision = parse_decision(reply);
            if (!decision) {
                messages.push_back({"assistant", reply});
                messages.push_back({"user",
                                    "Your reply was not understood. Reply with a single JSON object containing "
                                    "\"thought\" and either \"action\" (with \"tool\" and \"arguments\") or \"final\"."});
                reply = ask(messages);
                decision = parse_decision(reply);
            }
            if (!decision) {
                forced = true;
                decision = Decision{"(no usable reply from the model)", std::nullopt, std::nullopt};
                verdict = validate(Decision{"", ToolAction{ToolName::kAskClarification, {}}, std::nullopt});
                if (turn.web_pending) verdict.action = ToolAction{ToolName::kWebSearch, {{"question", turn.search_text}}};
            } else {
                verdict = validate(*decision);
                if (!verdict.legal) {
                    spdlog::debug("routing: rejected choice ({})", verdict.reason);
                    messages.push_back({"assistant", reply});
                    messages.push_back({"user", "That choice breaks a routing rule: " + verdict.reason +
                                                    " Choose again, replying with the same JSON format."});
                    auto second = parse_decision(ask(messages));
                    auto second_verdict = second ? validate(*second) : verdict;
                    if (second && second_verdict.legal) {
                        decision = second;
                        verdict = second_verdict;
                    } else {
                        forced = true;
                        verdict.action = second ? second_verdict.action : verdict.action;
                        verdict.legal = true;
                    }
                }
            }
        } catch (const Error& e) {
            if (!is_provider_failure(e)) throw;
            return finish(TurnOutcome::Kind::kError, "The assistant is unavailable right now: " + std::string(e.what()),
                          std::nullopt);
        }

        if (!verdict.action) {
            // Final answer. After a search it lists the cases found, citing their decisions.
            auto text = resolve_citations(*decision->final_text, std::vector<CitationSource>{}).text;
            CitedAnswer answer;
            answer.text = trim(text);
            if (!turn.hits.empty()) {
                std::string listing = "Cases found:";
                for (std::size_t i = 0; i < turn.hits.size(); ++i) {
                    const auto& c = turn.hits[i];
                    int marker = static_cast<int>(i + 1);
                    listing += "\n" + std::to_string(i + 1) + ". " + case_line(c);
                    if (!c.pdf_url.empty()) {
                        listing += " [" + std::to_string(marker) + "]";
                        answer.citations.push_back({marker, c.pdf_url, std::nullopt});
                    }
                }
                answer.text = answer.text.empty() ? listing : answer.text + "\n\n" + listing;
            }
            return finish(TurnOutcome::Kind::kAnswer, answer.text, answer);
        }

        ReactStep step;
        step.thought = forced && decision->thought.empty() ? "(routing rule applied)" : decision->thought;
        step.action = *verdict.action;
        step.forced = forced;
        const auto tool = step.action.tool;
        emit(AgentEventType::kToolStarted, tool, step.action.arguments.dump());

        std::optional<TurnOutcome::Kind> terminal;
        std::string terminal_text;
        std::optional<CitedAnswer> terminal_answer;
        auto question_arg = string_arg(step.action.arguments, "question");

        try {
            switch (tool) {
                case ToolName::kDatabaseSearch: {
                    turn.db_searched = true;
                    auto question = question_arg.value_or(turn.search_text);
                    QueryVector qv;
                    if (has_filter_args(step.action.arguments)) {
                        qv = query_vector_from_json(step.action.arguments, *tools_.vocab);
                    }
                    if (qv.is_empty()) {
                        qv = extract_query_vector(question, turn.prior_history, *tools_.tool_chat, *tools_.vocab,
                                                  tools_.prompts.query_vector);
                    }
                    turn.qv = qv;
                    auto result = database_search(qv, question, *tools_.cases, *tools_.titles, *tools_.embed);
                    turn.searches.push_back("the case database (filters " + describe_filters(qv) + ")");
                    turn.hits = result.cases;
                    if (result.cases.empty()) {
                        turn.web_pending = true;
                        step.observation = "No matching case in the database.";
                    } else {
                        for (const auto& c : result.cases) session.add_case(c);
                        step.observation = "Found " + std::to_string(result.cases.size()) + " case(s) in the database:";
                        for (const auto& c : result.cases) step.observation += "\n- " + case_line(c);
                    }
                    break;
                }
                case ToolName::kWebSearch: {
                    turn.web_pending = false;
                    auto question = question_arg.value_or(turn.search_text);
                    QueryVector qv;
                    if (turn.qv) {
                        qv = *turn.qv;
                    } else {
                        try {
                            qv = extract_query_vector(question, turn.prior_history, *tools_.tool_chat, *tools_.vocab,
                                                      tools_.prompts.query_vector);
                        } catch (const Error& e) {
                            if (e.code() != ErrorCode::kExtractionUnparseable) throw;
                        }
                    }
                    WebSearchConfig config{tools_.official_domains, 5, tools_.prompts.web_candidates,
                                           tools_.prompts.query_vector};
                    auto result = web_search_fallback(question, qv, *tools_.research, *tools_.web, *tools_.tool_chat,
                                                      *tools_.embed, *tools_.vocab, config);
                    std::string sites;
                    for (const auto& [j, d] : tools_.official_domains) sites += (sites.empty() ? "" : ", ") + d;
                    turn.searches.push_back("the web, verified against " + sites);
                    turn.hits = result.cases;
                    if (result.cases.empty()) {
                        step.observation = "No case could be verified on the official sites (" +
                                           std::to_string(result.dropped_unverified) + " unverified, " +
                                           std::to_string(result.dropped_mismatch) + " contradicting the question).";
                        std::string text = "No such case exists in the sources I can check. I searched ";
                        for (std::size_t i = 0; i < turn.searches.size(); ++i) {
                            text += (i ? " and " : "") + turn.searches[i];
                        }
                        text += ".";
                        if (result.dropped_unverified + result.dropped_mismatch > 0) {
                            text += " " + std::to_string(result.dropped_unverified + result.dropped_mismatch) +
                                    " suggested case(s) were discarded because no official source confirmed them.";
                        }
                        CitedAnswer a;
                        a.text = text;
                        terminal = TurnOutcome::Kind::kAnswer;
                        terminal_text = text;
                        terminal_answer = a;
                    } else {
                        for (const auto& c : result.cases) session.add_case(c);
                        step.observation = "Verified " + std::to_string(result.cases.size()) + " case(s) on the web:";
                        for (const auto& c : result.cases) step.observation += "\n- " + case_line(c);
                    }
                    break;
                }
                case ToolName::kAnswerCase: {
                    auto case_id = step.action.arguments.at("case_id").get<std::string>();
                    auto question = question_arg.value_or(turn.question);
                    std::optional<CaseAnswer> answered;
                    try {
                        answered = answer_case(question, case_id, turn.prior_history, *tools_.store, *tools_.embed,
                                               *tools_.tool_chat, tools_.prompts.case_qa);
                    } catch (const Error& e) {
                        if (e.code() != ErrorCode::kCaseNotIndexed) throw;
                        const auto* record = session.find_case(case_id);
                        if (!tools_.documents || !record) throw;
                        spdlog::info("indexing {} on demand", case_id);
                        index_case_document(*record, *tools_.documents, *tools_.store, *tools_.embed, tools_.chunking);
                        answered = answer_case(question, case_id, turn.prior_history, *tools_.store, *tools_.embed,
                                               *tools_.tool_chat, tools_.prompts.case_qa);
                    }
                    session.active_case = ActiveCase{case_id, answered->case_chunks};
                    step.observation = "Answered from " + std::to_string(answered->context.size()) + " excerpt(s) of " +
                                       case_id + " with " + std::to_string(answered->answer.citations.size()) +
                                       " citation(s).";
                    terminal = TurnOutcome::Kind::kAnswer;
                    terminal_text = answered->answer.text;
                    terminal_answer = answered->answer;
                    break;
                }
                case ToolName::kAnswerTheoretical: {
                    auto question = question_arg.value_or(turn.question);
                    auto a = answer_theoretical(question, turn.prior_history, *tools_.research, tools_.allowed_domains,
                                                tools_.prompts.theoretical);
                    step.observation = "Answered from " + std::to_string(a.citations.size()) + " official source(s).";
                    terminal = TurnOutcome::Kind::kAnswer;
                    terminal_text = a.text;
                    terminal_answer = std::move(a);
                    break;
                }
                case ToolName::kAskClarification: {
                    std::string pad;
                    for (std::size_t i = 0; i < turn.steps.size(); ++i) pad += render_step(turn.steps[i], i + 1) + "\n";
                    auto q = ask_clarification(turn.search_text, pad, turn.prior_history, session.session_cases,
                                               *tools_.tool_chat, tools_.prompts.clarification);
                    step.observation = "Asked the user: " + q;
                    terminal = TurnOutcome::Kind::kClarification;
                    terminal_text = q;
                    break;
                }
            }
        } catch (const Error& e) {
            if (is_provider_failure(e)) {
                step.observation = "Error: " + std::string(e.what());
                turn.steps.push_back(step);
                session.scratchpad.push_back(step);
                emit(AgentEventType::kToolFinished, tool, step.observation);
                return finish(TurnOutcome::Kind::kError,
                              "A provider failed while running " + to_string(tool) + ": " + e.what(), std::nullopt);
            }
            step.observation = "Error (" + std::string(to_string(e.code())) + "): " + e.what();
        }

        turn.steps.push_back(step);
        session.scratchpad.push_back(step);
        emit(AgentEventType::kToolFinished, tool, step.observation);
        if (terminal) return finish(*terminal, terminal_text, terminal_answer);
    }

    // Budget exhausted.
    std::string tried;
    for (std::size_t i = 0; i < turn.steps.size(); ++i) tried += (i ? ", " : "") + to_string(turn.steps[i].action.tool);
    auto text = "I could not complete this within " + std::to_string(options_.max_steps) + " steps (tried: " + tried +
                "). Could you say more precisely which case or topic you mean?";
    return finish(TurnOutcome::Kind::kClarification, text, std::nullopt);
}

// ---------------------------------------------------------------------------

SessionExecutor::SessionExecutor(SessionState initial) : state_(std::move(initial)) {}

TurnOutcome SessionExecutor::post(Agent& agent, std::string_view text, const AgentObserver& observer) {
    std::unique_lock turn_lock(turn_mutex_, std::try_to_lock);
    if (!turn_lock.owns_lock()) throw Error(ErrorCode::kConflict, "a turn is already running");
    SessionState work;
    {
        std::lock_guard lock(state_mutex_);
        work = state_;
        running_ = true;
    }
    try {
        auto outcome = agent.handle_message(work, text, observer);
        std::lock_guard lock(state_mutex_);
        state_ = std::move(work);
        running_ = false;
        return outcome;
    } catch (...) {
        std::lock_guard lock(state_mutex_);
        running_ = false;
        throw;
    }
}

SessionState SessionExecutor::snapshot() const {
    std::lock_guard lock(state_mutex_);
    auto s = state_;
    if (running_) s.status = SessionStatus::kRunning;
    return s;
}

bool SessionExecutor::running() const {
    std::lock_guard lock(state_mutex_);
    return running_;
}

}  // namespace lexagent
