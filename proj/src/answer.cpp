#include "lexagent/answer.hpp"

#include <algorithm>
#include <map>
#include <regex>
#include <set>

#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/pdf.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::string render_history(const std::vector<ChatMessage>& history) {
    std::string out;
    for (const auto& m : history) out += m.role + ": " + m.content + "\n";
    return out.empty() ? "(no previous messages)" : out;
}

std::string strip_bullet(std::string_view line) {
    static const std::regex bullet(R"(^\s*(?:[-*•]|\d+[.)])\s*)");
    return trim(std::regex_replace(std::string(line), bullet, ""));
}

bool is_apology_or_refusal(std::string_view sentence) {
    auto s = to_lower_ascii(trim(sentence));
    for (const char* p : {"sorry", "i'm sorry", "i am sorry", "i apologize", "apologies", "unfortunately", "i cannot",
                          "i can't", "i am unable", "i'm unable"}) {
        if (s.rfind(p, 0) == 0) return true;
    }
    return false;
}

std::string topic_of(std::string_view question) {
    auto t = trim(question);
    while (!t.empty() && (t.back() == '?' || t.back() == '.' || t.back() == '!')) t.pop_back();
    if (!t.empty()) t[0] = static_cast<char>(std::tolower(static_cast<unsigned char>(t[0])));
    return t;
}

}  // namespace

void to_json(nlohmann::json& j, const CitedAnswer& a) {
    j = nlohmann::json{{"text", a.text}, {"citations", nlohmann::json::array()}, {"followups", a.followups}};
    for (const auto& c : a.citations) {
        j["citations"].push_back({{"marker", c.marker},
                                  {"source_url", c.source_url},
                                  {"page", c.page ? nlohmann::json(*c.page) : nlohmann::json(nullptr)}});
    }
    if (a.citation_violations) j["citation_violations"] = a.citation_violations;
}

void from_json(const nlohmann::json& j, CitedAnswer& a) {
    a = CitedAnswer{};
    a.text = j.value("text", std::string{});
    for (const auto& c : j.value("citations", nlohmann::json::array())) {
        Citation cit;
        cit.marker = c.at("marker").get<int>();
        cit.source_url = c.at("source_url").get<std::string>();
        if (c.contains("page") && !c.at("page").is_null()) cit.page = c.at("page").get<int>();
        a.citations.push_back(std::move(cit));
    }
    a.followups = j.value("followups", std::vector<std::string>{});
    a.citation_violations = j.value("citation_violations", std::size_t{0});
}

CitedAnswer resolve_citations(std::string_view answer_text, const std::vector<CitationSource>& sources) {
    static const std::regex marker(R"(\[(\d{1,6})\])");
    CitedAnswer out;
    std::map<int, Citation> cited;
    std::string text;
    std::string input(answer_text);
    auto begin = std::sregex_iterator(input.begin(), input.end(), marker);
    std::size_t last = 0;
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const auto& m = *it;
        auto pos = static_cast<std::size_t>(m.position(0));
        int n = std::stoi(m[1].str());
        bool valid = n >= 1 && static_cast<std::size_t>(n) <= sources.size() && sources[n - 1].usable;
        text += input.substr(last, pos - last);
        if (valid) {
            text += m.str(0);
            cited.emplace(n, Citation{n, sources[n - 1].source_url, sources[n - 1].page});
        } else {
            while (!text.empty() && text.back() == ' ') text.pop_back();
            ++out.citation_violations;
        }
        last = pos + m.length(0);
    }
    text += input.substr(last);
    out.text = std::move(text);
    for (auto& [n, c] : cited) out.citations.push_back(std::move(c));
    return out;
}

CitedAnswer resolve_citations(std::string_view answer_text, const std::vector<DocumentChunk>& chunks) {
    std::vector<CitationSource> sources;
    sources.reserve(chunks.size());
    for (const auto& c : chunks) sources.push_back({c.source_url, c.page, true});
    return resolve_citations(answer_text, sources);
}

std::string render_chunk_context(const std::vector<RankedChunk>& context) {
    std::string out;
    for (std::size_t i = 0; i < context.size(); ++i) {
        const auto& ch = context[i].chunk;
        out += "[" + std::to_string(i + 1) + "] (page " + std::to_string(ch.page) + ", " + ch.source_url + ")\n";
        out += ch.text + "\n\n";
    }
    return out;
}

CaseAnswer answer_case(std::string_view question, const std::string& case_id,
                       const std::vector<ChatMessage>& history, VectorStore& store, EmbeddingProvider& embed,
                       ChatProvider& chat, const std::string& prompt_template, std::size_t top_k) {
    CaseAnswer out;
    out.case_chunks = load_case_chunks(store, case_id);
    if (out.case_chunks.empty()) throw Error(ErrorCode::kCaseNotIndexed, case_id);
    auto q = embed_batch({std::string(question)}, embed, EmbeddingProfile::kChunk).front();
    out.context = rank_chunks(out.case_chunks, q, top_k);
    out.prompt = fill_template(prompt_template, {{"context", render_chunk_context(out.context)},
                                                 {"history", render_history(history)},
                                                 {"question", std::string(question)},
                                                 {"case_id", case_id}});
    auto reply = chat.complete({{"user", out.prompt}});
    std::vector<DocumentChunk> ordered;
    ordered.reserve(out.context.size());
    for (const auto& r : out.context) ordered.push_back(r.chunk);
    out.answer = resolve_citations(reply, ordered);
    if (out.answer.citation_violations) {
        spdlog::warn("answer for {} cited {} chunk(s) outside its context", case_id, out.answer.citation_violations);
    }
    return out;
}

std::size_t index_case_document(const CaseRecord& c, DocumentSource& documents, VectorStore& store,
                                EmbeddingProvider& embed, const ChunkingOptions& options) {
    if (c.pdf_url.empty()) throw Error(ErrorCode::kCaseNotIndexed, c.case_id + " has no decision link");
    auto pages = extract_pdf_pages(documents.fetch(c.pdf_url));
    auto chunks = chunk_document(pages, c.case_id, c.pdf_url, options);
    return index_case(c, std::move(chunks), store, embed);
}

std::vector<std::string> parse_followups(std::string& answer_text) {
    static const std::regex heading(
        R"((^|\n)[ \t]*(?:#+[ \t]*)?\**(?:follow[- ]?up questions|questions for deeper research|further research questions|suggested follow[- ]?ups?)\**[ \t]*:?[ \t]*\**[ \t]*(\n|$))",
        std::regex::icase);
    std::smatch m;
    if (!std::regex_search(answer_text, m, heading)) return {};
    auto tail = answer_text.substr(static_cast<std::size_t>(m.position(0) + m.length(0)));
    answer_text = trim(answer_text.substr(0, static_cast<std::size_t>(m.position(0))));
    std::vector<std::string> out;
    for (const auto& line : split(tail, '\n')) {
        auto q = strip_bullet(line);
        if (q.empty()) continue;
        out.push_back(std::move(q));
        if (out.size() == kMaxFollowups) break;
    }
    return out;
}

CitedAnswer answer_theoretical(std::string_view question, const std::vector<ChatMessage>& history,
                               DeepResearchProvider& research, const std::vector<std::string>& allowed_domains,
                               const std::string& prompt_template) {
    if (allowed_domains.empty()) throw Error(ErrorCode::kInvalidArgument, "allowed_domains is empty");
    std::string domains;
    for (const auto& d : allowed_domains) domains += "- " + d + "\n";
    auto prompt = fill_template(prompt_template, {{"question", std::string(question)},
                                                  {"history", render_history(history)},
                                                  {"domains", domains}});
    auto result = research.research(prompt, allowed_domains);

    std::vector<CitationSource> sources;
    std::vector<std::size_t> allowed_indices;
    for (std::size_t i = 0; i < result.source_urls.size(); ++i) {
        const auto& url = result.source_urls[i];
        auto host = url_host(url);
        bool ok = host && std::any_of(allowed_domains.begin(), allowed_domains.end(),
                                      [&](const std::string& d) { return host_matches(*host, d); });
        sources.push_back({url, std::nullopt, ok});
        if (ok) allowed_indices.push_back(i);
    }
    if (allowed_indices.empty()) {
        throw Error(ErrorCode::kUngroundedAnswer, "research returned no source inside the allowed domains");
    }

    std::string body = result.answer_text;
    auto followups = parse_followups(body);
    auto answer = resolve_citations(body, sources);
    if (answer.citations.empty()) {
        answer.text = trim(answer.text) + "\n\nSources:";
        for (auto i : allowed_indices) {
            int marker = static_cast<int>(i + 1);
            answer.text += " [" + std::to_string(marker) + "]";
            answer.citations.push_back({marker, sources[i].source_url, std::nullopt});
        }
    }
    if (followups.empty()) {
        auto topic = topic_of(question);
        followups.push_back("Which EU or German decisions illustrate how authorities assess " + topic + "?");
        followups.push_back("How do the European Commission and the Bundeskartellamt differ in their approach to " +
                            topic + "?");
        for (auto it = history.rbegin(); it != history.rend(); ++it) {
            if (it->role == "user" && trim(it->content) != trim(question)) {
                followups.push_back("How does this relate to your earlier question: \"" + trim(it->content) + "\"?");
                break;
            }
        }
    }
    if (followups.size() > kMaxFollowups) followups.resize(kMaxFollowups);
    answer.followups = std::move(followups);
    return answer;
}

std::string sanitize_clarification(std::string_view reply) {
    auto text = trim(reply);
    // Split into sentences, drop apologies and refusals.
    std::vector<std::string> sentences;
    std::string current;
    for (char c : text) {
        current += c;
        if (c == '.' || c == '!' || c == '?' || c == '\n') {
            if (!trim(current).empty()) sentences.push_back(trim(current));
            current.clear();
        }
    }
    if (!trim(current).empty()) sentences.push_back(trim(current));
    std::string out;
    for (const auto& s : sentences) {
        if (is_apology_or_refusal(s)) continue;
        if (!out.empty()) out += ' ';
        out += s;
        if (s.back() == '?') break;
    }
    out = trim(out);
    if (out.empty()) return out;
    while (!out.empty() && (out.back() == '.' || out.back() == '!')) out.pop_back();
    if (out.back() != '?') out += '?';
    return out;
}

std::string ask_clarification(std::string_view question, std::string_view scratchpad,
                              const std::vector<ChatMessage>& history, const std::vector<CaseRecord>& session_cases,
                              ChatProvider& chat, const std::string& prompt_template) {
    std::string cases;
    for (std::size_t i = 0; i < session_cases.size(); ++i) {
        cases += std::to_string(i + 1) + ". " + session_cases[i].case_id + " – " + session_cases[i].case_title + "\n";
    }
    auto prompt = fill_template(prompt_template, {{"question", std::string(question)},
                                                  {"scratchpad", scratchpad.empty() ? "(empty)" : std::string(scratchpad)},
                                                  {"history", render_history(history)},
                                                  {"cases", cases.empty() ? "(no cases retrieved yet)" : cases}});
    auto reply = sanitize_clarification(chat.complete({{"user", prompt}}));
    if (!reply.empty()) return reply;
    if (session_cases.size() >= 2) {
        std::string q = "Which case do you mean:";
        for (std::size_t i = 0; i < session_cases.size(); ++i) {
            q += (i ? "; " : " ") + std::to_string(i + 1) + ") " + session_cases[i].case_id;
        }
        return q + "?";
    }
    return "Which case or competition-law topic is your question about?";
}

}  // namespace lexagent
