#include "lexagent/search.hpp"

#include <algorithm>
#include <set>

#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::string render_history(const std::vector<ChatMessage>& history) {
    std::string out;
    for (const auto& m : history) out += m.role + ": " + m.content + "\n";
    return out.empty() ? "(none)" : out;
}

std::string join_lines(const auto& values) {
    std::string out;
    for (const auto& v : values) out += "- " + v + "\n";
    return out;
}

std::string query_text(const QueryVector& qv) {
    std::string out;
    auto add = [&](const std::string& s) {
        if (!out.empty()) out += ' ';
        out += s;
    };
    if (qv.case_id) add(*qv.case_id);
    if (qv.case_title) add(*qv.case_title);
    if (qv.jurisdiction) add(std::string(to_string(*qv.jurisdiction)));
    if (qv.violation) add(*qv.violation);
    if (qv.sector) add(*qv.sector);
    if (qv.companies) {
        for (const auto& c : *qv.companies) add(c);
    }
    return out;
}

bool date_newer(const std::optional<CaseDate>& a, const std::optional<CaseDate>& b) {
    if (a && b) return *a > *b;
    return a.has_value() && !b.has_value();
}

}  // namespace

QueryVector extract_query_vector(std::string_view question, const std::vector<ChatMessage>& history,
                                 ChatProvider& chat, const Vocabularies& vocab, const std::string& prompt_template,
                                 std::vector<std::string>* dropped) {
    if (trim(question).empty()) throw Error(ErrorCode::kInvalidArgument, "question is empty");
    auto prompt = fill_template(prompt_template, {{"question", std::string(question)},
                                                  {"history", render_history(history)},
                                                  {"violations", join_lines(vocab.violations.canonical_values())},
                                                  {"sectors", join_lines(vocab.sectors.sections())}});
    auto reply = chat.complete({{"user", prompt}}, kExtractionParams);
    auto parsed = extract_json_object(reply);
    if (!parsed) throw Error(ErrorCode::kExtractionUnparseable, "no JSON object in extraction reply");
    std::vector<std::string> rejected;
    auto qv = query_vector_from_json(*parsed, vocab, &rejected);
    for (const auto& dim : rejected) spdlog::info("query vector: dropped out-of-vocabulary {}", dim);
    if (dropped) dropped->insert(dropped->end(), rejected.begin(), rejected.end());
    return qv;
}

bool matches_exact_dimensions(const QueryVector& qv, const CaseRecord& c) {
    if (qv.case_id && c.case_id != *qv.case_id) return false;
    if (qv.jurisdiction && c.jurisdiction != qv.jurisdiction) return false;
    if (qv.violation && c.violation != qv.violation) return false;
    if (qv.sector && c.sector != qv.sector) return false;
    if (qv.companies && !companies_subset(*qv.companies, c.companies)) return false;
    return true;
}

SearchResult database_search(const QueryVector& qv, std::string_view question, const CaseStore& cases,
                             const TitleIndex& titles, EmbeddingProvider& embed) {
    if (qv.is_empty()) throw Error(ErrorCode::kEmptyQueryVector, "no filter dimension extracted");

    std::vector<const CaseRecord*> candidates;
    for (const auto& c : cases.records()) {
        if (matches_exact_dimensions(qv, c)) candidates.push_back(&c);
    }

    auto title_embedding = [&](const CaseRecord& c) -> Embedding {
        if (const auto* e = titles.find(c.case_id)) return *e;
        return embed_batch({c.case_title}, embed, EmbeddingProfile::kTitle).front();
    };

    if (qv.case_title && !candidates.empty()) {
        auto wanted = embed_batch({*qv.case_title}, embed, EmbeddingProfile::kTitle).front();
        std::erase_if(candidates, [&](const CaseRecord* c) {
            return !exceeds_title_threshold(cosine_similarity(wanted, title_embedding(*c)));
        });
    }

    if (candidates.size() > kMaxSearchResults) {
        auto text = trim(question);
        if (text.empty()) text = query_text(qv);
        auto q = embed_batch({text}, embed, EmbeddingProfile::kTitle).front();
        std::vector<std::pair<double, const CaseRecord*>> scored;
        scored.reserve(candidates.size());
        for (const auto* c : candidates) scored.emplace_back(cosine_similarity(q, title_embedding(*c)), c);
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            if (a.second->decision_date != b.second->decision_date) {
                return date_newer(a.second->decision_date, b.second->decision_date);
            }
            return a.second->case_id < b.second->case_id;
        });
        candidates.clear();
        for (std::size_t i = 0; i < kMaxSearchResults; ++i) candidates.push_back(scored[i].second);
    }

    SearchResult result;
    result.origin = SearchOrigin::kDatabase;
    for (const auto* c : candidates) result.cases.push_back(*c);
    return result;
}

std::vector<std::string> conflicting_dimensions(const QueryVector& wanted, const QueryVector& candidate,
                                                EmbeddingProvider& embed) {
    std::vector<std::string> out;
    if (wanted.case_id && candidate.case_id && to_lower_ascii(*wanted.case_id) != to_lower_ascii(*candidate.case_id)) {
        out.emplace_back("case_id");
    }
    if (wanted.jurisdiction && candidate.jurisdiction && *wanted.jurisdiction != *candidate.jurisdiction) {
        out.emplace_back("jurisdiction");
    }
    if (wanted.violation && candidate.violation && *wanted.violation != *candidate.violation) {
        out.emplace_back("violation");
    }
    if (wanted.sector && candidate.sector && *wanted.sector != *candidate.sector) out.emplace_back("sector");
    if (wanted.companies && candidate.companies && !companies_subset(*wanted.companies, *candidate.companies)) {
        out.emplace_back("companies");
    }
    if (wanted.case_title && candidate.case_title) {
        auto e = embed_batch({*wanted.case_title, *candidate.case_title}, embed, EmbeddingProfile::kTitle);
        if (!exceeds_title_threshold(cosine_similarity(e[0], e[1]))) out.emplace_back("case_title");
    }
    return out;
}

SearchResult web_search_fallback(std::string_view question, const QueryVector& qv, DeepResearchProvider& research,
                                 WebSearchProvider& web, ChatProvider& chat, EmbeddingProvider& embed,
                                 const Vocabularies& vocab, const WebSearchConfig& config) {
    SearchResult result;
    result.origin = SearchOrigin::kWeb;

    // Stage 1: candidate titles.
    auto proposal = research.research(fill_template(config.candidates_prompt, {{"question", std::string(question)}}),
                                      std::nullopt);
    std::vector<std::string> titles;
    std::set<std::string> seen;
    if (!proposal.candidate_cases) {
        // Providers without a structured field answer with the JSON the prompt asks for.
        auto j = extract_json_object(proposal.answer_text);
        if (j && j->contains("candidate_cases") && j->at("candidate_cases").is_array()) {
            std::vector<std::string> listed;
            for (const auto& t : j->at("candidate_cases")) {
                if (t.is_string()) listed.push_back(t.get<std::string>());
            }
            proposal.candidate_cases = std::move(listed);
        }
    }
    for (const auto& t : proposal.candidate_cases.value_or(std::vector<std::string>{})) {
        auto title = trim(t);
        if (title.empty() || !seen.insert(to_lower_ascii(title)).second) continue;
        titles.push_back(std::move(title));
        if (titles.size() == kMaxSearchResults) break;
    }

    // Stage 2: official-source verification.
    std::vector<std::pair<Jurisdiction, std::string>> domains;
    if (qv.jurisdiction) {
        auto it = config.official_domains.find(*qv.jurisdiction);
        if (it != config.official_domains.end()) domains.emplace_back(*it);
    } else {
        for (const auto& kv : config.official_domains) domains.emplace_back(kv);
    }
    struct Verified {
        std::string title;
        Jurisdiction jurisdiction;
        WebResult official;
    };
    std::vector<Verified> verified;
    for (const auto& title : titles) {
        std::optional<Verified> hit;
        for (const auto& [jurisdiction, domain] : domains) {
            auto results = web.search(title, domain);
            if (results.size() > config.results_per_title) results.resize(config.results_per_title);
            for (const auto& r : results) {
                auto host = url_host(r.url);
                if (host && host_matches(*host, domain)) {
                    hit = Verified{title, jurisdiction, r};
                    break;
                }
            }
            if (hit) break;
        }
        if (hit) {
            verified.push_back(std::move(*hit));
        } else {
            spdlog::info("web search: no official source for '{}', dropped", title);
            ++result.dropped_unverified;
        }
    }

    // Stages 3 and 4: metadata of the official description must not contradict the question.
    for (const auto& v : verified) {
        auto description = trim(v.official.description);
        if (description.empty()) description = v.official.title.empty() ? v.title : v.official.title;
        QueryVector found;
        try {
            found = extract_query_vector(description, {}, chat, vocab, config.extraction_prompt);
        } catch (const Error& e) {
            if (e.code() != ErrorCode::kExtractionUnparseable) throw;
            spdlog::warn("web search: could not extract metadata for '{}'", v.title);
        }
        auto conflicts = conflicting_dimensions(qv, found, embed);
        if (!conflicts.empty()) {
            spdlog::info("web search: '{}' conflicts on {}", v.title, conflicts.front());
            ++result.dropped_mismatch;
            continue;
        }
        CaseRecord c;
        c.case_id = found.case_id.value_or("web:" + v.official.url);
        c.case_title = v.title;
        c.jurisdiction = found.jurisdiction.value_or(v.jurisdiction);
        c.violation = found.violation;
        c.sector = found.sector;
        c.companies = found.companies.value_or(std::vector<std::string>{});
        c.pdf_url = v.official.url;
        result.cases.push_back(std::move(c));
    }
    return result;
}

}  // namespace lexagent
