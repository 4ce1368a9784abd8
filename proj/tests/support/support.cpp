#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <zlib.h>

#include "lexagent/assets.hpp"
#include "lexagent/chunking.hpp"
#include "lexagent/error.hpp"
#include "lexagent/pdf.hpp"

#ifndef LEXAGENT_TEST_FIXTURES
#error "LEXAGENT_TEST_FIXTURES must point at tests/fixtures"
#endif

namespace lexagent::testing {

const Assets& assets() {
    static const Assets a;
    return a;
}

const Vocabularies& vocab() {
    static const Vocabularies v = assets().vocabularies();
    return v;
}

std::filesystem::path fixture(const std::string& name) { return std::filesystem::path(LEXAGENT_TEST_FIXTURES) / name; }

// ---------------------------------------------------------------------------

namespace {

std::string pdf_escape(std::string_view s) {
    std::string out;
    for (char c : s) {
        if (c == '(' || c == ')' || c == '\\') out += '\\';
        out += c;
    }
    return out;
}

std::string deflate(const std::string& in) {
    uLongf size = compressBound(static_cast<uLong>(in.size()));
    std::string out(size, '\0');
    if (compress(reinterpret_cast<Bytef*>(out.data()), &size, reinterpret_cast<const Bytef*>(in.data()),
                 static_cast<uLong>(in.size())) != Z_OK) {
        throw std::runtime_error("compress failed");
    }
    out.resize(size);
    return out;
}

}  // namespace

std::string make_pdf(const std::vector<std::string>& pages, bool compress) {
    // Objects: 1 catalog, 2 page tree, 3 font, then (page, content) per page.
    std::vector<std::string> objects;
    std::string kids;
    for (std::size_t i = 0; i < pages.size(); ++i) kids += std::to_string(4 + 2 * i) + " 0 R ";
    objects.push_back("<< /Type /Catalog /Pages 2 0 R >>");
    objects.push_back("<< /Type /Pages /Kids [" + kids + "] /Count " + std::to_string(pages.size()) + " >>");
    objects.push_back("<< /Type /Font /Subtype /Type1 /BaseFont /Helvetica >>");
    for (std::size_t i = 0; i < pages.size(); ++i) {
        std::string content = "BT /F1 11 Tf 14 TL 72 770 Td\n";
        std::istringstream lines(pages[i]);
        for (std::string line; std::getline(lines, line);) content += "(" + pdf_escape(line) + ") Tj T*\n";
        content += "ET\n";
        objects.push_back("<< /Type /Page /Parent 2 0 R /MediaBox [0 0 595 842] /Resources << /Font << /F1 3 0 R >> >> "
                          "/Contents " + std::to_string(5 + 2 * i) + " 0 R >>");
        std::string body = compress ? deflate(content) : content;
        objects.push_back("<< /Length " + std::to_string(body.size()) + (compress ? " /Filter /FlateDecode" : "") +
                          " >>\nstream\n" + body + "\nendstream");
    }
    std::string out = "%PDF-1.4\n%\xE2\xE3\xCF\xD3\n";
    std::vector<std::size_t> offsets;
    for (std::size_t i = 0; i < objects.size(); ++i) {
        offsets.push_back(out.size());
        out += std::to_string(i + 1) + " 0 obj\n" + objects[i] + "\nendobj\n";
    }
    auto xref = out.size();
    out += "xref\n0 " + std::to_string(objects.size() + 1) + "\n0000000000 65535 f \n";
    char buf[32];
    for (auto off : offsets) {
        std::snprintf(buf, sizeof buf, "%010zu 00000 n \n", off);
        out += buf;
    }
    out += "trailer\n<< /Size " + std::to_string(objects.size() + 1) + " /Root 1 0 R >>\nstartxref\n" +
           std::to_string(xref) + "\n%%EOF\n";
    return out;
}

CaseRecord make_case(std::string id, std::string title, std::optional<Jurisdiction> j,
                     std::optional<std::string> violation, std::optional<std::string> sector,
                     std::vector<std::string> companies, std::optional<std::string> date) {
    CaseRecord c;
    c.case_id = std::move(id);
    c.case_title = std::move(title);
    c.jurisdiction = j;
    c.violation = std::move(violation);
    c.sector = std::move(sector);
    c.companies = std::move(companies);
    c.pdf_url = "https://ec.europa.eu/competition/antitrust/cases/dec_docs/" + c.case_id + "/decision.pdf";
    c.language = "English";
    if (date) c.decision_date = CaseDate::parse_iso(*date);
    return c;
}

// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string> kTitleWords = {
    "Car",    "glass",   "Visa",     "Trucks",   "Android",    "Shopping", "Intel",  "Gas",      "Insulators",
    "Lifts",  "Bathroom", "fittings", "Marine",  "hoses",      "Power",    "cables", "Smart",    "card",
    "chips",  "Forex",   "Euro",     "interest", "derivatives", "Canned",  "vegetables", "Ethylene", "Steel",
    "Abrasives", "Zinc", "Cement",   "Sugar",    "Beer",       "Rail",     "cargo",  "Airline",  "alliance",
    "Retail", "food",    "Milk",     "Paper",    "envelopes",  "Freight",  "Chemicals", "Glass", "bottles"};

const std::vector<std::string> kCompanies = {
    "Alpha AG",     "Beta SA",      "Gamma Ltd",  "Delta GmbH",  "Epsilon NV", "Zeta SpA",   "Eta Oy",
    "Theta plc",    "Iota Inc",     "Kappa BV",   "Lambda SE",   "Mu AB",      "Nu AS",      "Xi KG",
    "Omicron Corp", "Pi Holdings",  "Rho Group",  "Sigma Foods", "Tau Energy", "Upsilon Tech"};

const std::vector<std::string> kEuViolations = {"Article 101 TFEU", "Article 102 TFEU", "EU Merger Regulation"};
const std::vector<std::string> kDeViolations = {"GWB Section 1", "GWB Section 19", "GWB Section 20", "GWB Section 36"};

template <typename T>
const T& pick(const std::vector<T>& v, std::mt19937_64& rng) {
    return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)];
}

int uniform(int lo, int hi, std::mt19937_64& rng) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

std::string key(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    std::string out(s.substr(b, e - b));
    for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    return out;
}

}  // namespace

std::vector<CaseRecord> generate_cases(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<CaseRecord> out;
    std::set<std::string> titles;
    const auto& sectors = vocab().sectors.sections();
    for (std::size_t i = 0; out.size() < n; ++i) {
        bool eu = uniform(0, 2, rng) != 0;
        std::string title;
        do {
            title = pick(kTitleWords, rng) + " " + pick(kTitleWords, rng);
            if (uniform(0, 2, rng) == 0) title += " " + pick(kTitleWords, rng);
        } while (!titles.insert(title).second);
        CaseRecord c;
        c.case_title = title;
        if (eu) {
            c.case_id = (uniform(0, 3, rng) == 0 ? "M." : "AT.") + std::to_string(30000 + 37 * i + uniform(0, 30, rng));
            c.jurisdiction = Jurisdiction::kEU;
            c.violation = pick(kEuViolations, rng);
            c.language = "English";
            c.decision_date = CaseDate{uniform(1995, 2023, rng), uniform(1, 12, rng), uniform(1, 28, rng)};
            c.pdf_url = "https://ec.europa.eu/competition/elojade/isef/case_details.cfm?proc_code=" + c.case_id;
        } else {
            c.case_id = "B" + std::to_string(uniform(1, 11, rng)) + "-" + std::to_string(10 + i) + "-" +
                        std::to_string(uniform(10, 23, rng));
            c.jurisdiction = Jurisdiction::kGermany;
            c.violation = pick(kDeViolations, rng);
            c.language = uniform(0, 1, rng) ? "German" : "English";
            c.decision_date = CaseDate{uniform(2005, 2023, rng), 0, 0};
            c.pdf_url = "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/DE/Entscheidungen/Kartellverbot/" +
                        std::to_string(c.decision_date->year) + "/" + c.case_id + ".html";
        }
        if (uniform(0, 9, rng) != 0) c.sector = pick(sectors, rng);
        std::set<std::string> chosen;
        int k = uniform(1, 3, rng);
        while (static_cast<int>(chosen.size()) < k) chosen.insert(pick(kCompanies, rng));
        c.companies.assign(chosen.begin(), chosen.end());
        std::shuffle(c.companies.begin(), c.companies.end(), rng);
        out.push_back(std::move(c));
    }
    return out;
}

std::vector<QueryVector> generate_query_vectors(const std::vector<CaseRecord>& cases, std::size_t n,
                                                std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const auto& sectors = vocab().sectors.sections();
    std::vector<std::string> violations(vocab().violations.canonical_values().begin(),
                                        vocab().violations.canonical_values().end());
    std::vector<QueryVector> out;
    while (out.size() < n) {
        QueryVector qv;
        const auto& c = pick(cases, rng);
        bool from_case = uniform(0, 9, rng) < 7;
        int dims = uniform(1, 3, rng);
        std::vector<int> order{0, 1, 2, 3, 4, 5};
        std::shuffle(order.begin(), order.end(), rng);
        for (int d = 0; d < dims; ++d) {
            switch (order[d]) {
                case 0: qv.case_id = from_case ? c.case_id : "AT." + std::to_string(uniform(10000, 99999, rng)); break;
                case 1:
                    qv.case_title = from_case ? c.case_title : pick(kTitleWords, rng) + " " + pick(kTitleWords, rng);
                    break;
                case 2:
                    qv.jurisdiction = from_case && c.jurisdiction ? *c.jurisdiction
                                      : uniform(0, 1, rng)       ? Jurisdiction::kEU
                                                                 : Jurisdiction::kGermany;
                    break;
                case 3: qv.violation = from_case && c.violation ? *c.violation : pick(violations, rng); break;
                case 4: qv.sector = from_case && c.sector ? *c.sector : pick(sectors, rng); break;
                case 5: {
                    std::vector<std::string> cs;
                    if (from_case) {
                        cs = c.companies;
                        std::shuffle(cs.begin(), cs.end(), rng);
                        cs.resize(static_cast<std::size_t>(uniform(1, static_cast<int>(cs.size()), rng)));
                        // vary case and spacing; matching is on the normalized name
                        if (uniform(0, 1, rng)) {
                            for (auto& s : cs) s = " " + key(s) + " ";
                        }
                    } else {
                        cs.push_back(pick(kCompanies, rng));
                    }
                    qv.companies = cs;
                    break;
                }
            }
        }
        out.push_back(std::move(qv));
    }
    return out;
}

double oracle_cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

std::vector<std::string> oracle_search(const QueryVector& qv, const std::string& question,
                                       const std::vector<CaseRecord>& cases, EmbeddingProvider& embed) {
    std::optional<std::vector<double>> wanted_title;
    if (qv.case_title) wanted_title = embed.embed({*qv.case_title}, EmbeddingProfile::kTitle).front();
    std::vector<const CaseRecord*> hits;
    for (const auto& c : cases) {
        if (qv.case_id && c.case_id != *qv.case_id) continue;
        if (qv.jurisdiction && (!c.jurisdiction || *c.jurisdiction != *qv.jurisdiction)) continue;
        if (qv.violation && (!c.violation || *c.violation != *qv.violation)) continue;
        if (qv.sector && (!c.sector || *c.sector != *qv.sector)) continue;
        if (qv.companies) {
            bool all = true;
            for (const auto& w : *qv.companies) {
                bool found = false;
                for (const auto& have : c.companies) found = found || key(have) == key(w);
                all = all && found;
            }
            if (!all) continue;
        }
        if (wanted_title) {
            auto t = embed.embed({c.case_title}, EmbeddingProfile::kTitle).front();
            if (!(oracle_cosine(*wanted_title, t) > 0.85)) continue;
        }
        hits.push_back(&c);
    }
    if (hits.size() > 5) {
        auto q = embed.embed({question}, EmbeddingProfile::kTitle).front();
        std::vector<std::tuple<double, const CaseRecord*>> scored;
        for (const auto* c : hits) {
            scored.emplace_back(oracle_cosine(q, embed.embed({c->case_title}, EmbeddingProfile::kTitle).front()), c);
        }
        auto date_key = [](const CaseRecord* c) {
            if (!c->decision_date) return std::make_tuple(-1, -1, -1);
            return std::make_tuple(c->decision_date->year, c->decision_date->month, c->decision_date->day);
        };
        std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
            if (std::get<0>(a) != std::get<0>(b)) return std::get<0>(a) > std::get<0>(b);
            auto da = date_key(std::get<1>(a)), db = date_key(std::get<1>(b));
            if (da != db) return da > db;
            return std::get<1>(a)->case_id < std::get<1>(b)->case_id;
        });
        hits.clear();
        for (std::size_t i = 0; i < 5; ++i) hits.push_back(std::get<1>(scored[i]));
    }
    std::vector<std::string> ids;
    for (const auto* c : hits) ids.push_back(c->case_id);
    return ids;
}

std::vector<double> vector_at_similarity(const std::vector<double>& base, double similarity) {
    std::size_t axis = 0;
    for (std::size_t i = 1; i < base.size(); ++i) {
        if (std::fabs(base[i]) < std::fabs(base[axis])) axis = i;
    }
    std::vector<double> orth(base.size(), 0.0);
    orth[axis] = 1.0;
    double proj = base[axis];
    double norm = 0;
    for (std::size_t i = 0; i < base.size(); ++i) {
        orth[i] -= proj * base[i];
        norm += orth[i] * orth[i];
    }
    norm = std::sqrt(norm);
    double s = std::sqrt(1.0 - similarity * similarity);
    std::vector<double> out(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) out[i] = similarity * base[i] + s * orth[i] / norm;
    return out;
}

std::vector<std::string> generate_document(std::size_t tokens, std::size_t pages, std::uint64_t seed) {
    static const std::vector<std::string> words = {
        "the",    "undertakings", "market",    "agreement", "price",   "commission", "decision", "fine",
        "cartel", "dominant",     "position",  "abuse",     "merger",  "customers",  "supply",   "competition",
        "sector", "relevant",     "geographic", "product",  "conduct", "infringement", "parties", "evidence"};
    std::mt19937_64 rng(seed);
    std::vector<std::string> out(pages);
    std::size_t per_page = std::max<std::size_t>(1, tokens / pages);
    std::size_t emitted = 0;
    std::size_t since_stop = 0;
    for (std::size_t p = 0; p < pages; ++p) {
        std::size_t target = p + 1 == pages ? tokens : std::min(tokens, emitted + per_page);
        std::string text;
        while (emitted < target) {
            bool stop = since_stop >= 6 && uniform(0, 9, rng) < 2;
            if (stop && !text.empty() && text.back() != '\n') {
                text += ".";
                since_stop = 0;
                if (uniform(0, 3, rng) == 0) text += "\n";
            } else {
                if (!text.empty() && text.back() != '\n') text += " ";
                text += pick(words, rng);
                ++since_stop;
            }
            ++emitted;
        }
        out[p] = text;
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<CaseRecord> scenario_dataset() {
    return {
        make_case("AT.40099", "Google Android", Jurisdiction::kEU, "Article 102 TFEU",
                  "J – Information and communication", {"Google", "Alphabet"}, "2018-07-18"),
        make_case("AT.39740", "Google Search (Shopping)", Jurisdiction::kEU, "Article 102 TFEU",
                  "J – Information and communication", {"Google", "Alphabet"}, "2017-06-27"),
        make_case("AT.39824", "Trucks", Jurisdiction::kEU, "Article 101 TFEU", "C – Manufacturing",
                  {"MAN", "Volvo", "Daimler", "Iveco", "DAF"}, "2016-07-19"),
        make_case("M.8084", "Bayer / Monsanto", Jurisdiction::kEU, "EU Merger Regulation", "C – Manufacturing",
                  {"Bayer", "Monsanto"}, "2018-03-21"),
        make_case("B6-22-16", "Facebook", Jurisdiction::kGermany, "GWB Section 19",
                  "J – Information and communication", {"Facebook"}, "2019"),
        make_case("B1-40-19", "Rolled steel", Jurisdiction::kGermany, "GWB Section 1", "C – Manufacturing",
                  {"Stahlwerk Nord", "Walzwerk Süd"}, "2020"),
    };
}

Harness::Harness(const std::vector<CaseRecord>& dataset, AgentOptions options) : cases(dataset) {
    for (const auto& c : dataset) {
        std::vector<PdfPage> pages{
            {1, c.case_title + " decision. This decision concerns " + c.case_title + " and the undertakings involved."},
            {2, "The relevant market for " + c.case_title + " was defined as the supply of the products concerned "
                "in the European Economic Area."},
            {3, "The infringement in " + c.case_title + " lasted several years. Fines were imposed on the parties."},
        };
        index_case(c, chunk_document(pages, c.case_id, c.pdf_url, ChunkingOptions{24, 4, true}), store, embed);
    }
    titles = TitleIndex::build(cases, embed, &store);
    AgentTools tools;
    tools.cases = &cases;
    tools.titles = &titles;
    tools.store = &store;
    tools.embed = &embed;
    tools.tool_chat = &tool_chat;
    tools.research = &research;
    tools.web = &web;
    tools.documents = &documents;
    tools.vocab = &vocab();
    tools.prompts = AgentPrompts::from_assets(assets());
    tools.official_domains = assets().official_domains();
    tools.allowed_domains = assets().allowed_domains();
    agent = std::make_unique<Agent>(std::move(tools), agent_chat, options);
}

std::string act(const std::string& tool, const nlohmann::json& arguments, const std::string& thought) {
    return nlohmann::json{{"thought", thought.empty() ? "Next I use " + tool + "." : thought},
                          {"action", {{"tool", tool}, {"arguments", arguments}}}}
        .dump();
}

std::string final_reply(const std::string& text, const std::string& thought) {
    return nlohmann::json{{"thought", thought.empty() ? "I can answer now." : thought}, {"final", text}}.dump();
}

// ---------------------------------------------------------------------------

namespace {

Error scripted_error(const nlohmann::json& j) {
    auto code = j.value("error", std::string("provider_unavailable"));
    if (code == "provider_timeout") return Error(ErrorCode::kProviderTimeout, "scripted timeout");
    if (code == "provider_rejected") return Error(ErrorCode::kProviderRejected, "scripted rejection");
    return Error(ErrorCode::kProviderUnavailable, "scripted outage");
}

bool is_error_entry(const nlohmann::json& j) { return j.is_object() && j.contains("error") && j.size() == 1; }

std::string as_reply(const nlohmann::json& j) { return j.is_string() ? j.get<std::string>() : j.dump(); }

std::string outcome_name(TurnOutcome::Kind k) {
    switch (k) {
        case TurnOutcome::Kind::kAnswer: return "answer";
        case TurnOutcome::Kind::kClarification: return "clarification";
        case TurnOutcome::Kind::kError: return "error";
    }
    return "error";
}

template <typename T>
std::string show(const std::vector<T>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + v[i];
    return s + "]";
}

}  // namespace

std::vector<nlohmann::json> load_scenarios() {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(fixture("scenarios"))) {
        if (e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<nlohmann::json> out;
    for (const auto& f : files) {
        std::ifstream in(f);
        out.push_back(nlohmann::json::parse(in));
    }
    return out;
}

ScenarioReport run_scenario(const nlohmann::json& scenario) {
    ScenarioReport report;
    report.name = scenario.at("name").get<std::string>();
    AgentOptions options;
    options.max_steps = scenario.value("max_steps", std::size_t{8});
    Harness h(scenario_dataset(), options);
    const auto documents = scenario.value("documents", nlohmann::json::object());
    for (const auto& [url, pages] : documents.items()) {
        h.documents.add(url, make_pdf(pages.get<std::vector<std::string>>()));
    }
    SessionState session;
    session.session_id = report.name;
    for (const auto& id : scenario.value("session_cases", std::vector<std::string>{})) {
        const auto* c = h.cases.find(id);
        if (!c) {
            report.failures.push_back("unknown session case " + id);
            return report;
        }
        session.add_case(*c);
    }

    std::size_t turn_no = 0;
    for (const auto& turn : scenario.at("turns")) {
        ++turn_no;
        auto where = report.name + " turn " + std::to_string(turn_no) + ": ";
        for (const auto& r : turn.value("agent", nlohmann::json::array())) {
            if (is_error_entry(r)) h.agent_chat.push(scripted_error(r));
            else h.agent_chat.push(as_reply(r));
        }
        for (const auto& r : turn.value("tool_chat", nlohmann::json::array())) {
            if (is_error_entry(r)) h.tool_chat.push(scripted_error(r));
            else h.tool_chat.push(as_reply(r));
        }
        for (const auto& r : turn.value("research", nlohmann::json::array())) {
            if (is_error_entry(r)) {
                h.research.push(scripted_error(r));
                continue;
            }
            ResearchResult rr;
            rr.answer_text = r.value("answer_text", std::string{});
            rr.source_urls = r.value("source_urls", std::vector<std::string>{});
            if (r.contains("candidate_cases")) rr.candidate_cases = r.at("candidate_cases").get<std::vector<std::string>>();
            h.research.push(std::move(rr));
        }
        for (const auto& r : turn.value("web", nlohmann::json::array())) {
            std::vector<WebResult> results;
            for (const auto& w : r) {
                results.push_back({w.value("title", std::string{}), w.value("url", std::string{}),
                                   w.value("description", std::string{})});
            }
            h.web.push(std::move(results));
        }

        TurnReport tr;
        for (const auto& r : turn.value("research", nlohmann::json::array())) {
            for (const auto& u : r.value("source_urls", std::vector<std::string>{})) tr.grounding.emplace_back(u, std::nullopt);
        }
        try {
            auto outcome = h.agent->handle_message(session, turn.at("user").get<std::string>());
            for (auto t : outcome.tool_sequence()) tr.tools.push_back(to_string(t));
            tr.outcome = outcome_name(outcome.kind);
            tr.answer = outcome.answer;
            tr.clarification = outcome.clarification;
        } catch (const std::exception& e) {
            report.failures.push_back(where + "threw " + e.what());
            report.turns.push_back(tr);
            return report;
        }
        for (const auto& e : h.store.scan(kChunkCollection)) {
            tr.grounding.emplace_back(e.payload.at("source_url").get<std::string>(), e.payload.at("page").get<int>());
        }
        // a case listing cites the decision documents of the cases found
        for (const auto& c : session.session_cases) {
            if (!c.pdf_url.empty()) tr.grounding.emplace_back(c.pdf_url, std::nullopt);
        }
        tr.status = to_string(session.status);
        if (session.active_case) tr.active_case = session.active_case->case_id;

        const auto& expect = turn.at("expect");
        if (expect.contains("tools")) {
            auto want = expect.at("tools").get<std::vector<std::string>>();
            if (want != tr.tools) report.failures.push_back(where + "tools " + show(tr.tools) + ", expected " + show(want));
        }
        if (expect.contains("outcome") && expect.at("outcome").get<std::string>() != tr.outcome) {
            report.failures.push_back(where + "outcome " + tr.outcome + ", expected " + expect.at("outcome").get<std::string>());
        }
        if (expect.contains("status") && expect.at("status").get<std::string>() != tr.status) {
            report.failures.push_back(where + "status " + tr.status + ", expected " + expect.at("status").get<std::string>());
        }
        if (expect.contains("active_case")) {
            auto want = expect.at("active_case").get<std::string>();
            if (tr.active_case != want) {
                report.failures.push_back(where + "active case " + tr.active_case.value_or("(none)") + ", expected " + want);
            }
        }
        if (expect.contains("session_cases")) {
            std::vector<std::string> ids;
            for (const auto& c : session.session_cases) ids.push_back(c.case_id);
            auto want = expect.at("session_cases").get<std::vector<std::string>>();
            if (ids != want) report.failures.push_back(where + "session cases " + show(ids) + ", expected " + show(want));
        }
        if (expect.contains("answer_contains")) {
            auto needle = expect.at("answer_contains").get<std::string>();
            if (!tr.answer || tr.answer->text.find(needle) == std::string::npos) {
                report.failures.push_back(where + "answer lacks \"" + needle + "\"");
            }
        }
        if (expect.contains("clarification_contains")) {
            auto needle = expect.at("clarification_contains").get<std::string>();
            if (tr.clarification.find(needle) == std::string::npos) {
                report.failures.push_back(where + "clarification lacks \"" + needle + "\": " + tr.clarification);
            }
        }
        if (expect.contains("citations")) {
            auto want = expect.at("citations").get<std::size_t>();
            auto got = tr.answer ? tr.answer->citations.size() : 0;
            if (got != want) {
                report.failures.push_back(where + std::to_string(got) + " citations, expected " + std::to_string(want));
            }
        }
        if (h.agent_chat.remaining() != 0) {
            report.failures.push_back(where + std::to_string(h.agent_chat.remaining()) + " agent replies left unused");
        }
        if (h.tool_chat.remaining() != 0) {
            report.failures.push_back(where + std::to_string(h.tool_chat.remaining()) + " tool replies left unused");
        }
        report.turns.push_back(std::move(tr));
    }
    return report;
}

}  // namespace lexagent::testing
