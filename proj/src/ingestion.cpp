#include "lexagent/ingestion.hpp"

#include <algorithm>
#include <fstream>
#include <random>
#include <regex>
#include <sstream>

#include <spdlog/spdlog.h>

#include "lexagent/error.hpp"
#include "lexagent/pdf.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::string json_text(const nlohmann::json& j, std::initializer_list<const char*> keys) {
    for (const char* key : keys) {
        if (!j.contains(key)) continue;
        const auto& v = j.at(key);
        if (v.is_string()) return v.get<std::string>();
        if (v.is_number()) return v.dump();
        if (v.is_array()) {
            std::string joined;
            for (const auto& item : v) {
                if (!item.is_string()) continue;
                if (!joined.empty()) joined += ", ";
                joined += item.get<std::string>();
            }
            return joined;
        }
    }
    return {};
}

std::string slurp(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<nlohmann::json> read_json_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::kNotFound, "cannot open " + file.string());
    std::vector<nlohmann::json> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        auto parsed = nlohmann::json::parse(line, nullptr, false);
        if (parsed.is_discarded()) {
            throw Error(ErrorCode::kInvalidValue, file.string() + ":" + std::to_string(line_no) + ": invalid JSON");
        }
        out.push_back(std::move(parsed));
    }
    return out;
}

bool is_english(std::string_view language) {
    auto l = to_lower_ascii(trim(language));
    return l == "english" || l == "en" || l == "eng";
}

std::string canonical_language(std::string_view language) {
    auto l = to_lower_ascii(trim(language));
    if (l == "en" || l == "eng" || l == "english") return "English";
    if (l == "de" || l == "deu" || l == "ger" || l == "german") return "German";
    return trim(language);
}

UrlGrammar::Field parse_field(const std::string& name) {
    if (name == "case_id") return UrlGrammar::Field::kCaseId;
    if (name == "violation") return UrlGrammar::Field::kViolation;
    if (name == "year") return UrlGrammar::Field::kYear;
    if (name == "language") return UrlGrammar::Field::kLanguage;
    throw Error(ErrorCode::kConfig, "unknown URL grammar field: " + name);
}

std::string strip_scheme_and_www(std::string_view url) {
    std::string u(url);
    if (auto pos = u.find("://"); pos != std::string::npos) u = u.substr(pos + 3);
    if (starts_with_ci(u, "www.")) u = u.substr(4);
    return u;
}

std::string strip_query(std::string_view s) {
    auto end = s.find_first_of("?#");
    return std::string(s.substr(0, end));
}

}  // namespace

void from_json(const nlohmann::json& j, RawEuRecord& r) {
    r.case_id = json_text(j, {"case_id", "case_number", "id"});
    r.case_title = json_text(j, {"case_title", "title", "description"});
    r.violation = json_text(j, {"violation", "legal_basis"});
    r.sector = json_text(j, {"sector", "economic_activity"});
    r.companies = json_text(j, {"companies", "undertakings"});
    r.pdf_url = json_text(j, {"pdf_url", "decision_link", "link"});
    r.language = json_text(j, {"language", "lang"});
    r.decision_date = json_text(j, {"decision_date", "date"});
    r.endpoint = json_text(j, {"endpoint", "instrument"});
}

std::vector<RawEuRecord> read_eu_snapshot(const std::filesystem::path& file) {
    auto text = slurp(file);
    auto whole = nlohmann::json::parse(text, nullptr, false);
    std::vector<nlohmann::json> items;
    if (!whole.is_discarded() && whole.is_array()) {
        items.assign(whole.begin(), whole.end());
    } else if (!whole.is_discarded() && whole.is_object() && (whole.contains("records") || whole.contains("cases"))) {
        const auto& arr = whole.contains("records") ? whole.at("records") : whole.at("cases");
        items.assign(arr.begin(), arr.end());
    } else {
        items = read_json_lines(file);
    }
    std::vector<RawEuRecord> out;
    out.reserve(items.size());
    for (const auto& item : items) out.push_back(item.get<RawEuRecord>());
    return out;
}

CleaningReport& CleaningReport::operator+=(const CleaningReport& o) {
    input += o.input;
    kept += o.kept;
    dropped_missing_id += o.dropped_missing_id;
    dropped_empty_link += o.dropped_empty_link;
    dropped_non_english += o.dropped_non_english;
    dropped_unknown_violation += o.dropped_unknown_violation;
    dropped_invalid_date += o.dropped_invalid_date;
    aliases_normalized += o.aliases_normalized;
    missing_sector.insert(missing_sector.end(), o.missing_sector.begin(), o.missing_sector.end());
    return *this;
}

nlohmann::json CleaningReport::to_json() const {
    return {{"input", input},
            {"kept", kept},
            {"dropped_missing_id", dropped_missing_id},
            {"dropped_empty_link", dropped_empty_link},
            {"dropped_non_english", dropped_non_english},
            {"dropped_unknown_violation", dropped_unknown_violation},
            {"dropped_invalid_date", dropped_invalid_date},
            {"aliases_normalized", aliases_normalized},
            {"missing_sector", missing_sector}};
}

CaseDate parse_source_date(std::string_view raw) {
    auto t = trim(raw);
    static const std::regex dotted(R"(^(\d{1,2})[./](\d{1,2})[./](\d{4})$)");
    static const std::regex datetime(R"(^(\d{4}-\d{2}-\d{2})[T ].*$)");
    std::smatch m;
    if (std::regex_match(t, m, dotted)) {
        char buf[16];
        std::snprintf(buf, sizeof buf, "%s-%02d-%02d", m[3].str().c_str(), std::stoi(m[2].str()),
                      std::stoi(m[1].str()));
        return CaseDate::parse_iso(buf);
    }
    if (std::regex_match(t, m, datetime)) return CaseDate::parse_iso(m[1].str());
    return CaseDate::parse_iso(t);
}

CleanedCases clean_eu_cases(const std::vector<RawEuRecord>& raw, const ViolationSchema& schema,
                            const SectorVocabulary* sectors) {
    CleanedCases out;
    auto& report = out.report;
    report.input = raw.size();
    for (const auto& r : raw) {
        auto case_id = trim(r.case_id);
        auto link = trim(r.pdf_url);
        if (case_id.empty()) {
            ++report.dropped_missing_id;
            continue;
        }
        if (link.empty() || !looks_like_url(link)) {
            ++report.dropped_empty_link;
            continue;
        }
        if (!is_english(r.language)) {
            ++report.dropped_non_english;
            continue;
        }
        CaseRecord c;
        try {
            c.violation = normalize_violation(r.violation, schema);
        } catch (const Error&) {
            ++report.dropped_unknown_violation;
            continue;
        }
        if (*c.violation != trim(r.violation)) ++report.aliases_normalized;
        try {
            c.decision_date = parse_source_date(r.decision_date);
        } catch (const Error&) {
            ++report.dropped_invalid_date;
            continue;
        }
        c.case_id = std::move(case_id);
        c.case_title = trim(r.case_title);
        c.jurisdiction = Jurisdiction::kEU;
        if (auto s = trim(r.sector); !s.empty() && (!sectors || sectors->canonicalize(s))) {
            c.sector = sectors ? *sectors->canonicalize(s) : s;
        } else {
            report.missing_sector.push_back(c.case_id);
        }
        c.companies = parse_company_list(r.companies);
        c.pdf_url = std::move(link);
        c.language = "English";
        out.cases.push_back(std::move(c));
    }
    report.kept = out.cases.size();
    return out;
}

// ---------------------------------------------------------------------------

UrlGrammar UrlGrammar::from_json(const nlohmann::json& j) {
    UrlGrammar g;
    g.prefix_ = strip_scheme_and_www(j.at("prefix").get<std::string>());
    if (!g.prefix_.empty() && g.prefix_.back() != '/') g.prefix_ += '/';
    g.render_scheme_ = j.value("render_scheme", std::string("https://"));
    bool has[5] = {};
    for (const auto& s : j.at("segments")) {
        Segment seg;
        auto kind = s.value("kind", std::string("literal"));
        if (kind == "literal") {
            seg.kind = Kind::kLiteral;
            seg.literal = s.at("value").get<std::string>();
        } else if (kind == "map") {
            seg.kind = Kind::kMap;
            seg.map = s.at("map").get<std::map<std::string, std::string>>();
        } else if (kind == "pattern") {
            seg.kind = Kind::kPattern;
            seg.pattern = s.at("pattern").get<std::string>();
            std::regex validate(seg.pattern);  // throws on bad syntax
            (void)validate;
        } else {
            throw Error(ErrorCode::kConfig, "unknown URL grammar segment kind: " + kind);
        }
        if (seg.kind != Kind::kLiteral) {
            seg.field = parse_field(s.at("field").get<std::string>());
            has[static_cast<int>(seg.field)] = true;
        }
        seg.render_suffix = s.value("render_suffix", std::string{});
        g.segments_.push_back(std::move(seg));
    }
    for (auto f : {Field::kCaseId, Field::kViolation, Field::kYear, Field::kLanguage}) {
        if (!has[static_cast<int>(f)]) throw Error(ErrorCode::kConfig, "URL grammar does not cover all four fields");
    }
    return g;
}

UrlGrammar UrlGrammar::load(const std::filesystem::path& file) {
    auto j = nlohmann::json::parse(slurp(file), nullptr, false);
    if (j.is_discarded()) throw Error(ErrorCode::kConfig, "invalid JSON in " + file.string());
    return from_json(j);
}

BkaLinkMetadata parse_bka_url(std::string_view url, const UrlGrammar& grammar) {
    auto bare = strip_query(strip_scheme_and_www(trim(url)));
    if (bare.rfind(grammar.prefix(), 0) != 0) {
        throw Error(ErrorCode::kUnrecognizedUrl, "missing prefix " + grammar.prefix() + ": " + std::string(url));
    }
    auto rest = bare.substr(grammar.prefix().size());
    while (!rest.empty() && rest.back() == '/') rest.pop_back();
    auto parts = split(rest, '/');
    if (parts.size() != grammar.segments().size()) {
        throw Error(ErrorCode::kUnrecognizedUrl, "expected " + std::to_string(grammar.segments().size()) +
                                                     " path segments: " + std::string(url));
    }
    BkaLinkMetadata meta;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const auto& seg = grammar.segments()[i];
        const auto& part = parts[i];
        std::string value;
        switch (seg.kind) {
            case UrlGrammar::Kind::kLiteral:
                if (part != seg.literal) {
                    throw Error(ErrorCode::kUnrecognizedUrl, "segment '" + part + "' != '" + seg.literal + "'");
                }
                continue;
            case UrlGrammar::Kind::kMap: {
                auto it = seg.map.find(part);
                if (it == seg.map.end()) throw Error(ErrorCode::kUnrecognizedUrl, "unmapped segment '" + part + "'");
                value = it->second;
                break;
            }
            case UrlGrammar::Kind::kPattern: {
                std::smatch m;
                if (!std::regex_match(part, m, std::regex(seg.pattern)) || m.size() < 2) {
                    throw Error(ErrorCode::kUnrecognizedUrl, "segment '" + part + "' does not match " + seg.pattern);
                }
                value = m[1].str();
                break;
            }
        }
        switch (seg.field) {
            case UrlGrammar::Field::kCaseId: meta.case_id = value; break;
            case UrlGrammar::Field::kViolation: meta.violation = value; break;
            case UrlGrammar::Field::kLanguage: meta.language = value; break;
            case UrlGrammar::Field::kYear:
                try {
                    meta.year = std::stoi(value);
                } catch (const std::exception&) {
                    throw Error(ErrorCode::kUnrecognizedUrl, "year segment '" + value + "'");
                }
                break;
            case UrlGrammar::Field::kNone: break;
        }
    }
    return meta;
}

std::string render_bka_url(const UrlGrammar& grammar, const BkaLinkMetadata& meta) {
    std::string url = grammar.render_scheme() + grammar.prefix();
    bool first = true;
    for (const auto& seg : grammar.segments()) {
        if (!first) url += '/';
        first = false;
        std::string value;
        switch (seg.field) {
            case UrlGrammar::Field::kCaseId: value = meta.case_id; break;
            case UrlGrammar::Field::kViolation: value = meta.violation; break;
            case UrlGrammar::Field::kLanguage: value = meta.language; break;
            case UrlGrammar::Field::kYear: value = std::to_string(meta.year); break;
            case UrlGrammar::Field::kNone: break;
        }
        switch (seg.kind) {
            case UrlGrammar::Kind::kLiteral: url += seg.literal; break;
            case UrlGrammar::Kind::kMap: {
                auto it = std::find_if(seg.map.begin(), seg.map.end(), [&](const auto& kv) { return kv.second == value; });
                if (it == seg.map.end()) throw Error(ErrorCode::kInvalidValue, "grammar cannot express '" + value + "'");
                url += it->first;
                break;
            }
            case UrlGrammar::Kind::kPattern: url += value + seg.render_suffix; break;
        }
    }
    return url;
}

BkaFields extract_bka_fields(std::string_view decision_text, ChatProvider& chat, const SectorVocabulary& sectors,
                             const std::string& prompt_template) {
    if (trim(decision_text).empty()) throw Error(ErrorCode::kInvalidArgument, "decision text is empty");
    std::string sector_list;
    for (const auto& s : sectors.sections()) sector_list += s + "\n";
    std::vector<ChatMessage> messages{
        {"user", fill_template(prompt_template, {{"document", std::string(decision_text)}, {"sectors", sector_list}})}};
    std::string problem;
    for (int attempt = 0; attempt < 2; ++attempt) {
        auto reply = chat.complete(messages, kExtractionParams);
        auto parsed = extract_json_object(reply);
        if (!parsed) {
            problem = "The reply was not a JSON object.";
        } else {
            BkaFields fields;
            const auto& j = *parsed;
            if (j.contains("case_title") && j.at("case_title").is_string()) fields.case_title = trim(j.at("case_title").get<std::string>());
            std::string raw_sector;
            if (j.contains("sector") && j.at("sector").is_string()) raw_sector = j.at("sector").get<std::string>();
            if (j.contains("companies")) {
                const auto& c = j.at("companies");
                if (c.is_array()) {
                    for (const auto& name : c) {
                        if (!name.is_string()) continue;
                        auto t = trim(name.get<std::string>());
                        if (!t.empty()) fields.companies.push_back(std::move(t));
                    }
                } else if (c.is_string()) {
                    fields.companies = parse_company_list(c.get<std::string>());
                }
            }
            auto sector = sectors.canonicalize(raw_sector);
            if (fields.case_title.empty()) {
                problem = "The field case_title is missing.";
            } else if (!sector) {
                problem = "The sector '" + raw_sector + "' is not one of the NACE sections.";
            } else {
                fields.sector = *sector;
                return fields;
            }
        }
        spdlog::debug("bka extraction attempt {} rejected: {}", attempt + 1, problem);
        messages.push_back({"assistant", reply});
        std::string allowed;
        for (const auto& s : sectors.sections()) allowed += "\n- " + s;
        messages.push_back({"user", problem +
                                        " Answer again with a JSON object holding case_title, sector and companies."
                                        " The sector must be exactly one of:" + allowed});
    }
    throw Error(ErrorCode::kExtractionFailed, problem);
}

// ---------------------------------------------------------------------------

std::string SnapshotDocumentSource::file_name_for(std::string_view url) {
    auto bare = strip_query(url);
    while (!bare.empty() && bare.back() == '/') bare.pop_back();
    auto slash = bare.rfind('/');
    return slash == std::string::npos ? bare : bare.substr(slash + 1);
}

std::string SnapshotDocumentSource::fetch(const std::string& url) {
    auto name = file_name_for(url);
    auto path = dir_ / name;
    if (name.empty() || !std::filesystem::is_regular_file(path)) {
        throw Error(ErrorCode::kNotFound, "no snapshot for " + url);
    }
    return slurp(path);
}

std::string InMemoryDocumentSource::fetch(const std::string& url) {
    auto it = docs_.find(url);
    if (it == docs_.end()) throw Error(ErrorCode::kNotFound, "no document for " + url);
    return it->second;
}

std::string leading_pages_text(const std::string& pdf_bytes, std::size_t max_pages) {
    auto pages = extract_pdf_pages(pdf_bytes);
    std::string text;
    for (std::size_t i = 0; i < pages.size() && (max_pages == 0 || i < max_pages); ++i) {
        if (!text.empty()) text += "\n\n";
        text += pages[i].text;
    }
    return text;
}

CaseRecord build_bka_record(const std::string& url, const UrlGrammar& grammar, DocumentSource& documents,
                            ChatProvider& chat, const SectorVocabulary& sectors, const std::string& prompt_template,
                            std::size_t max_pages) {
    auto meta = parse_bka_url(url, grammar);
    auto text = leading_pages_text(documents.fetch(url), max_pages);
    auto fields = extract_bka_fields(text, chat, sectors, prompt_template);
    CaseRecord c;
    c.case_id = meta.case_id;
    c.case_title = fields.case_title;
    c.jurisdiction = Jurisdiction::kGermany;
    c.violation = meta.violation;
    c.sector = fields.sector;
    c.companies = fields.companies;
    c.pdf_url = trim(url);
    c.language = canonical_language(meta.language);
    c.decision_date = CaseDate{meta.year, 0, 0};
    return c;
}

// ---------------------------------------------------------------------------

CaseStore::CaseStore(std::vector<CaseRecord> records) {
    for (auto& r : records) add(std::move(r));
}

void CaseStore::add(CaseRecord record) {
    if (record.case_id.empty()) throw Error(ErrorCode::kInvalidValue, "empty case_id");
    auto [it, inserted] = by_id_.emplace(record.case_id, records_.size());
    if (!inserted) throw Error(ErrorCode::kDuplicateCaseId, record.case_id);
    records_.push_back(std::move(record));
}

const CaseRecord* CaseStore::find(std::string_view case_id) const {
    auto it = by_id_.find(std::string(case_id));
    return it == by_id_.end() ? nullptr : &records_[it->second];
}

CaseStore merge_datasets(const std::vector<CaseRecord>& eu, const std::vector<CaseRecord>& de) {
    CaseStore store;
    for (const auto& c : eu) store.add(c);
    for (const auto& c : de) store.add(c);
    return store;
}

void write_dataset(const std::filesystem::path& file, const std::vector<CaseRecord>& cases) {
    std::ofstream out(file, std::ios::trunc);
    if (!out) throw Error(ErrorCode::kStorageUnavailable, "cannot write " + file.string());
    for (const auto& c : cases) out << nlohmann::json(c).dump() << '\n';
    if (!out) throw Error(ErrorCode::kStorageUnavailable, "write failed: " + file.string());
}

std::vector<CaseRecord> read_dataset(const std::filesystem::path& file) {
    std::vector<CaseRecord> out;
    for (const auto& j : read_json_lines(file)) out.push_back(j.get<CaseRecord>());
    return out;
}

Overrides load_overrides(const std::filesystem::path& file) {
    Overrides out;
    for (auto& j : read_json_lines(file)) {
        auto id = j.at("case_id").get<std::string>();
        out[id] = std::move(j);
    }
    return out;
}

std::size_t apply_overrides(std::vector<CaseRecord>& cases, const Overrides& overrides, const Vocabularies& vocab) {
    std::size_t changed = 0;
    for (auto& c : cases) {
        auto it = overrides.find(c.case_id);
        if (it == overrides.end()) continue;
        nlohmann::json merged = c;
        for (const auto& [key, value] : it->second.items()) merged[key] = value;
        auto updated = merged.get<CaseRecord>();
        if (updated.sector) {
            auto canonical = vocab.sectors.canonicalize(*updated.sector);
            if (!canonical) throw Error(ErrorCode::kInvalidValue, c.case_id + ": sector " + *updated.sector);
            updated.sector = *canonical;
        }
        if (updated.violation) updated.violation = normalize_violation(*updated.violation, vocab.violations);
        c = std::move(updated);
        ++changed;
    }
    return changed;
}

std::vector<CaseRecord> stratified_sample(const std::vector<CaseRecord>& cases, std::size_t n, std::uint64_t seed) {
    std::map<std::string, std::vector<std::size_t>> strata;
    for (std::size_t i = 0; i < cases.size(); ++i) {
        const auto& c = cases[i];
        std::string key = std::string(c.jurisdiction ? to_string(*c.jurisdiction) : "?") + "|" + c.violation.value_or("?");
        strata[key].push_back(i);
    }
    std::mt19937_64 rng(seed);
    for (auto& [key, members] : strata) std::shuffle(members.begin(), members.end(), rng);
    // Round-robin over strata keeps every stratum represented before any repeats.
    std::vector<std::size_t> picked;
    for (std::size_t round = 0; picked.size() < std::min(n, cases.size()); ++round) {
        for (auto& [key, members] : strata) {
            if (round < members.size() && picked.size() < n) picked.push_back(members[round]);
        }
    }
    std::sort(picked.begin(), picked.end());
    std::vector<CaseRecord> out;
    for (auto i : picked) out.push_back(cases[i]);
    return out;
}

}  // namespace lexagent
