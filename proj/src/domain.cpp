#include "lexagent/domain.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::vector<std::string> read_lines(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open " + file.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        lines.push_back(line);
    }
    return lines;
}

int parse_int(std::string_view s) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw Error(ErrorCode::kInvalidValue, "not a number: " + std::string(s));
    }
    return v;
}

bool all_digits(std::string_view s) {
    return !s.empty() && std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
}

int days_in_month(int year, int month) {
    static constexpr int kDays[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
    bool leap = (year % 4 == 0 && year % 100 != 0) || year % 400 == 0;
    return month == 2 && leap ? 29 : kDays[month - 1];
}

// Splits "K – Name" / "K - Name" / "K" into its section code.
std::string sector_code(std::string_view raw) {
    auto t = trim(raw);
    std::size_t i = 0;
    while (i < t.size() && std::isalpha(static_cast<unsigned char>(t[i]))) ++i;
    return t.substr(0, i);
}

}  // namespace

std::string_view to_string(Jurisdiction j) { return j == Jurisdiction::kEU ? "EU" : "Germany"; }

std::optional<Jurisdiction> parse_jurisdiction(std::string_view s) {
    auto t = to_lower_ascii(trim(s));
    if (t == "eu" || t == "european union") return Jurisdiction::kEU;
    if (t == "germany" || t == "de") return Jurisdiction::kGermany;
    return std::nullopt;
}

CaseDate CaseDate::parse_iso(std::string_view s) {
    auto t = trim(s);
    auto parts = split(t, '-');
    if (parts.empty() || parts.size() > 3 || parts[0].size() != 4 || !all_digits(parts[0])) {
        throw Error(ErrorCode::kInvalidValue, "not an ISO-8601 date: " + t);
    }
    CaseDate d;
    d.year = parse_int(parts[0]);
    if (parts.size() >= 2) {
        if (parts[1].size() != 2 || !all_digits(parts[1])) throw Error(ErrorCode::kInvalidValue, "bad month: " + t);
        d.month = parse_int(parts[1]);
        if (d.month < 1 || d.month > 12) throw Error(ErrorCode::kInvalidValue, "bad month: " + t);
    }
    if (parts.size() == 3) {
        if (parts[2].size() != 2 || !all_digits(parts[2])) throw Error(ErrorCode::kInvalidValue, "bad day: " + t);
        d.day = parse_int(parts[2]);
        if (d.day < 1 || d.day > days_in_month(d.year, d.month)) {
            throw Error(ErrorCode::kInvalidValue, "bad day: " + t);
        }
    }
    return d;
}

std::string CaseDate::iso() const {
    char buf[16];
    if (month == 0) {
        std::snprintf(buf, sizeof buf, "%04d", year);
    } else if (day == 0) {
        std::snprintf(buf, sizeof buf, "%04d-%02d", year, month);
    } else {
        std::snprintf(buf, sizeof buf, "%04d-%02d-%02d", year, month, day);
    }
    return buf;
}

bool CaseRecord::complete() const {
    return !case_id.empty() && !case_title.empty() && jurisdiction && violation && sector &&
           !pdf_url.empty() && language && decision_date;
}

void to_json(nlohmann::json& j, const CaseRecord& c) {
    auto opt = [](const auto& v) -> nlohmann::json { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    j = nlohmann::json{
        {"case_id", c.case_id},
        {"case_title", c.case_title},
        {"jurisdiction", c.jurisdiction ? nlohmann::json(std::string(to_string(*c.jurisdiction))) : nlohmann::json(nullptr)},
        {"violation", opt(c.violation)},
        {"sector", opt(c.sector)},
        {"companies", c.companies},
        {"pdf_url", c.pdf_url},
        {"language", opt(c.language)},
        {"decision_date", c.decision_date ? nlohmann::json(c.decision_date->iso()) : nlohmann::json(nullptr)},
    };
}

void from_json(const nlohmann::json& j, CaseRecord& c) {
    auto opt_string = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
        return j.at(key).get<std::string>();
    };
    c = CaseRecord{};
    c.case_id = j.at("case_id").get<std::string>();
    c.case_title = j.value("case_title", std::string{});
    if (auto js = opt_string("jurisdiction")) {
        c.jurisdiction = parse_jurisdiction(*js);
        if (!c.jurisdiction) throw Error(ErrorCode::kInvalidValue, "jurisdiction " + *js);
    }
    c.violation = opt_string("violation");
    c.sector = opt_string("sector");
    if (j.contains("companies") && !j.at("companies").is_null()) {
        for (const auto& name : j.at("companies")) {
            auto t = trim(name.get<std::string>());
            if (!t.empty()) c.companies.push_back(std::move(t));
        }
    }
    c.pdf_url = j.value("pdf_url", std::string{});
    c.language = opt_string("language");
    if (auto d = opt_string("decision_date")) c.decision_date = CaseDate::parse_iso(*d);
}

ViolationSchema::ViolationSchema(std::set<std::string> canonical, std::map<std::string, std::string> aliases)
    : canonical_(std::move(canonical)), aliases_(std::move(aliases)) {
    for (const auto& [alias, target] : aliases_) {
        if (!canonical_.count(target)) {
            throw Error(ErrorCode::kConfig, "alias '" + alias + "' maps to unknown violation '" + target + "'");
        }
    }
}

ViolationSchema ViolationSchema::load(const std::filesystem::path& canonical_file,
                                      const std::filesystem::path& alias_file) {
    std::set<std::string> canonical;
    for (const auto& line : read_lines(canonical_file)) canonical.insert(trim(line));
    std::map<std::string, std::string> aliases;
    for (const auto& line : read_lines(alias_file)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw Error(ErrorCode::kConfig, "alias line without TAB: " + line);
        aliases.emplace(trim(line.substr(0, tab)), trim(line.substr(tab + 1)));
    }
    return ViolationSchema(std::move(canonical), std::move(aliases));
}

std::string normalize_violation(std::string_view raw, const ViolationSchema& schema) {
    auto key = trim(raw);
    if (auto it = schema.alias_map().find(key); it != schema.alias_map().end()) return it->second;
    if (schema.contains(key)) return key;
    throw Error(ErrorCode::kUnknownViolation, key);
}

SectorVocabulary::SectorVocabulary(std::vector<std::string> sections) : sections_(std::move(sections)) {
    for (const auto& s : sections_) {
        auto code = sector_code(s);
        if (code.empty()) throw Error(ErrorCode::kConfig, "sector without code: " + s);
        by_code_.emplace(code, s);
    }
}

SectorVocabulary SectorVocabulary::load(const std::filesystem::path& file) {
    std::vector<std::string> sections;
    for (const auto& line : read_lines(file)) sections.push_back(trim(line));
    return SectorVocabulary(std::move(sections));
}

std::optional<std::string> SectorVocabulary::canonicalize(std::string_view raw) const {
    auto t = trim(raw);
    auto code = sector_code(t);
    auto it = by_code_.find(code);
    if (it == by_code_.end()) return std::nullopt;
    if (t == code || t == it->second) return it->second;
    // "K - Financial and insurance activities": same name with an ASCII hyphen.
    const std::string& canonical = it->second;
    auto canonical_name = canonical.substr(canonical.find("–") + std::string("–").size());
    auto rest = trim(std::string_view(t).substr(code.size()));
    if (!rest.empty() && (rest[0] == '-' || rest[0] == ':')) rest = trim(rest.substr(1));
    if (to_lower_ascii(rest) == to_lower_ascii(trim(canonical_name))) return canonical;
    return std::nullopt;
}

Vocabularies Vocabularies::load(const std::filesystem::path& dir) {
    return Vocabularies{ViolationSchema::load(dir / "violations.txt", dir / "violation_aliases.tsv"),
                        SectorVocabulary::load(dir / "nace_sections.txt")};
}

std::vector<std::string> parse_company_list(std::string_view raw) {
    std::vector<std::string> out;
    for (const auto& part : split(raw, ',')) {
        auto t = trim(part);
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

std::string company_key(std::string_view name) { return to_lower_ascii(trim(name)); }

bool companies_subset(const std::vector<std::string>& needles, const std::vector<std::string>& haystack) {
    std::set<std::string> keys;
    for (const auto& h : haystack) keys.insert(company_key(h));
    return std::all_of(needles.begin(), needles.end(),
                       [&](const std::string& n) { return keys.count(company_key(n)) > 0; });
}

bool QueryVector::is_empty() const { return dimension_count() == 0; }

std::size_t QueryVector::dimension_count() const {
    return std::size_t(case_id.has_value()) + case_title.has_value() + jurisdiction.has_value() +
           violation.has_value() + sector.has_value() + companies.has_value();
}

nlohmann::json to_json(const QueryVector& qv) {
    nlohmann::json j = nlohmann::json::object();
    if (qv.case_id) j["case_id"] = *qv.case_id;
    if (qv.case_title) j["case_title"] = *qv.case_title;
    if (qv.jurisdiction) j["jurisdiction"] = std::string(to_string(*qv.jurisdiction));
    if (qv.violation) j["violation"] = *qv.violation;
    if (qv.sector) j["sector"] = *qv.sector;
    if (qv.companies) j["companies"] = *qv.companies;
    return j;
}

QueryVector query_vector_from_json(const nlohmann::json& j, const Vocabularies& vocab,
                                   std::vector<std::string>* dropped) {
    QueryVector qv;
    if (!j.is_object()) return qv;
    auto text = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key) || !j.at(key).is_string()) return std::nullopt;
        auto t = trim(j.at(key).get<std::string>());
        if (t.empty()) return std::nullopt;
        return t;
    };
    auto drop = [&](const char* key) {
        if (dropped) dropped->emplace_back(key);
    };
    qv.case_id = text("case_id");
    qv.case_title = text("case_title");
    if (auto v = text("jurisdiction")) {
        qv.jurisdiction = parse_jurisdiction(*v);
        if (!qv.jurisdiction) drop("jurisdiction");
    }
    if (auto v = text("violation")) {
        try {
            qv.violation = normalize_violation(*v, vocab.violations);
        } catch (const Error&) {
            drop("violation");
        }
    }
    if (auto v = text("sector")) {
        qv.sector = vocab.sectors.canonicalize(*v);
        if (!qv.sector) drop("sector");
    }
    if (j.contains("companies")) {
        const auto& c = j.at("companies");
        std::vector<std::string> names;
        if (c.is_array()) {
            for (const auto& item : c) {
                if (!item.is_string()) continue;
                auto t = trim(item.get<std::string>());
                if (!t.empty()) names.push_back(std::move(t));
            }
        } else if (c.is_string()) {
            names = parse_company_list(c.get<std::string>());
        }
        if (!names.empty()) qv.companies = std::move(names);
    }
    return qv;
}

void validate_query_vector(const QueryVector& qv, const Vocabularies& vocab) {
    if (qv.violation && !vocab.violations.contains(*qv.violation)) {
        throw Error(ErrorCode::kInvalidValue, "violation " + *qv.violation);
    }
    if (qv.sector) {
        auto canonical = vocab.sectors.canonicalize(*qv.sector);
        if (!canonical || *canonical != *qv.sector) throw Error(ErrorCode::kInvalidValue, "sector " + *qv.sector);
    }
}

std::string_view to_string(EmbeddingProfile p) { return p == EmbeddingProfile::kChunk ? "chunk" : "title"; }

std::optional<EmbeddingProfile> parse_profile(std::string_view s) {
    if (s == "chunk") return EmbeddingProfile::kChunk;
    if (s == "title") return EmbeddingProfile::kTitle;
    return std::nullopt;
}

}  // namespace lexagent
