#pragma once

#include <compare>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lexagent {

enum class Jurisdiction { kEU, kGermany };

std::string_view to_string(Jurisdiction j);
std::optional<Jurisdiction> parse_jurisdiction(std::string_view s);

/// ISO-8601 calendar date with reduced precision allowed ("2020", "2020-05",
/// "2020-05-17"). month/day of 0 mean "not known".
struct CaseDate {
    int year = 0;
    int month = 0;
    int day = 0;

    static CaseDate parse_iso(std::string_view s);
    std::string iso() const;

    auto operator<=>(const CaseDate&) const = default;
};

/// One case of the combined dataset. Web-origin partial records leave
/// unknown fields empty instead of guessing them.
struct CaseRecord {
    std::string case_id;
    std::string case_title;
    std::optional<Jurisdiction> jurisdiction;
    std::optional<std::string> violation;
    std::optional<std::string> sector;
    std::vector<std::string> companies;
    std::string pdf_url;
    std::optional<std::string> language;
    std::optional<CaseDate> decision_date;

    /// All nine fields present.
    bool complete() const;

    bool operator==(const CaseRecord&) const = default;
};

void to_json(nlohmann::json& j, const CaseRecord& c);
void from_json(const nlohmann::json& j, CaseRecord& c);

class ViolationSchema {
public:
    ViolationSchema() = default;
    ViolationSchema(std::set<std::string> canonical, std::map<std::string, std::string> aliases);

    /// canonical: one value per line; aliases: "alias<TAB>canonical" per line.
    /// Blank lines and lines starting with '#' are ignored.
    static ViolationSchema load(const std::filesystem::path& canonical_file,
                                const std::filesystem::path& alias_file);

    const std::set<std::string>& canonical_values() const { return canonical_; }
    const std::map<std::string, std::string>& alias_map() const { return aliases_; }
    bool contains(std::string_view v) const { return canonical_.count(std::string(v)) > 0; }

private:
    std::set<std::string> canonical_;
    std::map<std::string, std::string> aliases_;
};

/// Throws Error{kUnknownViolation} when raw is neither alias nor canonical.
std::string normalize_violation(std::string_view raw, const ViolationSchema& schema);

/// NACE top-level sections, canonical form "K – Financial and insurance activities".
class SectorVocabulary {
public:
    SectorVocabulary() = default;
    explicit SectorVocabulary(std::vector<std::string> sections);
    static SectorVocabulary load(const std::filesystem::path& file);

    const std::vector<std::string>& sections() const { return sections_; }

    /// Accepts the canonical string, the bare section code, or "CODE - Name"
    /// with an ASCII hyphen. Returns the canonical string.
    std::optional<std::string> canonicalize(std::string_view raw) const;

private:
    std::vector<std::string> sections_;
    std::map<std::string, std::string> by_code_;
};

struct Vocabularies {
    ViolationSchema violations;
    SectorVocabulary sectors;

    /// Expects violations.txt, violation_aliases.tsv, nace_sections.txt in dir.
    static Vocabularies load(const std::filesystem::path& dir);
};

/// Splits on commas, trims, drops empty segments, keeps order.
std::vector<std::string> parse_company_list(std::string_view raw);

/// Comparison key for company names: trimmed, ASCII lower-cased.
std::string company_key(std::string_view name);

/// Every entry of `needles` appears in `haystack` under company_key.
bool companies_subset(const std::vector<std::string>& needles, const std::vector<std::string>& haystack);

struct QueryVector {
    std::optional<std::string> case_id;
    std::optional<std::string> case_title;
    std::optional<Jurisdiction> jurisdiction;
    std::optional<std::string> violation;
    std::optional<std::string> sector;
    std::optional<std::vector<std::string>> companies;

    bool is_empty() const;
    std::size_t dimension_count() const;

    bool operator==(const QueryVector&) const = default;
};

nlohmann::json to_json(const QueryVector& qv);

/// Builds a QueryVector from a loosely-typed object (model output or API
/// parameters). Constrained dimensions outside their vocabulary are dropped
/// and their names appended to `dropped`; violation aliases are normalized.
QueryVector query_vector_from_json(const nlohmann::json& j, const Vocabularies& vocab,
                                   std::vector<std::string>* dropped = nullptr);

/// Strict variant: throws Error{kInvalidValue} on the first out-of-vocabulary value.
void validate_query_vector(const QueryVector& qv, const Vocabularies& vocab);

enum class EmbeddingProfile { kChunk, kTitle };

std::string_view to_string(EmbeddingProfile p);
std::optional<EmbeddingProfile> parse_profile(std::string_view s);

struct Embedding {
    std::vector<double> values;
    EmbeddingProfile profile = EmbeddingProfile::kChunk;

    bool operator==(const Embedding&) const = default;
};

}  // namespace lexagent
