#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "lexagent/domain.hpp"
#include "lexagent/providers.hpp"

namespace lexagent {

/// A record as delivered by the antitrust or merger case endpoint. Nothing
/// is guaranteed: links may be empty, violations un-normalized, dates in
/// source formats.
struct RawEuRecord {
    std::string case_id;
    std::string case_title;
    std::string violation;
    std::string sector;
    std::string companies;  // comma-separated
    std::string pdf_url;
    std::string language;
    std::string decision_date;
    std::string endpoint;  // "antitrust" or "merger"
};

void from_json(const nlohmann::json& j, RawEuRecord& r);

/// Accepts a JSON array, an object holding a "records"/"cases" array, or
/// one JSON object per line.
std::vector<RawEuRecord> read_eu_snapshot(const std::filesystem::path& file);

struct CleaningReport {
    std::size_t input = 0;
    std::size_t kept = 0;
    std::size_t dropped_missing_id = 0;
    std::size_t dropped_empty_link = 0;
    std::size_t dropped_non_english = 0;
    std::size_t dropped_unknown_violation = 0;
    std::size_t dropped_invalid_date = 0;
    std::size_t aliases_normalized = 0;
    std::vector<std::string> missing_sector;  // kept, awaiting a manual override

    CleaningReport& operator+=(const CleaningReport& other);
    nlohmann::json to_json() const;
};

struct CleanedCases {
    std::vector<CaseRecord> cases;
    CleaningReport report;
};

/// Keeps English records with a decision link, normalizes violations and
/// companies. Failing records are counted, never fatal. With `sectors`,
/// sectors are canonicalized; unrecognized ones count as missing.
CleanedCases clean_eu_cases(const std::vector<RawEuRecord>& raw, const ViolationSchema& schema,
                            const SectorVocabulary* sectors = nullptr);

/// ISO-8601, ISO date-time, "DD.MM.YYYY" and "DD/MM/YYYY".
CaseDate parse_source_date(std::string_view raw);

// ---------------------------------------------------------------------------
// German decision links
// ---------------------------------------------------------------------------

struct BkaLinkMetadata {
    std::string case_id;
    std::string violation;
    int year = 0;
    std::string language;

    bool operator==(const BkaLinkMetadata&) const = default;
};

/// Ordered path-segment matchers after a fixed prefix. Each segment is a
/// literal, a lookup map, or a regex whose first capture group is the value.
class UrlGrammar {
public:
    enum class Field { kNone, kCaseId, kViolation, kYear, kLanguage };
    enum class Kind { kLiteral, kMap, kPattern };

    struct Segment {
        Field field = Field::kNone;
        Kind kind = Kind::kLiteral;
        std::string literal;
        std::map<std::string, std::string> map;  // segment text -> field value
        std::string pattern;
        std::string render_suffix;
    };

    static UrlGrammar from_json(const nlohmann::json& j);
    static UrlGrammar load(const std::filesystem::path& file);

    const std::string& prefix() const { return prefix_; }
    const std::vector<Segment>& segments() const { return segments_; }
    const std::string& render_scheme() const { return render_scheme_; }

private:
    std::string prefix_;
    std::string render_scheme_ = "https://";
    std::vector<Segment> segments_;
};

/// Throws Error{kUnrecognizedUrl} when the prefix or any segment fails to match.
BkaLinkMetadata parse_bka_url(std::string_view url, const UrlGrammar& grammar);

/// Inverse of parse_bka_url for metadata the grammar can express.
std::string render_bka_url(const UrlGrammar& grammar, const BkaLinkMetadata& meta);

struct BkaFields {
    std::string case_title;
    std::string sector;
    std::vector<std::string> companies;

    bool operator==(const BkaFields&) const = default;
};

/// Few-shot extraction of title, NACE sector and companies from decision
/// text. An unparseable reply or out-of-vocabulary sector gets one corrective
/// re-prompt; a second failure throws Error{kExtractionFailed}.
BkaFields extract_bka_fields(std::string_view decision_text, ChatProvider& chat, const SectorVocabulary& sectors,
                             const std::string& prompt_template);

// ---------------------------------------------------------------------------
// Documents
// ---------------------------------------------------------------------------

class DocumentSource {
public:
    virtual ~DocumentSource() = default;
    /// Raw bytes of the document behind `url`. Throws Error{kNotFound}.
    virtual std::string fetch(const std::string& url) = 0;
};

/// Serves previously downloaded documents from a directory; the file name is
/// the last path segment of the URL (query and fragment removed).
class SnapshotDocumentSource : public DocumentSource {
public:
    explicit SnapshotDocumentSource(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string fetch(const std::string& url) override;
    static std::string file_name_for(std::string_view url);

private:
    std::filesystem::path dir_;
};

class InMemoryDocumentSource : public DocumentSource {
public:
    void add(std::string url, std::string bytes) { docs_[std::move(url)] = std::move(bytes); }
    std::string fetch(const std::string& url) override;

private:
    std::map<std::string, std::string> docs_;
};

/// Text of the first `max_pages` pages (0 = all), pages separated by blank lines.
std::string leading_pages_text(const std::string& pdf_bytes, std::size_t max_pages);

/// Full German record: link metadata from the URL, remaining fields from the
/// decision text.
CaseRecord build_bka_record(const std::string& url, const UrlGrammar& grammar, DocumentSource& documents,
                            ChatProvider& chat, const SectorVocabulary& sectors, const std::string& prompt_template,
                            std::size_t max_pages = 5);

// ---------------------------------------------------------------------------
// Combined dataset
// ---------------------------------------------------------------------------

class CaseStore {
public:
    CaseStore() = default;
    explicit CaseStore(std::vector<CaseRecord> records);

    /// Throws Error{kDuplicateCaseId}.
    void add(CaseRecord record);
    const CaseRecord* find(std::string_view case_id) const;
    const std::vector<CaseRecord>& records() const { return records_; }
    std::size_t size() const { return records_.size(); }

private:
    std::vector<CaseRecord> records_;
    std::unordered_map<std::string, std::size_t> by_id_;
};

CaseStore merge_datasets(const std::vector<CaseRecord>& eu, const std::vector<CaseRecord>& de);

/// One JSON object per line with exactly the nine dataset fields.
void write_dataset(const std::filesystem::path& file, const std::vector<CaseRecord>& cases);
std::vector<CaseRecord> read_dataset(const std::filesystem::path& file);

/// Manual corrections keyed by case_id: one JSON object per line holding
/// case_id plus the fields to replace.
using Overrides = std::map<std::string, nlohmann::json>;
Overrides load_overrides(const std::filesystem::path& file);
/// Returns the number of records changed. Overridden values are validated
/// against the vocabularies.
std::size_t apply_overrides(std::vector<CaseRecord>& cases, const Overrides& overrides, const Vocabularies& vocab);

/// Stratified (jurisdiction, violation) random sample for manual review.
std::vector<CaseRecord> stratified_sample(const std::vector<CaseRecord>& cases, std::size_t n, std::uint64_t seed);

}  // namespace lexagent
