#include <filesystem>
#include <fstream>
#include <set>

#include <unistd.h>

#include <gtest/gtest.h>

#include "lexagent/error.hpp"
#include "lexagent/ingestion.hpp"
#include "support.hpp"

using namespace lexagent;
namespace lt = lexagent::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("lexagent_" + name + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

const char* kFacebookUrl =
    "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/DE/Entscheidungen/Missbrauchsaufsicht/2019/B6-22-16.html";

}  // namespace

TEST(EuCleaning, TenRecordFixture) {
    auto raw = read_eu_snapshot(lt::fixture("eu_snapshot_10.json"));
    ASSERT_EQ(raw.size(), 10u);
    auto cleaned = clean_eu_cases(raw, lt::vocab().violations, &lt::vocab().sectors);
    const auto& r = cleaned.report;
    EXPECT_EQ(r.input, 10u);
    EXPECT_EQ(r.kept, 5u);
    EXPECT_EQ(r.dropped_empty_link, 3u);
    EXPECT_EQ(r.dropped_non_english, 2u);
    EXPECT_EQ(r.dropped_unknown_violation, 0u);
    EXPECT_EQ(r.aliases_normalized, 2u);
    EXPECT_EQ(r.missing_sector, (std::vector<std::string>{"AT.40411"}));

    std::vector<std::string> ids;
    for (const auto& c : cleaned.cases) ids.push_back(c.case_id);
    EXPECT_EQ(ids, (std::vector<std::string>{"AT.40099", "AT.39824", "IV.31.149", "M.8084", "AT.40411"}));

    const auto& poly = cleaned.cases[2];
    EXPECT_EQ(poly.violation, "Article 101 TFEU");
    EXPECT_EQ(poly.decision_date->iso(), "1986-04-23");
    EXPECT_EQ(poly.sector, "C – Manufacturing");
    EXPECT_EQ(cleaned.cases[3].violation, "EU Merger Regulation");
    EXPECT_EQ(cleaned.cases[3].decision_date->iso(), "2018-03-21");
    EXPECT_EQ(cleaned.cases[1].decision_date->iso(), "2016-07-19");
    EXPECT_EQ(cleaned.cases[1].companies.size(), 5u);
    for (const auto& c : cleaned.cases) {
        EXPECT_EQ(c.language, "English");
        EXPECT_EQ(c.jurisdiction, Jurisdiction::kEU);
    }
}

TEST(EuCleaning, UnknownViolationAndBadDateAreCountedNotFatal) {
    std::vector<RawEuRecord> raw(3);
    for (auto& r : raw) {
        r.case_id = "AT.1";
        r.pdf_url = "https://ec.europa.eu/x.pdf";
        r.language = "English";
        r.violation = "Article 101 TFEU";
        r.decision_date = "2001-01-01";
    }
    raw[0].violation = "Article 3";
    raw[1].decision_date = "yesterday";
    raw[2].case_id = " ";
    auto cleaned = clean_eu_cases(raw, lt::vocab().violations);
    EXPECT_EQ(cleaned.report.kept, 0u);
    EXPECT_EQ(cleaned.report.dropped_unknown_violation, 1u);
    EXPECT_EQ(cleaned.report.dropped_invalid_date, 1u);
    EXPECT_EQ(cleaned.report.dropped_missing_id, 1u);
}

TEST(EuCleaning, SnapshotAsJsonLines) {
    auto dir = temp_dir("jsonl");
    {
        std::ofstream out(dir / "snap.jsonl");
        out << R"({"case_number": "AT.1", "title": "A", "legal_basis": "Article 101 TFEU", "link": "https://ec.europa.eu/a.pdf", "lang": "en", "date": "2001-02-03"})"
            << "\n\n"
            << R"({"case_id": "AT.2", "case_title": "B"})" << "\n";
    }
    auto raw = read_eu_snapshot(dir / "snap.jsonl");
    ASSERT_EQ(raw.size(), 2u);
    EXPECT_EQ(raw[0].case_id, "AT.1");
    EXPECT_EQ(raw[0].pdf_url, "https://ec.europa.eu/a.pdf");
    std::filesystem::remove_all(dir);
}

TEST(SourceDates, Formats) {
    EXPECT_EQ(parse_source_date("23.04.1986").iso(), "1986-04-23");
    EXPECT_EQ(parse_source_date("3/4/1986").iso(), "1986-04-03");
    EXPECT_EQ(parse_source_date("2018-03-21T10:00:00Z").iso(), "2018-03-21");
    EXPECT_THROW(parse_source_date("31.02.2000"), Error);
}

TEST(BkaUrls, ParseAndRender) {
    auto grammar = UrlGrammar::load(lt::assets().url_grammar_file());
    auto meta = parse_bka_url(kFacebookUrl, grammar);
    EXPECT_EQ(meta, (BkaLinkMetadata{"B6-22-16", "GWB Section 19", 2019, "German"}));
    EXPECT_EQ(render_bka_url(grammar, meta), kFacebookUrl);
    // scheme, www and query are not part of the anatomy
    EXPECT_EQ(parse_bka_url("http://bundeskartellamt.de/SharedDocs/Entscheidung/EN/Entscheidungen/Kartellverbot/2020/"
                            "B1-40-19.pdf?__blob=publicationFile",
                            grammar),
              (BkaLinkMetadata{"B1-40-19", "GWB Section 1", 2020, "English"}));
}

TEST(BkaUrls, Unrecognized) {
    auto grammar = UrlGrammar::load(lt::assets().url_grammar_file());
    for (const char* bad : {
             "https://www.bundeskartellamt.de/SharedDocs/Meldung/DE/Pressemitteilungen/2019/07_02_2019.html",
             "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/FR/Entscheidungen/Kartellverbot/2020/B1-40-19.html",
             "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/DE/Entscheidungen/Kartellverbot/20x0/B1-40-19.html",
             "https://www.bundeskartellamt.de/SharedDocs/Entscheidung/DE/Entscheidungen/Kartellverbot/2020/extra/B1-40-19.html",
             "https://example.com/SharedDocs/Entscheidung/DE/Entscheidungen/Kartellverbot/2020/B1-40-19.html",
         }) {
        try {
            parse_bka_url(bad, grammar);
            ADD_FAILURE() << bad;
        } catch (const Error& e) {
            EXPECT_EQ(e.code(), ErrorCode::kUnrecognizedUrl) << bad;
        }
    }
}

TEST(BkaExtraction, CorrectiveRepromptOnBadSector) {
    ScriptedChatProvider chat({std::string(R"({"case_title": "Facebook", "sector": "Social media", "companies": ["Facebook Inc."]})"),
                               std::string(R"(```json
{"case_title": "Facebook", "sector": "J - Information and communication", "companies": ["Facebook Inc.", "Facebook Ireland Ltd."]}
```)")});
    auto fields = extract_bka_fields("Beschluss in dem Verwaltungsverfahren gegen Facebook", chat, lt::vocab().sectors,
                                     lt::assets().prompt("bka_extraction"));
    EXPECT_EQ(fields.case_title, "Facebook");
    EXPECT_EQ(fields.sector, "J – Information and communication");
    EXPECT_EQ(fields.companies.size(), 2u);
    auto calls = chat.calls();
    ASSERT_EQ(calls.size(), 2u);
    EXPECT_NE(calls[0][0].content.find("Beschluss in dem Verwaltungsverfahren"), std::string::npos);
    EXPECT_NE(calls[0][0].content.find("K – Financial and insurance activities"), std::string::npos);
    EXPECT_EQ(calls[1].size(), 3u);
    EXPECT_NE(calls[1][2].content.find("Social media"), std::string::npos);
}

TEST(BkaExtraction, SecondFailureThrows) {
    ScriptedChatProvider chat({std::string("I think it is about Facebook."), std::string("{\"sector\": \"J\"}")});
    try {
        extract_bka_fields("text", chat, lt::vocab().sectors, lt::assets().prompt("bka_extraction"));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kExtractionFailed);
    }
}

TEST(BkaRecord, BuiltFromUrlAndLeadingPages) {
    auto grammar = UrlGrammar::load(lt::assets().url_grammar_file());
    InMemoryDocumentSource docs;
    docs.add(kFacebookUrl, lt::make_pdf({"Beschluss B6-22/16", "Facebook Inc. und Facebook Ireland", "page three"}, true));
    ScriptedChatProvider chat(
        {std::string(R"({"case_title": "Facebook", "sector": "J", "companies": "Facebook Inc., Facebook Ireland Ltd."})")});
    auto c = build_bka_record(kFacebookUrl, grammar, docs, chat, lt::vocab().sectors,
                              lt::assets().prompt("bka_extraction"), 2);
    EXPECT_EQ(c.case_id, "B6-22-16");
    EXPECT_EQ(c.violation, "GWB Section 19");
    EXPECT_EQ(c.decision_date->iso(), "2019");
    EXPECT_EQ(c.language, "German");
    EXPECT_EQ(c.jurisdiction, Jurisdiction::kGermany);
    EXPECT_EQ(c.sector, "J – Information and communication");
    EXPECT_TRUE(c.complete());
    auto prompt = chat.calls().at(0).at(0).content;
    EXPECT_NE(prompt.find("Facebook Ireland"), std::string::npos);
    EXPECT_EQ(prompt.find("page three"), std::string::npos);
}

TEST(Dataset, MergeRejectsDuplicates) {
    std::vector<CaseRecord> eu{lt::make_case("AT.1", "A")};
    std::vector<CaseRecord> de{lt::make_case("B1-1-20", "B", Jurisdiction::kGermany, "GWB Section 1"),
                               lt::make_case("AT.1", "dup")};
    try {
        merge_datasets(eu, de);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kDuplicateCaseId);
    }
}

TEST(Dataset, WriteReadRoundTrip) {
    auto dir = temp_dir("dataset");
    auto cases = lt::generate_cases(20, 7);
    write_dataset(dir / "cases.jsonl", cases);
    EXPECT_EQ(read_dataset(dir / "cases.jsonl"), cases);
    std::filesystem::remove_all(dir);
}

TEST(Dataset, OverridesValidateAndNormalize) {
    std::vector<CaseRecord> cases{lt::make_case("AT.40411", "Google Search (AdSense)", Jurisdiction::kEU, "Article 102 TFEU")};
    Overrides ov{{"AT.40411", {{"case_id", "AT.40411"}, {"sector", "M"}}}};
    EXPECT_EQ(apply_overrides(cases, ov, lt::vocab()), 1u);
    EXPECT_EQ(cases[0].sector, "M – Professional, scientific and technical activities");
    Overrides bad{{"AT.40411", {{"case_id", "AT.40411"}, {"sector", "Search"}}}};
    EXPECT_THROW(apply_overrides(cases, bad, lt::vocab()), Error);
}

TEST(Dataset, StratifiedSampleCoversStrata) {
    auto cases = lt::generate_cases(60, 11);
    auto sample = stratified_sample(cases, 7, 3);
    EXPECT_EQ(sample.size(), 7u);
    std::set<std::string> strata;
    for (const auto& c : sample) strata.insert(std::string(to_string(*c.jurisdiction)) + *c.violation);
    EXPECT_EQ(strata.size(), 7u);
    EXPECT_EQ(stratified_sample(cases, 7, 3), sample);
}
