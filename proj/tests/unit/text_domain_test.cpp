#include <gtest/gtest.h>

#include "lexagent/domain.hpp"
#include "lexagent/error.hpp"
#include "lexagent/text.hpp"
#include "support.hpp"

using namespace lexagent;
using lexagent::testing::vocab;

namespace {

std::vector<std::string> token_strings(std::string_view text) {
    std::vector<std::string> out;
    for (auto t : tokenize(text)) out.emplace_back(text.substr(t.begin, t.end - t.begin));
    return out;
}

}  // namespace

TEST(Text, TokenizeSplitsWordsAndPunctuation) {
    EXPECT_EQ(token_strings("Art. 101(1) TFEU, fine: EUR 2.4bn."),
              (std::vector<std::string>{"Art", ".", "101", "(", "1", ")", "TFEU", ",", "fine", ":", "EUR", "2", ".",
                                        "4bn", "."}));
    EXPECT_EQ(count_tokens("  \n\t "), 0u);
    // UTF-8 bytes stay inside words
    EXPECT_EQ(token_strings("Walzwerk Süd"), (std::vector<std::string>{"Walzwerk", "Süd"}));
}

TEST(Text, TokenOffsetsPointIntoSource) {
    std::string s = "one  two.three";
    auto toks = tokenize(s);
    ASSERT_EQ(toks.size(), 4u);
    EXPECT_EQ(toks[1].begin, 5u);
    EXPECT_EQ(toks[2].begin, 8u);
}

TEST(Text, SentenceEnds) {
    EXPECT_TRUE(is_sentence_end("."));
    EXPECT_TRUE(is_sentence_end("?"));
    EXPECT_FALSE(is_sentence_end(","));
    EXPECT_FALSE(is_sentence_end("end"));
}

TEST(Text, FillTemplateLeavesUnknownPlaceholders) {
    EXPECT_EQ(fill_template("Q: {question} / {other}", {{"question", "why?"}}), "Q: why? / {other}");
}

TEST(Text, ExtractJsonFromFencedProse) {
    auto j = extract_json_object("Sure! ```json\n{\"a\": {\"b\": \"}\"}}\n``` done");
    ASSERT_TRUE(j);
    EXPECT_EQ((*j)["a"]["b"], "}");
    EXPECT_FALSE(extract_json_object("no json here"));
    EXPECT_FALSE(extract_json_object("{\"unterminated\": 1"));
}

TEST(Text, UrlHostAndDomainMatch) {
    EXPECT_EQ(url_host("https://www.Bundeskartellamt.de:443/x?y"), "bundeskartellamt.de");
    EXPECT_FALSE(url_host("ftp://example.com"));
    EXPECT_TRUE(host_matches("competition-policy.ec.europa.eu", "ec.europa.eu"));
    EXPECT_TRUE(host_matches("ec.europa.eu", "ec.europa.eu"));
    EXPECT_FALSE(host_matches("notec.europa.eu", "ec.europa.eu"));
    EXPECT_FALSE(host_matches("ec.europa.eu.evil.com", "ec.europa.eu"));
    EXPECT_TRUE(looks_like_url("https://ec.europa.eu/a.pdf"));
    EXPECT_FALSE(looks_like_url("not available"));
}

TEST(CaseDate, ReducedPrecision) {
    auto y = CaseDate::parse_iso("2019");
    EXPECT_EQ(y.year, 2019);
    EXPECT_EQ(y.month, 0);
    EXPECT_EQ(y.iso(), "2019");
    EXPECT_EQ(CaseDate::parse_iso("2019-02").iso(), "2019-02");
    EXPECT_EQ(CaseDate::parse_iso("2020-02-29").iso(), "2020-02-29");
    EXPECT_THROW(CaseDate::parse_iso("2019-02-29"), Error);
    EXPECT_THROW(CaseDate::parse_iso("19-02-01"), Error);
    EXPECT_THROW(CaseDate::parse_iso("2019-13"), Error);
    EXPECT_LT(CaseDate::parse_iso("2019"), CaseDate::parse_iso("2019-01-01"));
}

TEST(CaseRecord, JsonRoundTripKeepsNulls) {
    auto c = lexagent::testing::make_case("B6-22-16", "Facebook", Jurisdiction::kGermany, "GWB Section 19",
                                          std::nullopt, {"Facebook", "Meta"}, "2019");
    nlohmann::json j = c;
    EXPECT_TRUE(j["sector"].is_null());
    EXPECT_EQ(j["decision_date"], "2019");
    EXPECT_EQ(j["jurisdiction"], "Germany");
    EXPECT_EQ(j.size(), 9u);
    EXPECT_EQ(j.get<CaseRecord>(), c);
    EXPECT_FALSE(c.complete());
}

TEST(Violations, AliasesNormalizeToCanonical) {
    const auto& v = vocab().violations;
    EXPECT_EQ(normalize_violation("Article 85 EEC", v), "Article 101 TFEU");
    EXPECT_EQ(normalize_violation(" Article 82 EC ", v), "Article 102 TFEU");
    EXPECT_EQ(normalize_violation("§ 19 GWB", v), "GWB Section 19");
    EXPECT_EQ(normalize_violation("Article 101 TFEU", v), "Article 101 TFEU");
    try {
        normalize_violation("Article 999", v);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kUnknownViolation);
    }
}

TEST(Sectors, CanonicalForms) {
    const auto& s = vocab().sectors;
    EXPECT_EQ(s.sections().size(), 21u);
    EXPECT_EQ(s.canonicalize("C"), "C – Manufacturing");
    EXPECT_EQ(s.canonicalize("C - manufacturing"), "C – Manufacturing");
    EXPECT_EQ(s.canonicalize("C – Manufacturing"), "C – Manufacturing");
    EXPECT_FALSE(s.canonicalize("C - Mining"));
    EXPECT_FALSE(s.canonicalize("Z"));
}

TEST(Companies, SubsetIgnoresCaseAndSpacing) {
    EXPECT_EQ(parse_company_list(" MAN, ,Daimler ,"), (std::vector<std::string>{"MAN", "Daimler"}));
    EXPECT_TRUE(companies_subset({" man ", "DAIMLER"}, {"MAN", "Daimler", "Volvo"}));
    EXPECT_FALSE(companies_subset({"MAN", "Scania"}, {"MAN", "Daimler"}));
    EXPECT_TRUE(companies_subset({}, {"MAN"}));
}

TEST(QueryVectorJson, DropsOutOfVocabularyDimensionsOnly) {
    std::vector<std::string> dropped;
    auto qv = query_vector_from_json(
        {{"case_title", " Trucks "}, {"jurisdiction", "EU"}, {"violation", "Article 85 EEC"}, {"sector", "Space"},
         {"companies", "MAN, Volvo"}, {"case_id", ""}},
        vocab(), &dropped);
    EXPECT_EQ(qv.case_title, "Trucks");
    EXPECT_EQ(qv.jurisdiction, Jurisdiction::kEU);
    EXPECT_EQ(qv.violation, "Article 101 TFEU");
    EXPECT_FALSE(qv.sector);
    EXPECT_FALSE(qv.case_id);
    EXPECT_EQ(qv.companies, (std::vector<std::string>{"MAN", "Volvo"}));
    EXPECT_EQ(dropped, (std::vector<std::string>{"sector"}));
    EXPECT_EQ(qv.dimension_count(), 4u);
    EXPECT_TRUE(query_vector_from_json(nlohmann::json::array(), vocab()).is_empty());
}

TEST(QueryVectorJson, StrictValidation) {
    QueryVector qv;
    qv.sector = "C";
    try {
        validate_query_vector(qv, vocab());
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::kInvalidValue);
    }
    qv.sector = "C – Manufacturing";
    EXPECT_NO_THROW(validate_query_vector(qv, vocab()));
}
