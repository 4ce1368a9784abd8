#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/spdlog.h>

#include "lexagent/agent.hpp"
#include "lexagent/answer.hpp"
#include "lexagent/assets.hpp"
#include "lexagent/chunking.hpp"
#include "lexagent/error.hpp"
#include "lexagent/http_providers.hpp"
#include "lexagent/ingestion.hpp"
#include "lexagent/pdf.hpp"
#include "lexagent/remote_store.hpp"
#include "lexagent/service.hpp"
#include "lexagent/text.hpp"
#include "lexagent/vector_store.hpp"

namespace fs = std::filesystem;
using namespace lexagent;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitEnvironment = 2;

std::string env_or(const char* name, const std::string& fallback) {
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : fallback;
}

// STORE_DIR may also name a remote store ("http://host:port").
std::unique_ptr<VectorStore> open_store(const std::string& where) {
    if (where.rfind("http://", 0) == 0 || where.rfind("https://", 0) == 0) {
        return std::make_unique<RemoteVectorStore>(where);
    }
    return std::make_unique<FlatVectorStore>(where);
}

void flush_store(VectorStore& store) {
    if (auto* flat = dynamic_cast<FlatVectorStore*>(&store)) flat->flush();
}

std::vector<CaseRecord> maybe_sample(std::vector<CaseRecord> cases, std::size_t n, std::uint64_t seed) {
    if (n == 0) return cases;
    return stratified_sample(cases, n, seed);
}

struct Stack {
    Assets assets;
    Vocabularies vocab;
    ProviderConfig config;
    std::unique_ptr<ChatProvider> chat;
    std::unique_ptr<EmbeddingProvider> embed;
    std::unique_ptr<WebSearchProvider> web;
    std::unique_ptr<DeepResearchProvider> research;
    CaseStore cases;
    std::unique_ptr<VectorStore> store;
    TitleIndex titles;
    HttpDocumentSource documents;
    std::unique_ptr<Agent> agent;

    Stack(const std::string& dataset, const std::string& store_dir)
        : vocab(assets.vocabularies()), config(ProviderConfig::from_env()), documents(config.timeout) {
        chat = make_chat_provider(config);
        embed = make_embedding_provider(config);
        web = make_web_search_provider(config);
        research = make_research_provider(config);
        if (dataset.empty()) throw Error(ErrorCode::kConfig, "no dataset given (--dataset or DATASET_PATH)");
        if (store_dir.empty()) throw Error(ErrorCode::kConfig, "no store given (--store or STORE_DIR)");
        cases = CaseStore(read_dataset(dataset));
        store = open_store(store_dir);
        titles = TitleIndex::build(cases, *embed, store.get());
        AgentTools tools;
        tools.cases = &cases;
        tools.titles = &titles;
        tools.store = store.get();
        tools.embed = embed.get();
        tools.tool_chat = chat.get();
        tools.research = research.get();
        tools.web = web.get();
        tools.documents = &documents;
        tools.vocab = &vocab;
        tools.prompts = AgentPrompts::from_assets(assets);
        tools.official_domains = assets.official_domains();
        tools.allowed_domains = assets.allowed_domains();
        agent = std::make_unique<Agent>(std::move(tools), *chat);
    }
};

void print_answer(const TurnOutcome& outcome) {
    switch (outcome.kind) {
        case TurnOutcome::Kind::kAnswer:
            std::cout << outcome.answer->text << "\n";
            if (!outcome.answer->citations.empty()) {
                std::cout << "\nCitations:\n";
                for (const auto& c : outcome.answer->citations) {
                    std::cout << "[" << c.marker << "] " << c.source_url;
                    if (c.page) std::cout << " (page " << *c.page << ")";
                    std::cout << "\n";
                }
            }
            if (!outcome.answer->followups.empty()) {
                std::cout << "\nFollow-up questions:\n";
                for (const auto& f : outcome.answer->followups) std::cout << "- " << f << "\n";
            }
            break;
        case TurnOutcome::Kind::kClarification: std::cout << "Clarification needed: " << outcome.clarification << "\n"; break;
        case TurnOutcome::Kind::kError: std::cout << "Error: " << outcome.error << "\n"; break;
    }
    std::cerr << "tools:";
    for (auto t : outcome.tool_sequence()) std::cerr << " " << to_string(t);
    std::cerr << "\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Competition-law case research: ingestion, indexing and the research agent"};
    app.require_subcommand(1);
    std::string log_level = "info";
    app.add_option("--log-level", log_level, "trace, debug, info, warn, error");

    // ingest eu / ingest de
    auto* ingest = app.add_subcommand("ingest", "Build a jurisdiction dataset");
    ingest->require_subcommand(1);
    std::string overrides_file;
    std::size_t sample = 0;
    std::uint64_t seed = 42;

    auto* eu = ingest->add_subcommand("eu", "Clean an EU case-registry snapshot");
    std::string eu_in, eu_out, report_file;
    eu->add_option("--in", eu_in, "Registry snapshot (JSON array or JSON lines)")->required()->check(CLI::ExistingFile);
    eu->add_option("--out", eu_out, "Dataset file to write")->required();
    eu->add_option("--overrides", overrides_file, "Manual corrections")->check(CLI::ExistingFile);
    eu->add_option("--report", report_file, "Write the cleaning report here");
    eu->add_option("--sample", sample, "Keep a stratified sample of this size");
    eu->add_option("--seed", seed, "Sampling seed");

    auto* de = ingest->add_subcommand("de", "Build German records from decision links");
    std::string de_links, de_out, snapshots;
    std::size_t pages = 5;
    std::string grammar_file;
    de->add_option("--links", de_links, "One decision URL per line")->required()->check(CLI::ExistingFile);
    de->add_option("--out", de_out, "Dataset file to write")->required();
    de->add_option("--snapshots", snapshots, "Read documents from this directory instead of the network")
        ->check(CLI::ExistingDirectory);
    de->add_option("--pages", pages, "Leading pages given to the extractor");
    de->add_option("--grammar", grammar_file, "URL grammar file")->check(CLI::ExistingFile);
    de->add_option("--overrides", overrides_file, "Manual corrections")->check(CLI::ExistingFile);
    de->add_option("--sample", sample, "Keep a stratified sample of this size");
    de->add_option("--seed", seed, "Sampling seed");

    auto* merge = app.add_subcommand("merge", "Combine the EU and German datasets");
    std::string merge_eu, merge_de, merge_out;
    merge->add_option("--eu", merge_eu)->required()->check(CLI::ExistingFile);
    merge->add_option("--de", merge_de)->required()->check(CLI::ExistingFile);
    merge->add_option("--out", merge_out)->required();

    std::string dataset = env_or("DATASET_PATH", "");
    std::string store_dir = env_or("STORE_DIR", "");

    auto* index = app.add_subcommand("index", "Chunk, embed and index decision documents");
    std::string pdf_dir;
    index->add_option("--dataset", dataset, "Combined dataset");
    index->add_option("--store", store_dir, "Vector store directory or URL");
    index->add_option("--pdf-dir", pdf_dir, "Read decisions from this directory instead of the network")
        ->check(CLI::ExistingDirectory);

    auto* serve = app.add_subcommand("serve", "Run the HTTP API");
    int port = std::atoi(env_or("PORT", "8080").c_str());
    std::string journal_dir;
    serve->add_option("--port", port);
    serve->add_option("--store", store_dir);
    serve->add_option("--dataset", dataset);
    serve->add_option("--journal", journal_dir, "Session journal directory (default <store>/sessions)");

    auto* ask = app.add_subcommand("ask", "Answer one question and exit");
    std::string question;
    ask->add_option("--question", question)->required();
    ask->add_option("--store", store_dir);
    ask->add_option("--dataset", dataset);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    }
    spdlog::set_level(spdlog::level::from_str(log_level));
    spdlog::set_default_logger(spdlog::default_logger());

    try {
        Assets assets;
        if (*eu) {
            auto vocab = assets.vocabularies();
            auto cleaned = clean_eu_cases(read_eu_snapshot(eu_in), vocab.violations, &vocab.sectors);
            if (!overrides_file.empty()) apply_overrides(cleaned.cases, load_overrides(overrides_file), vocab);
            auto cases = maybe_sample(std::move(cleaned.cases), sample, seed);
            write_dataset(eu_out, cases);
            auto report = cleaned.report.to_json().dump(2);
            if (!report_file.empty()) std::ofstream(report_file) << report << "\n";
            std::cout << report << "\n";
            spdlog::info("wrote {} EU case(s) to {}", cases.size(), eu_out);
        } else if (*de) {
            auto vocab = assets.vocabularies();
            auto grammar = UrlGrammar::load(grammar_file.empty() ? assets.url_grammar_file() : fs::path(grammar_file));
            auto config = ProviderConfig::from_env();
            auto chat = make_chat_provider(config);
            std::unique_ptr<DocumentSource> docs;
            if (snapshots.empty()) docs = std::make_unique<HttpDocumentSource>(config.timeout);
            else docs = std::make_unique<SnapshotDocumentSource>(snapshots);
            auto prompt = assets.prompt("bka_extraction");
            std::ifstream links(de_links);
            std::vector<CaseRecord> cases;
            std::size_t failed = 0;
            for (std::string line; std::getline(links, line);) {
                auto url = trim(line);
                if (url.empty() || url[0] == '#') continue;
                try {
                    cases.push_back(build_bka_record(url, grammar, *docs, *chat, vocab.sectors, prompt, pages));
                } catch (const Error& e) {
                    if (e.code() == ErrorCode::kConfig) throw;
                    ++failed;
                    spdlog::warn("{}: {}", url, e.what());
                }
            }
            if (!overrides_file.empty()) apply_overrides(cases, load_overrides(overrides_file), vocab);
            cases = maybe_sample(std::move(cases), sample, seed);
            write_dataset(de_out, cases);
            std::cout << nlohmann::json{{"kept", cases.size()}, {"failed", failed}}.dump(2) << "\n";
        } else if (*merge) {
            auto combined = merge_datasets(read_dataset(merge_eu), read_dataset(merge_de));
            write_dataset(merge_out, combined.records());
            spdlog::info("wrote {} case(s) to {}", combined.size(), merge_out);
        } else if (*index) {
            if (dataset.empty() || store_dir.empty()) {
                std::cerr << "index needs --dataset and --store (or DATASET_PATH and STORE_DIR)\n";
                return kExitUsage;
            }
            auto config = ProviderConfig::from_env();
            auto embed = make_embedding_provider(config);
            std::unique_ptr<DocumentSource> docs;
            if (pdf_dir.empty()) docs = std::make_unique<HttpDocumentSource>(config.timeout);
            else docs = std::make_unique<SnapshotDocumentSource>(pdf_dir);
            auto store = open_store(store_dir);
            auto cases = read_dataset(dataset);
            std::size_t chunks = 0, failed = 0;
            for (const auto& c : cases) {
                try {
                    chunks += index_case_document(c, *docs, *store, *embed);
                } catch (const Error& e) {
                    if (!e.retryable() && e.code() != ErrorCode::kMalformedDocument && e.code() != ErrorCode::kNotFound &&
                        e.code() != ErrorCode::kCaseNotIndexed) {
                        throw;
                    }
                    ++failed;
                    spdlog::warn("{}: {}", c.case_id, e.what());
                }
            }
            TitleIndex::build(CaseStore(cases), *embed, store.get());
            flush_store(*store);
            std::cout << nlohmann::json{{"cases", cases.size()}, {"chunks", chunks}, {"failed", failed}}.dump(2) << "\n";
        } else if (*serve) {
            Stack stack(dataset, store_dir);
            if (journal_dir.empty()) {
                journal_dir = (store_dir.rfind("http", 0) == 0 ? fs::path("sessions") : fs::path(store_dir) / "sessions").string();
            }
            ResearchService service(*stack.agent, stack.cases, stack.titles, *stack.embed, stack.vocab, journal_dir);
            httplib::Server server;
            service.mount(server);
            spdlog::info("listening on port {}", port);
            if (!server.listen("0.0.0.0", port)) {
                spdlog::error("cannot listen on port {}", port);
                return kExitEnvironment;
            }
        } else if (*ask) {
            Stack stack(dataset, store_dir);
            SessionState session;
            session.session_id = "cli";
            auto outcome = stack.agent->run_turn(session, question);
            print_answer(outcome);
            flush_store(*stack.store);
            return outcome.kind == TurnOutcome::Kind::kError ? kExitEnvironment : 0;
        }
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return e.code() == ErrorCode::kInvalidArgument ? kExitUsage : kExitEnvironment;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitEnvironment;
    }
    return 0;
}
