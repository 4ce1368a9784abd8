#include "lexagent/remote_store.hpp"

#include <httplib.h>

#include "lexagent/error.hpp"

namespace lexagent {

namespace {

nlohmann::json entry_json(const VectorEntry& e) { return {{"id", e.id}, {"vector", e.vector}, {"payload", e.payload}}; }

VectorEntry entry_from(const nlohmann::json& j) {
    return {j.at("id").get<std::string>(), j.at("vector").get<std::vector<double>>(),
            j.value("payload", nlohmann::json::object())};
}

int status_for(ErrorCode code) {
    switch (code) {
        case ErrorCode::kNotFound: return 404;
        case ErrorCode::kProfileMismatch:
        case ErrorCode::kDimensionMismatch:
        case ErrorCode::kZeroVector: return 409;
        case ErrorCode::kInvalidArgument:
        case ErrorCode::kInvalidValue: return 422;
        default: return 500;
    }
}

ErrorCode code_from(const std::string& name) {
    for (auto c : {ErrorCode::kNotFound, ErrorCode::kProfileMismatch, ErrorCode::kDimensionMismatch,
                   ErrorCode::kZeroVector, ErrorCode::kInvalidArgument, ErrorCode::kInvalidValue}) {
        if (to_string(c) == name) return c;
    }
    return ErrorCode::kStoreUnavailable;
}

std::pair<std::string, std::string> split_base(const std::string& url) {
    auto scheme = url.find("://");
    auto path_start = url.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    if (path_start == std::string::npos) return {url, ""};
    auto prefix = url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {url.substr(0, path_start), prefix};
}

PayloadFilter filter_from(const nlohmann::json& body) {
    PayloadFilter f;
    if (body.contains("filter") && body.at("filter").is_object()) {
        for (const auto& [k, v] : body.at("filter").items()) f[k] = v.get<std::string>();
    }
    return f;
}

}  // namespace

RemoteVectorStore::RemoteVectorStore(std::string base_url, std::chrono::seconds timeout)
    : base_url_(std::move(base_url)), timeout_(timeout) {}

namespace {

nlohmann::json call(const std::string& base_url, std::chrono::seconds timeout, const std::string& method,
                    const std::string& path, const nlohmann::json* body, bool allow_404 = false) {
    auto [host, prefix] = split_base(base_url);
    httplib::Client client(host);
    client.set_connection_timeout(timeout);
    client.set_read_timeout(timeout);
    client.set_write_timeout(timeout);
    auto full = prefix + path;
    httplib::Result res = method == "GET"   ? client.Get(full)
                          : method == "PUT" ? client.Put(full, body->dump(), "application/json")
                                            : client.Post(full, body->dump(), "application/json");
    if (!res) throw Error(ErrorCode::kStoreUnavailable, base_url + ": " + httplib::to_string(res.error()));
    if (allow_404 && res->status == 404) return nullptr;
    auto parsed = nlohmann::json::parse(res->body, nullptr, false);
    if (res->status >= 400) {
        if (!parsed.is_discarded() && parsed.contains("error")) {
            throw Error(code_from(parsed.at("error").get<std::string>()), parsed.value("message", std::string{}));
        }
        throw Error(ErrorCode::kStoreUnavailable, "HTTP " + std::to_string(res->status));
    }
    if (parsed.is_discarded()) throw Error(ErrorCode::kStoreUnavailable, "invalid JSON from store");
    return parsed;
}

}  // namespace

void RemoteVectorStore::ensure_collection(const std::string& name, EmbeddingProfile profile, std::size_t dimension) {
    nlohmann::json body{{"profile", std::string(to_string(profile))}, {"dimension", dimension}};
    call(base_url_, timeout_, "PUT", "/collections/" + name, &body);
}

std::optional<CollectionInfo> RemoteVectorStore::info(const std::string& name) {
    auto j = call(base_url_, timeout_, "GET", "/collections/" + name, nullptr, true);
    if (j.is_null()) return std::nullopt;
    auto profile = parse_profile(j.at("profile").get<std::string>());
    if (!profile) throw Error(ErrorCode::kStoreUnavailable, "unknown profile from store");
    return CollectionInfo{*profile, j.at("dimension").get<std::size_t>(), j.at("size").get<std::size_t>()};
}

void RemoteVectorStore::upsert(const std::string& name, const std::vector<VectorEntry>& entries) {
    nlohmann::json body{{"entries", nlohmann::json::array()}};
    for (const auto& e : entries) body["entries"].push_back(entry_json(e));
    call(base_url_, timeout_, "POST", "/collections/" + name + "/upsert", &body);
}

std::vector<ScoredEntry> RemoteVectorStore::query(const std::string& name, const Embedding& query, std::size_t top_k,
                                                  const PayloadFilter& filter) {
    nlohmann::json body{{"vector", query.values},
                        {"profile", std::string(to_string(query.profile))},
                        {"top_k", top_k},
                        {"filter", filter}};
    auto j = call(base_url_, timeout_, "POST", "/collections/" + name + "/query", &body);
    std::vector<ScoredEntry> out;
    for (const auto& r : j.at("results")) out.push_back({entry_from(r), r.at("score").get<double>()});
    return out;
}

std::vector<VectorEntry> RemoteVectorStore::scan(const std::string& name, const PayloadFilter& filter) {
    nlohmann::json body{{"filter", filter}};
    auto j = call(base_url_, timeout_, "POST", "/collections/" + name + "/scan", &body);
    std::vector<VectorEntry> out;
    for (const auto& r : j.at("results")) out.push_back(entry_from(r));
    return out;
}

void mount_vector_store_routes(httplib::Server& server, VectorStore& store) {
    auto guarded = [](auto&& fn) {
        return [fn](const httplib::Request& req, httplib::Response& res) {
            try {
                fn(req, res);
            } catch (const Error& e) {
                res.status = status_for(e.code());
                res.set_content(nlohmann::json{{"error", std::string(to_string(e.code()))}, {"message", e.what()}}.dump(),
                                "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(nlohmann::json{{"error", "InvalidArgument"}, {"message", e.what()}}.dump(),
                                "application/json");
            }
        };
    };
    server.Put(R"(/collections/([A-Za-z0-9_\-]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
        auto body = nlohmann::json::parse(req.body);
        auto profile = parse_profile(body.at("profile").get<std::string>());
        if (!profile) throw Error(ErrorCode::kInvalidValue, "profile");
        store.ensure_collection(req.matches[1], *profile, body.at("dimension").get<std::size_t>());
        res.set_content("{}", "application/json");
    }));
    server.Get(R"(/collections/([A-Za-z0-9_\-]+))", guarded([&store](const httplib::Request& req, httplib::Response& res) {
        auto info = store.info(req.matches[1]);
        if (!info) throw Error(ErrorCode::kNotFound, "collection");
        res.set_content(nlohmann::json{{"profile", std::string(to_string(info->profile))},
                                       {"dimension", info->dimension},
                                       {"size", info->size}}
                            .dump(),
                        "application/json");
    }));
    server.Post(R"(/collections/([A-Za-z0-9_\-]+)/upsert)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    auto body = nlohmann::json::parse(req.body);
                    std::vector<VectorEntry> entries;
                    for (const auto& e : body.at("entries")) entries.push_back(entry_from(e));
                    store.upsert(req.matches[1], entries);
                    res.set_content(nlohmann::json{{"upserted", entries.size()}}.dump(), "application/json");
                }));
    server.Post(R"(/collections/([A-Za-z0-9_\-]+)/query)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    auto body = nlohmann::json::parse(req.body);
                    auto profile = parse_profile(body.at("profile").get<std::string>());
                    if (!profile) throw Error(ErrorCode::kInvalidValue, "profile");
                    Embedding q{body.at("vector").get<std::vector<double>>(), *profile};
                    nlohmann::json out{{"results", nlohmann::json::array()}};
                    for (const auto& s :
                         store.query(req.matches[1], q, body.at("top_k").get<std::size_t>(), filter_from(body))) {
                        auto j = entry_json(s.entry);
                        j["score"] = s.score;
                        out["results"].push_back(std::move(j));
                    }
                    res.set_content(out.dump(), "application/json");
                }));
    server.Post(R"(/collections/([A-Za-z0-9_\-]+)/scan)",
                guarded([&store](const httplib::Request& req, httplib::Response& res) {
                    auto body = nlohmann::json::parse(req.body.empty() ? "{}" : req.body);
                    nlohmann::json out{{"results", nlohmann::json::array()}};
                    for (const auto& e : store.scan(req.matches[1], filter_from(body))) {
                        out["results"].push_back(entry_json(e));
                    }
                    res.set_content(out.dump(), "application/json");
                }));
}

}  // namespace lexagent
