#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <variant>
#include <vector>

#include "lexagent/domain.hpp"
#include "lexagent/error.hpp"

namespace lexagent {

struct ChatMessage {
    std::string role;  // "system", "user", "assistant"
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

struct ChatParams {
    std::optional<double> temperature;
    std::optional<int> max_tokens;
};

/// Deterministic extraction calls use this; answer generation leaves the
/// provider default in place.
inline constexpr ChatParams kExtractionParams{0.0, std::nullopt};

class ChatProvider {
public:
    virtual ~ChatProvider() = default;
    virtual std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params = {}) = 0;
};

class EmbeddingProvider {
public:
    virtual ~EmbeddingProvider() = default;
    virtual std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, EmbeddingProfile profile) = 0;
    virtual std::size_t dimension(EmbeddingProfile profile) const = 0;
};

struct WebResult {
    std::string title;
    std::string url;
    std::string description;

    bool operator==(const WebResult&) const = default;
};

class WebSearchProvider {
public:
    virtual ~WebSearchProvider() = default;
    virtual std::vector<WebResult> search(std::string_view query, const std::optional<std::string>& site_filter) = 0;
};

struct ResearchResult {
    std::string answer_text;
    std::vector<std::string> source_urls;
    std::optional<std::vector<std::string>> candidate_cases;
};

class DeepResearchProvider {
public:
    virtual ~DeepResearchProvider() = default;
    virtual ResearchResult research(std::string_view question,
                                    const std::optional<std::vector<std::string>>& allowed_domains) = 0;
};

// ---------------------------------------------------------------------------
// Scripted implementations. Every call consumes the next script entry; an
// entry may be an Error to simulate provider failures.
// ---------------------------------------------------------------------------

template <typename T>
class Script {
public:
    using Entry = std::variant<T, Error>;

    Script() = default;
    Script(std::vector<Entry> entries) : entries_(std::move(entries)) {}  // NOLINT(implicit)

    T take() {
        std::lock_guard lock(mu_);
        if (next_ >= entries_.size()) {
            throw Error(ErrorCode::kScriptExhausted, "script of " + std::to_string(entries_.size()) + " entries exhausted");
        }
        auto& entry = entries_[next_++];
        if (auto* err = std::get_if<Error>(&entry)) throw *err;
        return std::get<T>(entry);
    }

    void push(Entry e) {
        std::lock_guard lock(mu_);
        entries_.push_back(std::move(e));
    }

    std::size_t consumed() const {
        std::lock_guard lock(mu_);
        return next_;
    }

    std::size_t remaining() const {
        std::lock_guard lock(mu_);
        return entries_.size() - next_;
    }

private:
    mutable std::mutex mu_;
    std::vector<Entry> entries_;
    std::size_t next_ = 0;
};

class ScriptedChatProvider : public ChatProvider {
public:
    ScriptedChatProvider() = default;
    explicit ScriptedChatProvider(std::vector<Script<std::string>::Entry> script) : script_(std::move(script)) {}

    std::string complete(const std::vector<ChatMessage>& messages, const ChatParams& params = {}) override;

    void push(Script<std::string>::Entry response) { script_.push(std::move(response)); }
    std::size_t remaining() const { return script_.remaining(); }
    std::vector<std::vector<ChatMessage>> calls() const;

private:
    Script<std::string> script_;
    mutable std::mutex mu_;
    std::vector<std::vector<ChatMessage>> calls_;
};

class ScriptedWebSearchProvider : public WebSearchProvider {
public:
    struct Call {
        std::string query;
        std::optional<std::string> site_filter;
    };

    ScriptedWebSearchProvider() = default;
    explicit ScriptedWebSearchProvider(std::vector<Script<std::vector<WebResult>>::Entry> script)
        : script_(std::move(script)) {}

    std::vector<WebResult> search(std::string_view query, const std::optional<std::string>& site_filter) override;

    void push(Script<std::vector<WebResult>>::Entry results) { script_.push(std::move(results)); }
    std::vector<Call> calls() const;

private:
    Script<std::vector<WebResult>> script_;
    mutable std::mutex mu_;
    std::vector<Call> calls_;
};

class ScriptedResearchProvider : public DeepResearchProvider {
public:
    ScriptedResearchProvider() = default;
    explicit ScriptedResearchProvider(std::vector<Script<ResearchResult>::Entry> script) : script_(std::move(script)) {}

    ResearchResult research(std::string_view question,
                            const std::optional<std::vector<std::string>>& allowed_domains) override;

    void push(Script<ResearchResult>::Entry r) { script_.push(std::move(r)); }
    std::vector<std::string> questions() const;

private:
    Script<ResearchResult> script_;
    mutable std::mutex mu_;
    std::vector<std::string> questions_;
};

/// Deterministic embeddings: each token (lower-cased) hashes, together with
/// the seed and profile, to a pseudo-random direction; a text embeds to the
/// normalized sum of its token directions. Identical texts give identical
/// vectors across runs and platforms. Specific texts can be pinned to
/// hand-built vectors for geometry-sensitive tests.
class HashEmbeddingProvider : public EmbeddingProvider {
public:
    static constexpr std::size_t kDefaultDimension = 16;

    explicit HashEmbeddingProvider(std::uint64_t seed = 0x5eed, std::size_t dimension = kDefaultDimension)
        : seed_(seed), dimension_(dimension) {}

    std::vector<std::vector<double>> embed(const std::vector<std::string>& texts, EmbeddingProfile profile) override;
    std::size_t dimension(EmbeddingProfile) const override { return dimension_; }

    void pin(EmbeddingProfile profile, std::string text, std::vector<double> vector);
    std::size_t texts_embedded() const;

private:
    std::vector<double> hash_vector(std::string_view text, EmbeddingProfile profile) const;

    std::uint64_t seed_;
    std::size_t dimension_;
    mutable std::mutex mu_;
    std::map<std::pair<EmbeddingProfile, std::string>, std::vector<double>> pinned_;
    std::size_t texts_embedded_ = 0;
};

// ---------------------------------------------------------------------------
// Retry
// ---------------------------------------------------------------------------

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
};

using Sleeper = std::function<void(std::chrono::milliseconds)>;

inline void real_sleep(std::chrono::milliseconds d) { std::this_thread::sleep_for(d); }

/// Runs `call`, retrying only errors whose retryable() is true. The last
/// error propagates once attempts are exhausted.
template <typename F>
auto with_retry(F&& call, const RetryPolicy& policy, const Sleeper& sleep = real_sleep, int* attempts = nullptr)
    -> decltype(call()) {
    if (policy.max_attempts < 1) throw Error(ErrorCode::kInvalidArgument, "max_attempts must be >= 1");
    auto backoff = policy.initial_backoff;
    for (int attempt = 1;; ++attempt) {
        if (attempts) *attempts = attempt;
        try {
            return call();
        } catch (const Error& e) {
            if (!e.retryable() || attempt >= policy.max_attempts) throw;
        }
        sleep(backoff);
        backoff = std::chrono::milliseconds(static_cast<long long>(backoff.count() * policy.multiplier));
    }
}

}  // namespace lexagent
