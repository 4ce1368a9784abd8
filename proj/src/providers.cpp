#include "lexagent/providers.hpp"

#include <cmath>

#include "lexagent/text.hpp"

namespace lexagent {

namespace {

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

}  // namespace

std::string ScriptedChatProvider::complete(const std::vector<ChatMessage>& messages, const ChatParams&) {
    {
        std::lock_guard lock(mu_);
        calls_.push_back(messages);
    }
    return script_.take();
}

std::vector<std::vector<ChatMessage>> ScriptedChatProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

std::vector<WebResult> ScriptedWebSearchProvider::search(std::string_view query,
                                                         const std::optional<std::string>& site_filter) {
    {
        std::lock_guard lock(mu_);
        calls_.push_back({std::string(query), site_filter});
    }
    return script_.take();
}

std::vector<ScriptedWebSearchProvider::Call> ScriptedWebSearchProvider::calls() const {
    std::lock_guard lock(mu_);
    return calls_;
}

ResearchResult ScriptedResearchProvider::research(std::string_view question,
                                                  const std::optional<std::vector<std::string>>&) {
    {
        std::lock_guard lock(mu_);
        questions_.emplace_back(question);
    }
    return script_.take();
}

std::vector<std::string> ScriptedResearchProvider::questions() const {
    std::lock_guard lock(mu_);
    return questions_;
}

std::vector<double> HashEmbeddingProvider::hash_vector(std::string_view text, EmbeddingProfile profile) const {
    std::vector<double> sum(dimension_, 0.0);
    auto add_direction = [&](std::string_view piece) {
        std::uint64_t state = fnv1a(piece, fnv1a(to_string(profile), seed_ ^ 1469598103934665603ULL));
        for (auto& v : sum) {
            // uniform in [-1, 1)
            v += static_cast<double>(splitmix64(state) >> 11) * (2.0 / 9007199254740992.0) - 1.0;
        }
    };
    auto lowered = to_lower_ascii(text);
    auto tokens = tokenize(lowered);
    if (tokens.empty()) {
        add_direction(lowered);
    } else {
        for (const auto& t : tokens) add_direction(std::string_view(lowered).substr(t.begin, t.end - t.begin));
    }
    double norm = 0.0;
    for (double v : sum) norm += v * v;
    norm = std::sqrt(norm);
    if (norm > 0.0) {
        for (auto& v : sum) v /= norm;
    }
    return sum;
}

std::vector<std::vector<double>> HashEmbeddingProvider::embed(const std::vector<std::string>& texts,
                                                              EmbeddingProfile profile) {
    std::vector<std::vector<double>> out;
    out.reserve(texts.size());
    std::lock_guard lock(mu_);
    for (const auto& text : texts) {
        auto it = pinned_.find({profile, text});
        out.push_back(it != pinned_.end() ? it->second : hash_vector(text, profile));
    }
    texts_embedded_ += texts.size();
    return out;
}

void HashEmbeddingProvider::pin(EmbeddingProfile profile, std::string text, std::vector<double> vector) {
    if (vector.size() != dimension_) {
        throw Error(ErrorCode::kDimensionMismatch, "pinned vector has " + std::to_string(vector.size()) +
                                                       " components, provider dimension is " +
                                                       std::to_string(dimension_));
    }
    std::lock_guard lock(mu_);
    pinned_[{profile, std::move(text)}] = std::move(vector);
}

std::size_t HashEmbeddingProvider::texts_embedded() const {
    std::lock_guard lock(mu_);
    return texts_embedded_;
}

}  // namespace lexagent
