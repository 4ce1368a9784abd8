#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace lexagent {

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);
bool starts_with_ci(std::string_view s, std::string_view prefix);

/// A token is a maximal run of word bytes (ASCII alphanumerics, '_' and any
/// byte >= 0x80) or a single ASCII punctuation character. Whitespace only
/// separates. Offsets index the source string.
struct Token {
    std::size_t begin = 0;
    std::size_t end = 0;
};

std::vector<Token> tokenize(std::string_view text);
std::size_t count_tokens(std::string_view text);

/// True for tokens that close a sentence (".", "!", "?").
bool is_sentence_end(std::string_view token);

/// Replaces every "{name}" with values.at(name); unknown placeholders are left as-is.
std::string fill_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

/// Pulls the first balanced JSON object out of free-form model output
/// (tolerates code fences and surrounding prose).
std::optional<nlohmann::json> extract_json_object(std::string_view text);

/// Lower-cased host of an absolute http(s) URL, without port or "www.".
std::optional<std::string> url_host(std::string_view url);
bool looks_like_url(std::string_view url);

/// host equals domain or is a subdomain of it.
bool host_matches(std::string_view host, std::string_view domain);

}  // namespace lexagent
