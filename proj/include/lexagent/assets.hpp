#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "lexagent/domain.hpp"

namespace lexagent {

/// Directory of editable runtime data: prompts/, vocab/, config/.
/// Resolution order: explicit path, $LEXAGENT_ASSETS, the build-time default.
std::filesystem::path default_asset_dir();

class Assets {
public:
    explicit Assets(std::filesystem::path root = default_asset_dir());

    const std::filesystem::path& root() const { return root_; }

    /// Contents of prompts/<name>.txt.
    std::string prompt(const std::string& name) const;

    Vocabularies vocabularies() const;

    /// config/official_domains.txt: jurisdiction<TAB>host.
    std::map<Jurisdiction, std::string> official_domains() const;

    /// config/allowed_domains.txt: one host per line.
    std::vector<std::string> allowed_domains() const;

    std::filesystem::path url_grammar_file() const { return root_ / "config" / "bka_url_grammar.json"; }

private:
    std::filesystem::path root_;
};

std::map<Jurisdiction, std::string> load_official_domains(const std::filesystem::path& file);
std::vector<std::string> load_domain_list(const std::filesystem::path& file);

}  // namespace lexagent
