#include "lexagent/assets.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "lexagent/error.hpp"
#include "lexagent/text.hpp"

#ifndef LEXAGENT_ASSET_DIR
#define LEXAGENT_ASSET_DIR "assets"
#endif

namespace lexagent {

namespace {

std::string slurp(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw Error(ErrorCode::kConfig, "cannot open " + file.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::string> content_lines(const std::filesystem::path& file) {
    std::istringstream in(slurp(file));
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (!t.empty() && t[0] != '#') lines.push_back(line);
    }
    return lines;
}

}  // namespace

std::filesystem::path default_asset_dir() {
    if (const char* env = std::getenv("LEXAGENT_ASSETS"); env && *env) return env;
    return LEXAGENT_ASSET_DIR;
}

Assets::Assets(std::filesystem::path root) : root_(std::move(root)) {
    if (!std::filesystem::is_directory(root_)) throw Error(ErrorCode::kConfig, "asset directory missing: " + root_.string());
}

std::string Assets::prompt(const std::string& name) const { return slurp(root_ / "prompts" / (name + ".txt")); }

Vocabularies Assets::vocabularies() const { return Vocabularies::load(root_ / "vocab"); }

std::map<Jurisdiction, std::string> Assets::official_domains() const {
    return load_official_domains(root_ / "config" / "official_domains.txt");
}

std::vector<std::string> Assets::allowed_domains() const {
    return load_domain_list(root_ / "config" / "allowed_domains.txt");
}

std::map<Jurisdiction, std::string> load_official_domains(const std::filesystem::path& file) {
    std::map<Jurisdiction, std::string> out;
    for (const auto& line : content_lines(file)) {
        auto tab = line.find('\t');
        if (tab == std::string::npos) throw Error(ErrorCode::kConfig, "official domain line without TAB: " + line);
        auto j = parse_jurisdiction(line.substr(0, tab));
        if (!j) throw Error(ErrorCode::kConfig, "unknown jurisdiction in " + file.string() + ": " + line);
        out[*j] = to_lower_ascii(trim(line.substr(tab + 1)));
    }
    return out;
}

std::vector<std::string> load_domain_list(const std::filesystem::path& file) {
    std::vector<std::string> out;
    for (const auto& line : content_lines(file)) out.push_back(to_lower_ascii(trim(line)));
    return out;
}

}  // namespace lexagent
