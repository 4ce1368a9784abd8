#include "lexagent/pdf.hpp"

#include <cctype>
#include <algorithm>
#include <cstdlib>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <variant>

#include <zlib.h>

#include "lexagent/error.hpp"

namespace lexagent {

namespace {

[[noreturn]] void malformed(const std::string& why) { throw Error(ErrorCode::kMalformedDocument, why); }

struct Object;
using Array = std::vector<Object>;
using Dict = std::map<std::string, Object>;

struct Name {
    std::string value;
};
struct Keyword {
    std::string value;
};
struct Ref {
    int num = 0;
    int gen = 0;
};
struct Stream {
    std::shared_ptr<Dict> dict;
    std::string_view raw;
};
struct PdfString {
    std::string bytes;
    bool hex = false;
};

struct Object {
    std::variant<std::monostate, bool, double, PdfString, Name, std::shared_ptr<Array>, std::shared_ptr<Dict>, Ref,
                 Stream, Keyword>
        v;

    const Dict* dict() const {
        if (auto d = std::get_if<std::shared_ptr<Dict>>(&v)) return d->get();
        if (auto s = std::get_if<Stream>(&v)) return s->dict.get();
        return nullptr;
    }
    const Array* array() const {
        auto a = std::get_if<std::shared_ptr<Array>>(&v);
        return a ? a->get() : nullptr;
    }
    const Name* name() const { return std::get_if<Name>(&v); }
    const Ref* ref() const { return std::get_if<Ref>(&v); }
    const Stream* stream() const { return std::get_if<Stream>(&v); }
    const Keyword* keyword() const { return std::get_if<Keyword>(&v); }
    const PdfString* string() const { return std::get_if<PdfString>(&v); }
    std::optional<double> number() const {
        if (auto n = std::get_if<double>(&v)) return *n;
        return std::nullopt;
    }
};

const Object* dict_get(const Dict* d, const std::string& key) {
    if (!d) return nullptr;
    auto it = d->find(key);
    return it == d->end() ? nullptr : &it->second;
}

bool is_ws(char c) { return c == ' ' || c == '\n' || c == '\r' || c == '\t' || c == '\f' || c == '\0'; }
bool is_delim(char c) {
    return c == '(' || c == ')' || c == '<' || c == '>' || c == '[' || c == ']' || c == '{' || c == '}' || c == '/' ||
           c == '%';
}

class Parser {
public:
    using LengthResolver = std::function<std::optional<std::size_t>(const Ref&)>;

    Parser(std::string_view data, std::size_t pos = 0, LengthResolver resolver = {})
        : d_(data), p_(pos), resolve_length_(std::move(resolver)) {}

    std::size_t pos() const { return p_; }
    bool at_end() {
        skip_ws();
        return p_ >= d_.size();
    }

    void skip_ws() {
        while (p_ < d_.size()) {
            if (is_ws(d_[p_])) {
                ++p_;
            } else if (d_[p_] == '%') {
                while (p_ < d_.size() && d_[p_] != '\n' && d_[p_] != '\r') ++p_;
            } else {
                break;
            }
        }
    }

    Object parse() {
        skip_ws();
        if (p_ >= d_.size()) malformed("unexpected end of data");
        char c = d_[p_];
        if (c == '/') return {parse_name()};
        if (c == '(') return {parse_literal()};
        if (c == '<') {
            if (p_ + 1 < d_.size() && d_[p_ + 1] == '<') return parse_dict_or_stream();
            return {parse_hex()};
        }
        if (c == '[') {
            ++p_;
            auto arr = std::make_shared<Array>();
            while (true) {
                skip_ws();
                if (p_ >= d_.size()) malformed("unterminated array");
                if (d_[p_] == ']') {
                    ++p_;
                    break;
                }
                arr->push_back(parse());
            }
            return {arr};
        }
        if (c == '+' || c == '-' || c == '.' || std::isdigit(static_cast<unsigned char>(c))) return parse_number_or_ref();
        if (c == ']' || c == '>' || c == ')' || c == '}' || c == '{') {
            ++p_;
            return {Keyword{std::string(1, c)}};
        }
        auto word = read_regular();
        if (word == "true") return {true};
        if (word == "false") return {false};
        if (word == "null") return {};
        return {Keyword{std::string(word)}};
    }

    /// Raw bytes up to the next "EI" after an inline image's "ID".
    void skip_inline_image() {
        auto end = d_.find("EI", p_);
        while (end != std::string_view::npos) {
            bool before = end == 0 || is_ws(d_[end - 1]);
            bool after = end + 2 >= d_.size() || is_ws(d_[end + 2]);
            if (before && after) break;
            end = d_.find("EI", end + 2);
        }
        p_ = end == std::string_view::npos ? d_.size() : end + 2;
    }

private:
    std::string_view read_regular() {
        auto start = p_;
        while (p_ < d_.size() && !is_ws(d_[p_]) && !is_delim(d_[p_])) ++p_;
        if (p_ == start) {
            ++p_;
            return d_.substr(start, 1);
        }
        return d_.substr(start, p_ - start);
    }

    Name parse_name() {
        ++p_;
        std::string out;
        while (p_ < d_.size() && !is_ws(d_[p_]) && !is_delim(d_[p_])) {
            if (d_[p_] == '#' && p_ + 2 < d_.size() && std::isxdigit(static_cast<unsigned char>(d_[p_ + 1])) &&
                std::isxdigit(static_cast<unsigned char>(d_[p_ + 2]))) {
                out += static_cast<char>(std::strtol(std::string(d_.substr(p_ + 1, 2)).c_str(), nullptr, 16));
                p_ += 3;
            } else {
                out += d_[p_++];
            }
        }
        return {out};
    }

    PdfString parse_literal() {
        ++p_;
        std::string out;
        int depth = 1;
        while (p_ < d_.size()) {
            char c = d_[p_++];
            if (c == '\\') {
                if (p_ >= d_.size()) break;
                char e = d_[p_++];
                switch (e) {
                    case 'n': out += '\n'; break;
                    case 'r': out += '\r'; break;
                    case 't': out += '\t'; break;
                    case 'b': out += '\b'; break;
                    case 'f': out += '\f'; break;
                    case '\r':
                        if (p_ < d_.size() && d_[p_] == '\n') ++p_;
                        break;
                    case '\n': break;
                    default:
                        if (e >= '0' && e <= '7') {
                            int v = e - '0';
                            for (int k = 0; k < 2 && p_ < d_.size() && d_[p_] >= '0' && d_[p_] <= '7'; ++k) {
                                v = v * 8 + (d_[p_++] - '0');
                            }
                            out += static_cast<char>(v & 0xff);
                        } else {
                            out += e;
                        }
                }
            } else if (c == '(') {
                ++depth;
                out += c;
            } else if (c == ')') {
                if (--depth == 0) return {out, false};
                out += c;
            } else {
                out += c;
            }
        }
        malformed("unterminated string");
    }

    PdfString parse_hex() {
        ++p_;
        std::string digits;
        while (p_ < d_.size() && d_[p_] != '>') {
            if (std::isxdigit(static_cast<unsigned char>(d_[p_]))) digits += d_[p_];
            ++p_;
        }
        if (p_ >= d_.size()) malformed("unterminated hex string");
        ++p_;
        if (digits.size() % 2) digits += '0';
        std::string out;
        for (std::size_t i = 0; i < digits.size(); i += 2) {
            out += static_cast<char>(std::strtol(digits.substr(i, 2).c_str(), nullptr, 16));
        }
        return {out, true};
    }

    Object parse_number_or_ref() {
        auto start = p_;
        auto word = read_regular();
        char* end = nullptr;
        std::string w(word);
        double value = std::strtod(w.c_str(), &end);
        if (end == w.c_str()) return {Keyword{w}};
        bool integral = w.find('.') == std::string::npos && w[0] != '+' && w[0] != '-';
        if (integral) {
            auto save = p_;
            skip_ws();
            if (p_ < d_.size() && std::isdigit(static_cast<unsigned char>(d_[p_]))) {
                auto gen_word = read_regular();
                bool gen_digits = std::all_of(gen_word.begin(), gen_word.end(),
                                              [](char ch) { return std::isdigit(static_cast<unsigned char>(ch)); });
                skip_ws();
                if (gen_digits && p_ < d_.size() && d_[p_] == 'R' &&
                    (p_ + 1 >= d_.size() || is_ws(d_[p_ + 1]) || is_delim(d_[p_ + 1]))) {
                    ++p_;
                    return {Ref{static_cast<int>(value), std::atoi(std::string(gen_word).c_str())}};
                }
            }
            p_ = save;
        }
        (void)start;
        return {value};
    }

    Object parse_dict_or_stream() {
        p_ += 2;
        auto dict = std::make_shared<Dict>();
        while (true) {
            skip_ws();
            if (p_ + 1 >= d_.size()) malformed("unterminated dictionary");
            if (d_[p_] == '>' && d_[p_ + 1] == '>') {
                p_ += 2;
                break;
            }
            auto key = parse();
            auto* name = key.name();
            if (!name) malformed("dictionary key is not a name");
            (*dict)[name->value] = parse();
        }
        auto save = p_;
        skip_ws();
        if (d_.substr(p_, 6) != "stream") {
            p_ = save;
            return {dict};
        }
        p_ += 6;
        if (p_ < d_.size() && d_[p_] == '\r') ++p_;
        if (p_ < d_.size() && d_[p_] == '\n') ++p_;
        auto data_start = p_;
        std::optional<std::size_t> length;
        if (auto* len = dict_get(dict.get(), "Length")) {
            if (auto n = len->number()) {
                length = static_cast<std::size_t>(*n);
            } else if (auto* r = len->ref(); r && resolve_length_) {
                length = resolve_length_(*r);
            }
        }
        std::size_t data_end = std::string_view::npos;
        if (length && data_start + *length <= d_.size()) {
            auto q = data_start + *length;
            while (q < d_.size() && is_ws(d_[q])) ++q;
            if (d_.substr(q, 9) == "endstream") {
                data_end = data_start + *length;
                p_ = q + 9;
            }
        }
        if (data_end == std::string_view::npos) {
            auto q = d_.find("endstream", data_start);
            if (q == std::string_view::npos) malformed("stream without endstream");
            data_end = q;
            if (data_end > data_start && d_[data_end - 1] == '\n') --data_end;
            if (data_end > data_start && d_[data_end - 1] == '\r') --data_end;
            p_ = q + 9;
        }
        return {Stream{dict, d_.substr(data_start, data_end - data_start)}};
    }

    std::string_view d_;
    std::size_t p_;
    LengthResolver resolve_length_;
};

std::string inflate_bytes(std::string_view in) {
    z_stream zs{};
    if (inflateInit(&zs) != Z_OK) malformed("zlib init failed");
    zs.next_in = reinterpret_cast<Bytef*>(const_cast<char*>(in.data()));
    zs.avail_in = static_cast<uInt>(in.size());
    std::string out;
    char buf[16384];
    int rc = Z_OK;
    while (rc == Z_OK) {
        zs.next_out = reinterpret_cast<Bytef*>(buf);
        zs.avail_out = sizeof buf;
        rc = inflate(&zs, Z_NO_FLUSH);
        out.append(buf, sizeof buf - zs.avail_out);
        if (rc == Z_BUF_ERROR && zs.avail_in == 0) break;  // truncated but usable
    }
    inflateEnd(&zs);
    if (rc != Z_STREAM_END && rc != Z_BUF_ERROR && rc != Z_OK) malformed("corrupt FlateDecode stream");
    return out;
}

class Document {
public:
    explicit Document(std::string_view data) : data_(data) {
        index_objects();
        load_object_streams();
    }

    const Object* get(int num) {
        if (auto it = cache_.find(num); it != cache_.end()) return &it->second;
        auto off = offsets_.find(num);
        if (off == offsets_.end()) return nullptr;
        if (!in_progress_.insert(num).second) return nullptr;
        Object obj;
        try {
            Parser parser(data_, off->second, [this](const Ref& r) -> std::optional<std::size_t> {
                auto* o = get(r.num);
                if (!o) return std::nullopt;
                if (auto n = o->number()) return static_cast<std::size_t>(*n);
                return std::nullopt;
            });
            obj = parser.parse();
        } catch (const Error&) {
            obj = {};
        }
        in_progress_.erase(num);
        return &cache_.emplace(num, std::move(obj)).first->second;
    }

    const Object* resolve(const Object* o) {
        for (int hops = 0; o && o->ref() && hops < 32; ++hops) o = get(o->ref()->num);
        return o;
    }

    std::string decode(const Stream& s) {
        const Object* filter = resolve(dict_get(s.dict.get(), "Filter"));
        std::vector<std::string> filters;
        if (filter && filter->name()) {
            filters.push_back(filter->name()->value);
        } else if (filter && filter->array()) {
            for (const auto& f : *filter->array()) {
                if (f.name()) filters.push_back(f.name()->value);
            }
        }
        std::string data(s.raw);
        for (const auto& f : filters) {
            if (f == "FlateDecode" || f == "Fl") {
                data = inflate_bytes(data);
            } else {
                return {};  // image or unsupported text encoding: no extractable text
            }
        }
        return data;
    }

    std::vector<int> object_numbers() const {
        std::set<int> nums;
        for (const auto& [n, off] : offsets_) nums.insert(n);
        for (const auto& [n, obj] : cache_) nums.insert(n);
        return {nums.begin(), nums.end()};
    }

private:
    void index_objects() {
        for (std::size_t i = data_.find("obj"); i != std::string_view::npos; i = data_.find("obj", i + 3)) {
            if (i + 3 < data_.size() && !is_ws(data_[i + 3]) && !is_delim(data_[i + 3])) continue;
            std::size_t j = i;
            if (j == 0 || !is_ws(data_[j - 1])) continue;
            while (j > 0 && is_ws(data_[j - 1])) --j;
            auto gen_end = j;
            while (j > 0 && std::isdigit(static_cast<unsigned char>(data_[j - 1]))) --j;
            if (j == gen_end || j == 0 || !is_ws(data_[j - 1])) continue;
            while (j > 0 && is_ws(data_[j - 1])) --j;
            auto num_end = j;
            while (j > 0 && std::isdigit(static_cast<unsigned char>(data_[j - 1]))) --j;
            if (j == num_end) continue;
            if (j > 0 && !is_ws(data_[j - 1]) && !is_delim(data_[j - 1])) continue;
            int num = std::atoi(std::string(data_.substr(j, num_end - j)).c_str());
            offsets_[num] = i + 3;  // later definitions win (incremental updates)
        }
    }

    void load_object_streams() {
        std::vector<int> nums;
        for (const auto& [n, off] : offsets_) nums.push_back(n);
        for (int n : nums) {
            const Object* o = get(n);
            if (!o || !o->stream()) continue;
            const auto* type = dict_get(o->stream()->dict.get(), "Type");
            if (!type || !type->name() || type->name()->value != "ObjStm") continue;
            auto count = dict_get(o->stream()->dict.get(), "N");
            auto first = dict_get(o->stream()->dict.get(), "First");
            if (!count || !first || !count->number() || !first->number()) continue;
            auto body = std::make_shared<std::string>(decode(*o->stream()));
            owned_.push_back(body);
            Parser header(*body);
            std::vector<std::pair<int, std::size_t>> entries;
            try {
                for (int k = 0; k < static_cast<int>(*count->number()); ++k) {
                    auto num = header.parse().number();
                    auto off = header.parse().number();
                    if (!num || !off) break;
                    entries.emplace_back(static_cast<int>(*num), static_cast<std::size_t>(*off));
                }
                for (const auto& [num, off] : entries) {
                    if (offsets_.count(num) || cache_.count(num)) continue;
                    Parser p(*body, static_cast<std::size_t>(*first->number()) + off);
                    cache_.emplace(num, p.parse());
                }
            } catch (const Error&) {
                continue;
            }
        }
    }

    std::string_view data_;
    std::map<int, std::size_t> offsets_;
    std::unordered_map<int, Object> cache_;
    std::set<int> in_progress_;
    std::vector<std::shared_ptr<std::string>> owned_;
};

void append_utf8(std::string& out, unsigned cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

std::string decode_text_string(const PdfString& s) {
    const auto& b = s.bytes;
    std::string out;
    if (b.size() >= 2 && static_cast<unsigned char>(b[0]) == 0xFE && static_cast<unsigned char>(b[1]) == 0xFF) {
        for (std::size_t i = 2; i + 1 < b.size(); i += 2) {
            unsigned cp = (static_cast<unsigned char>(b[i]) << 8) | static_cast<unsigned char>(b[i + 1]);
            if (cp >= 0xD800 && cp < 0xDC00 && i + 3 < b.size()) {
                unsigned lo = (static_cast<unsigned char>(b[i + 2]) << 8) | static_cast<unsigned char>(b[i + 3]);
                cp = 0x10000 + ((cp - 0xD800) << 10) + (lo - 0xDC00);
                i += 2;
            }
            append_utf8(out, cp);
        }
        return out;
    }
    for (unsigned char c : b) {
        if (c == '\r') continue;
        append_utf8(out, c);  // Latin-1
    }
    return out;
}

class TextCollector {
public:
    void text(const std::string& s) { line_ += s; }
    void space() {
        if (!line_.empty() && line_.back() != ' ') line_ += ' ';
    }
    void newline() {
        while (!line_.empty() && line_.back() == ' ') line_.pop_back();
        if (!line_.empty()) {
            if (!out_.empty()) out_ += '\n';
            out_ += line_;
        }
        line_.clear();
    }
    std::string finish() {
        newline();
        return out_;
    }

private:
    std::string out_;
    std::string line_;
};

void extract_content_text(std::string_view content, TextCollector& out) {
    Parser parser(content);
    std::vector<Object> operands;
    while (!parser.at_end()) {
        Object obj;
        try {
            obj = parser.parse();
        } catch (const Error&) {
            break;
        }
        auto* kw = obj.keyword();
        if (!kw) {
            operands.push_back(std::move(obj));
            continue;
        }
        const auto& op = kw->value;
        if (op == "Tj" && !operands.empty() && operands.back().string()) {
            out.text(decode_text_string(*operands.back().string()));
        } else if ((op == "'" || op == "\"") && !operands.empty() && operands.back().string()) {
            out.newline();
            out.text(decode_text_string(*operands.back().string()));
        } else if (op == "TJ" && !operands.empty() && operands.back().array()) {
            for (const auto& item : *operands.back().array()) {
                if (item.string()) {
                    out.text(decode_text_string(*item.string()));
                } else if (auto n = item.number(); n && *n < -200) {
                    out.space();
                }
            }
        } else if (op == "Td" || op == "TD") {
            if (operands.size() >= 2) {
                auto ty = operands[operands.size() - 1].number();
                auto tx = operands[operands.size() - 2].number();
                if (ty && *ty != 0) {
                    out.newline();
                } else if (tx && *tx > 0) {
                    out.space();
                }
            }
        } else if (op == "T*" || op == "ET" || op == "Tm") {
            out.newline();
        } else if (op == "ID") {
            parser.skip_inline_image();
        }
        operands.clear();
    }
}

void collect_pages(Document& doc, const Object* node, std::vector<const Dict*>& pages, std::set<const void*>& seen,
                   int depth) {
    node = doc.resolve(node);
    if (!node || depth > 64) return;
    const Dict* d = node->dict();
    if (!d || !seen.insert(d).second) return;
    const Object* kids = doc.resolve(dict_get(d, "Kids"));
    const Object* type = dict_get(d, "Type");
    bool is_page = type && type->name() && type->name()->value == "Page";
    if (is_page || !kids || !kids->array()) {
        if (is_page) pages.push_back(d);
        return;
    }
    for (const auto& kid : *kids->array()) collect_pages(doc, &kid, pages, seen, depth + 1);
}

}  // namespace

std::vector<PdfPage> extract_pdf_pages(std::string_view bytes) {
    if (bytes.empty()) malformed("empty document");
    auto header = bytes.substr(0, std::min<std::size_t>(bytes.size(), 1024)).find("%PDF-");
    if (header == std::string_view::npos) malformed("missing %PDF- header");

    Document doc(bytes);
    std::vector<const Dict*> pages;
    std::set<const void*> seen;
    for (int num : doc.object_numbers()) {
        const Object* o = doc.get(num);
        const Dict* d = o ? o->dict() : nullptr;
        const Object* type = dict_get(d, "Type");
        if (type && type->name() && type->name()->value == "Catalog") {
            collect_pages(doc, dict_get(d, "Pages"), pages, seen, 0);
            break;
        }
    }
    if (pages.empty()) {
        // No usable catalog: fall back to page objects in object-number order.
        for (int num : doc.object_numbers()) {
            const Object* o = doc.get(num);
            const Dict* d = o ? o->dict() : nullptr;
            const Object* type = dict_get(d, "Type");
            if (type && type->name() && type->name()->value == "Page") pages.push_back(d);
        }
    }
    if (pages.empty()) malformed("document has no pages");

    std::vector<PdfPage> out;
    out.reserve(pages.size());
    for (std::size_t i = 0; i < pages.size(); ++i) {
        TextCollector collector;
        const Object* contents = doc.resolve(dict_get(pages[i], "Contents"));
        std::vector<const Object*> streams;
        if (contents && contents->array()) {
            for (const auto& part : *contents->array()) streams.push_back(doc.resolve(&part));
        } else if (contents) {
            streams.push_back(contents);
        }
        std::string content;
        for (const auto* s : streams) {
            if (s && s->stream()) {
                content += doc.decode(*s->stream());
                content += '\n';
            }
        }
        extract_content_text(content, collector);
        out.push_back({static_cast<int>(i + 1), collector.finish()});
    }
    return out;
}

}  // namespace lexagent
