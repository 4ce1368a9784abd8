#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace lexagent {

struct PdfPage {
    int number = 0;  // 1-based
    std::string text;

    bool operator==(const PdfPage&) const = default;
};

/// Text of every page in document order. Supports classic cross-reference
/// layouts and compressed object streams, FlateDecode content streams, and
/// the Tj/TJ/'/" text operators. Glyphs are decoded as single-byte text;
/// fonts with custom encodings come out as their raw codes.
/// Throws Error{kMalformedDocument}.
std::vector<PdfPage> extract_pdf_pages(std::string_view bytes);

}  // namespace lexagent
