#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace cga {

// Lowercases ASCII letters and splits on runs of non-alphanumeric bytes.
// Bytes >= 0x80 count as word characters so UTF-8 words stay intact.
std::vector<std::string> tokenize(std::string_view text);

}  // namespace cga
