#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace seqmtl {

// Lower-case hex SHA-256 digest.
std::string sha256_hex(std::string_view data);

// Key for per-sentence contextual vectors: SHA-256 of the surface tokens
// joined with the ASCII unit separator (0x1F).
std::string sentence_key(const std::vector<std::string>& tokens);

}  // namespace seqmtl
