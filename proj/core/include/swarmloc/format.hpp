#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace swarmloc {

/// 17 significant digits: enough to round-trip any double exactly.
std::string format_double(double v);

/// 64-bit FNV-1a digest, used for artifact determinism checks.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex_digest(std::uint64_t h);
/// Digest of a whole file; throws swarmloc::Error if unreadable.
std::string file_digest(const std::string& path);

}  // namespace swarmloc
