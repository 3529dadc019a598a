#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "swarmloc/error.hpp"
#include "swarmloc/format.hpp"

namespace swarmloc {

std::string format_double(double v) {
  if (!std::isfinite(v)) throw Error("refusing to serialize a non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex_digest(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error("cannot read " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return hex_digest(fnv1a64(ss.str()));
}

}  // namespace swarmloc
