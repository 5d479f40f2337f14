#include "fssl/common.hpp"

#include <cstdio>
#include <iostream>
#include <mutex>
#include <sstream>
#include <stdexcept>

namespace fssl {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v, char sep) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) os << sep;
    os << v[i];
  }
  return os.str();
}

namespace {
std::mutex& log_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

void log_warn(const std::string& msg) {
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cerr << "[fssl|warn] " << msg << "\n";
}

void log_info(const std::string& msg) {
  std::lock_guard<std::mutex> lock(log_mutex());
  std::cerr << "[fssl|info] " << msg << "\n";
}

uint64_t mix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

uint64_t seed_combine(uint64_t a, uint64_t b) { return mix64(a ^ mix64(b)); }

uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a, uint64_t b) {
  uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a over the tag
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return mix64(seed_combine(seed_combine(master, h), seed_combine(a, b + 1)));
}

void fail(const std::string& msg) { throw std::runtime_error(msg); }
void fail_invalid(const std::string& msg) { throw std::invalid_argument(msg); }

}  // namespace fssl
