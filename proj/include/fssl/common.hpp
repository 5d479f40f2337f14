#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace fssl {

// Extents of a dense row-major tensor. Empty shape is not used; scalars are {1}.
using Shape = std::vector<int>;

std::string shape_str(const Shape& s);
int64_t shape_numel(const Shape& s);

std::string format_double(double v);
std::string join_ints(const std::vector<int>& v, char sep);

void log_warn(const std::string& msg);
void log_info(const std::string& msg);

// splitmix64 finalizer; the basis for all derived seed streams.
uint64_t mix64(uint64_t x);
uint64_t seed_combine(uint64_t a, uint64_t b);
uint64_t derive_seed(uint64_t master, std::string_view tag, uint64_t a = 0, uint64_t b = 0);

[[noreturn]] void fail(const std::string& msg);
[[noreturn]] void fail_invalid(const std::string& msg);

}  // namespace fssl
