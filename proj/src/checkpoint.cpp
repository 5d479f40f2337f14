#include "fssl/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace fssl {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

namespace {
constexpr const char* kMagic = "FSSLCKPT 1";
}

void save_params(const std::string& path, const ParamMap& params) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("save_params: cannot open " + path);
  f << kMagic << "\n" << params.size() << "\n";
  for (const auto& [name, t] : params) {
    f << name << " " << t.ndim();
    for (int d : t.shape()) f << " " << d;
    f << "\n";
  }
  f << "DATA\n";
  for (const auto& [name, t] : params) {
    const auto& a = t.array();
    f.write(reinterpret_cast<const char*>(a.data()),
            static_cast<std::streamsize>(a.size() * sizeof(double)));
  }
  if (!f) fail("save_params: write failed for " + path);
}

ParamMap load_params(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("load_params: cannot open " + path);
  std::string line;
  std::getline(f, line);
  if (line != kMagic) fail("load_params: bad magic in " + path);
  std::getline(f, line);
  size_t count = std::stoul(line);
  std::vector<std::pair<std::string, Shape>> entries;
  entries.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    std::getline(f, line);
    std::istringstream is(line);
    std::string name;
    int ndim = 0;
    is >> name >> ndim;
    Shape s(static_cast<size_t>(ndim));
    for (int d = 0; d < ndim; ++d) is >> s[static_cast<size_t>(d)];
    if (!is) fail("load_params: malformed manifest line in " + path);
    entries.emplace_back(std::move(name), std::move(s));
  }
  std::getline(f, line);
  if (line != "DATA") fail("load_params: missing DATA separator in " + path);
  ParamMap out;
  for (auto& [name, shape] : entries) {
    Eigen::ArrayXd a(shape_numel(shape));
    f.read(reinterpret_cast<char*>(a.data()),
           static_cast<std::streamsize>(a.size() * sizeof(double)));
    if (!f) fail("load_params: truncated data in " + path);
    out.emplace(std::move(name), Tensor::from_array(std::move(shape), std::move(a)));
  }
  return out;
}

}  // namespace fssl
