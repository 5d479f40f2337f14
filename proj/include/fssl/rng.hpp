#pragma once

#include <cstdint>
#include <vector>

#include "fssl/common.hpp"

namespace fssl {

// xoshiro256++ with hand-rolled distributions. Everything the simulator
// draws goes through this class so that results are bit-stable across
// standard-library versions and thread schedules.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  double uniform();                      // [0, 1)
  double uniform(double lo, double hi);  // [lo, hi)
  int uniform_int(int n);                // [0, n), n >= 1
  bool bernoulli(double p);
  double normal(double mean = 0.0, double stddev = 1.0);
  double gamma(double alpha);  // alpha > 0, unit scale
  std::vector<double> dirichlet(double alpha, int n);

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (int i = static_cast<int>(v.size()) - 1; i > 0; --i) {
      int j = uniform_int(i + 1);
      std::swap(v[i], v[static_cast<size_t>(j)]);
    }
  }

  // k distinct values from {0, ..., n-1}, in draw order.
  std::vector<int> sample_without_replacement(int n, int k);

 private:
  uint64_t s_[4];
  bool have_spare_normal_ = false;
  double spare_normal_ = 0.0;
};

}  // namespace fssl
