#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace cltlab {

inline constexpr int kMaxDim = 3;
inline constexpr int kMaxDerivOrder = 4;

// Multi-index alpha = (a_1,...,a_d); |alpha| = a_1 + ... + a_d.
struct MultiIndex {
  std::array<int, kMaxDim> a{0, 0, 0};
  int dim = 1;

  MultiIndex() = default;
  MultiIndex(std::initializer_list<int> vals) {
    if (vals.size() == 0 || vals.size() > kMaxDim)
      throw std::invalid_argument("MultiIndex: dimension must be 1..3");
    dim = static_cast<int>(vals.size());
    int i = 0;
    for (int v : vals) a[i++] = v;
  }
  explicit MultiIndex(const std::vector<int>& vals) {
    if (vals.empty() || vals.size() > kMaxDim)
      throw std::invalid_argument("MultiIndex: dimension must be 1..3");
    dim = static_cast<int>(vals.size());
    for (int i = 0; i < dim; ++i) a[i] = vals[i];
  }

  int order() const { return a[0] + a[1] + a[2]; }
  int operator[](int i) const { return a[i]; }

  bool operator==(const MultiIndex& o) const { return dim == o.dim && a == o.a; }

  MultiIndex raised(int axis) const {
    MultiIndex r = *this;
    r.a[axis] += 1;
    return r;
  }

  std::string str() const {
    std::string s = "(";
    for (int i = 0; i < dim; ++i) s += std::to_string(a[i]) + (i + 1 < dim ? "," : "");
    return s + ")";
  }
};

// All multi-indices of dimension d with lo <= |alpha| <= hi, graded lexicographic.
std::vector<MultiIndex> multi_indices(int d, int lo, int hi);

}  // namespace cltlab
