#include "cltlab/multiindex.hpp"

namespace cltlab {

std::vector<MultiIndex> multi_indices(int d, int lo, int hi) {
  if (d < 1 || d > kMaxDim) throw std::invalid_argument("multi_indices: d must be 1..3");
  if (lo < 0 || hi < lo) throw std::invalid_argument("multi_indices: need 0 <= lo <= hi");
  std::vector<MultiIndex> out;
  std::vector<int> a(d, 0);
  // graded enumeration; within a grade, first coordinate decreases last
  auto emit = [&](auto&& self, int axis, int remaining) -> void {
    if (axis == d - 1) {
      a[axis] = remaining;
      out.push_back(MultiIndex(a));
      return;
    }
    for (int v = remaining; v >= 0; --v) {
      a[axis] = v;
      self(self, axis + 1, remaining - v);
    }
  };
  for (int ord = lo; ord <= hi; ++ord) emit(emit, 0, ord);
  return out;
}

}  // namespace cltlab
