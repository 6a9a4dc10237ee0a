#include "dcg/metrics.hpp"

namespace dcg {

double macro_f1(const std::vector<ClassCounts>& counts) {
  double sum = 0.0;
  int64_t used = 0;
  for (const auto& c : counts) {
    if (c.tp + c.fp + c.fn == 0) continue;  // class absent everywhere
    double f1 = c.tp == 0 ? 0.0
                          : 2.0 * static_cast<double>(c.tp) /
                                static_cast<double>(2 * c.tp + c.fp + c.fn);
    sum += f1;
    ++used;
  }
  return used == 0 ? 0.0 : sum / static_cast<double>(used);
}

void tally(std::vector<ClassCounts>& counts, int truth, int predicted) {
  if (truth == predicted) {
    ++counts[static_cast<size_t>(truth)].tp;
  } else {
    ++counts[static_cast<size_t>(predicted)].fp;
    ++counts[static_cast<size_t>(truth)].fn;
  }
}

}  // namespace dcg
