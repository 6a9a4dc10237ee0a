#pragma once
#include <cstdint>
#include <vector>

namespace dcg {

struct EvalMetrics {
  double diag_acc = 0.0;
  double diag_macro_f1 = 0.0;
  double concept_acc = 0.0;
  double concept_macro_f1 = 0.0;
};

// One-vs-rest counts per class.
struct ClassCounts {
  int64_t tp = 0, fp = 0, fn = 0;
};

// Unweighted mean of per-class F1. Classes absent from both truth and
// predictions (tp+fp+fn == 0) are skipped; a class with counts but no
// true positives contributes 0.
double macro_f1(const std::vector<ClassCounts>& counts);

// Accumulates a multi-class confusion into per-class one-vs-rest counts.
void tally(std::vector<ClassCounts>& counts, int truth, int predicted);

}  // namespace dcg
