#pragma once
#include <string>
#include <vector>

namespace dcg {

struct GradCheckOptions {
  std::string only_op;    // empty: run everything
  bool corrupt = false;   // deliberately damage one analytic gradient (negative control)
};

struct GradCheckReport {
  std::string name;
  bool pass = false;
  double max_rel = 0.0;
  std::string worst;  // coordinate of the largest error
  int64_t coords = 0;
  double seconds = 0.0;
};

// Central finite differences (step 1e-5) against reverse-mode gradients
// for every differentiable op plus the end-to-end training objective on a
// tiny model. Relative error must stay below 1e-4, with the comparison
// denominator floored at 0.1.
std::vector<GradCheckReport> run_gradchecks(const GradCheckOptions& opts = {});

bool all_passed(const std::vector<GradCheckReport>& reports);
std::vector<std::string> gradcheck_names();

}  // namespace dcg
