#pragma once
#include <unistd.h>

#include <filesystem>
#include <functional>
#include <string>

#include "dcg/rng.hpp"
#include "dcg/tensor.hpp"

namespace testutil {

// Scratch directory removed on scope exit.
struct TempDir {
  std::filesystem::path path;
  explicit TempDir(const std::string& tag) {
    path = std::filesystem::temp_directory_path() /
           ("dcg_test_" + tag + "_" + std::to_string(::getpid()));
    std::filesystem::remove_all(path);
    std::filesystem::create_directories(path);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path, ec);
  }
};

// Central finite difference of f at the given leaf coordinate.
inline double fd(dcg::Tensor& leaf, size_t coord, const std::function<double()>& f,
                 double h = 1e-5) {
  auto& data = leaf.mutable_data();
  double orig = data[coord];
  data[coord] = orig + h;
  double up = f();
  data[coord] = orig - h;
  double down = f();
  data[coord] = orig;
  return (up - down) / (2.0 * h);
}

inline dcg::Tensor rand_tensor(dcg::Shape shape, dcg::Rng& rng, double lo = -2.0, double hi = 2.0,
                               bool requires_grad = true) {
  int64_t n = dcg::shape_numel(shape);
  std::vector<double> d(static_cast<size_t>(n));
  for (auto& v : d) v = rng.uniform(lo, hi);
  return dcg::Tensor::from_data(std::move(shape), std::move(d), requires_grad);
}

}  // namespace testutil
