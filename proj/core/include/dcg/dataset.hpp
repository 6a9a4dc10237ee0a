#pragma once
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dcg/schema.hpp"

namespace dcg {

struct SampleRecord {
  int64_t id = 0;
  int label = 0;                    // diagnosis y
  std::vector<int> concept_labels;  // a_k per concept
  std::vector<double> patches;      // P x d_in, row-major
};

struct Split {
  std::vector<SampleRecord> samples;
  size_t size() const { return samples.size(); }
};

// A dataset directory: `manifest` (JSON: schema, spec echo, split sizes,
// Bayes accuracy, tensor dims) plus train/val/test `.records` files with
// one sample per line:
//   id<TAB>label<TAB>a_0 a_1 ... a_{K-1}<TAB>f_0 f_1 ... f_{P*d_in-1}
struct DatasetBundle {
  ConceptDictionary schema;
  nlohmann::ordered_json spec_echo;  // generator spec, or null for external data
  int classes = 0;
  int64_t patch_count = 0;  // P
  int64_t patch_width = 0;  // d_in
  std::optional<double> bayes_accuracy;
  Split train, val, test;

  const Split& split(const std::string& name) const;
};

void write_dataset(const DatasetBundle& ds, const std::filesystem::path& dir);
DatasetBundle read_dataset(const std::filesystem::path& dir);

// Concept label table of a split, as consumed by build_ppmi.
std::vector<std::vector<int>> concept_label_table(const Split& split);
std::vector<int> diag_label_table(const Split& split);

}  // namespace dcg
