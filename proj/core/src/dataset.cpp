#include "dcg/dataset.hpp"

#include <cmath>
#include <unordered_set>

#include "dcg/error.hpp"
#include "dcg/io_util.hpp"

namespace dcg {

namespace {

std::string encode_split(const Split& sp) {
  std::string out;
  for (const auto& s : sp.samples) {
    out += std::to_string(s.id);
    out += '\t';
    out += std::to_string(s.label);
    out += '\t';
    for (size_t k = 0; k < s.concept_labels.size(); ++k) {
      if (k) out += ' ';
      out += std::to_string(s.concept_labels[k]);
    }
    out += '\t';
    for (size_t i = 0; i < s.patches.size(); ++i) {
      if (i) out += ' ';
      out += format_double(s.patches[i]);
    }
    out += '\n';
  }
  return out;
}

Split decode_split(const std::string& text, const std::string& name, const DatasetBundle& ds) {
  Split out;
  int64_t K = ds.schema.concept_count();
  int64_t feat = ds.patch_count * ds.patch_width;
  size_t start = 0;
  int64_t lineno = 0;
  while (start < text.size()) {
    ++lineno;
    size_t end = text.find('\n', start);
    std::string where = name + ".records line " + std::to_string(lineno);
    if (end == std::string::npos)
      throw DataError(where + ": truncated record (missing newline)");
    std::string line = text.substr(start, end - start);
    start = end + 1;

    auto fields = split(line, '\t');
    if (fields.size() != 4)
      throw DataError(where + ": expected 4 TAB fields, got " + std::to_string(fields.size()));

    SampleRecord r;
    r.id = parse_int(fields[0], where);
    int64_t label = parse_int(fields[1], where);
    if (label < 0 || label >= ds.classes)
      throw DataError(where + ": diagnosis label " + fields[1] + " out of range");
    r.label = static_cast<int>(label);

    for (const auto& tok : split(fields[2], ' ')) {
      if (tok.empty()) continue;
      r.concept_labels.push_back(static_cast<int>(parse_int(tok, where)));
    }
    if (static_cast<int64_t>(r.concept_labels.size()) != K)
      throw DataError(where + ": " + std::to_string(r.concept_labels.size()) +
                      " concept labels, expected " + std::to_string(K));
    for (int64_t k = 0; k < K; ++k) {
      int v = r.concept_labels[static_cast<size_t>(k)];
      if (v < 0 || v >= ds.schema.value_count(k))
        throw DataError(where + ": concept " + std::to_string(k) + " label " + std::to_string(v) +
                        " out of range");
    }

    r.patches.reserve(static_cast<size_t>(feat));
    for (const auto& tok : split(fields[3], ' ')) {
      if (tok.empty()) continue;
      double v = parse_double(tok, where);
      if (!std::isfinite(v)) throw DataError(where + ": non-finite patch value");
      r.patches.push_back(v);
    }
    if (static_cast<int64_t>(r.patches.size()) != feat)
      throw DataError(where + ": " + std::to_string(r.patches.size()) +
                      " patch values, expected " + std::to_string(feat));
    out.samples.push_back(std::move(r));
  }
  return out;
}

}  // namespace

const Split& DatasetBundle::split(const std::string& name) const {
  if (name == "train") return train;
  if (name == "val") return val;
  if (name == "test") return test;
  throw DataError("unknown split \"" + name + "\"");
}

void write_dataset(const DatasetBundle& ds, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);

  nlohmann::ordered_json manifest;
  manifest["format_version"] = 1;
  manifest["schema"] = ds.schema.to_json();
  manifest["spec"] = ds.spec_echo;
  manifest["classes"] = ds.classes;
  manifest["patch_count"] = ds.patch_count;
  manifest["patch_width"] = ds.patch_width;
  if (ds.bayes_accuracy)
    manifest["bayes_accuracy"] = *ds.bayes_accuracy;
  else
    manifest["bayes_accuracy"] = nullptr;
  manifest["splits"] = {{"train", ds.train.size()}, {"val", ds.val.size()}, {"test", ds.test.size()}};

  write_files_atomic({{dir / "manifest", manifest.dump(2) + "\n"},
                      {dir / "train.records", encode_split(ds.train)},
                      {dir / "val.records", encode_split(ds.val)},
                      {dir / "test.records", encode_split(ds.test)}});
}

DatasetBundle read_dataset(const std::filesystem::path& dir) {
  auto manifest_path = dir / "manifest";
  if (!std::filesystem::exists(manifest_path))
    throw DataError("no dataset manifest at " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_text_file(manifest_path));
  } catch (const nlohmann::json::exception& e) {
    throw DataError("manifest parse failure: " + std::string(e.what()));
  }

  DatasetBundle ds{ConceptDictionary::from_json(manifest.at("schema")),
                   manifest.value("spec", nlohmann::json(nullptr)),
                   manifest.at("classes").get<int>(),
                   manifest.at("patch_count").get<int64_t>(),
                   manifest.at("patch_width").get<int64_t>(),
                   std::nullopt,
                   {},
                   {},
                   {}};
  if (manifest.contains("bayes_accuracy") && !manifest.at("bayes_accuracy").is_null())
    ds.bayes_accuracy = manifest.at("bayes_accuracy").get<double>();
  if (ds.classes < 2) throw DataError("manifest: need at least 2 diagnosis classes");
  if (ds.patch_count < 1 || ds.patch_width < 1) throw DataError("manifest: invalid patch dims");

  ds.train = decode_split(read_text_file(dir / "train.records"), "train", ds);
  ds.val = decode_split(read_text_file(dir / "val.records"), "val", ds);
  ds.test = decode_split(read_text_file(dir / "test.records"), "test", ds);

  auto check_size = [&](const char* name, const Split& s) {
    int64_t expect = manifest.at("splits").at(name).get<int64_t>();
    if (static_cast<int64_t>(s.size()) != expect)
      throw DataError(std::string(name) + ": manifest promises " + std::to_string(expect) +
                      " samples, file has " + std::to_string(s.size()));
  };
  check_size("train", ds.train);
  check_size("val", ds.val);
  check_size("test", ds.test);

  std::unordered_set<int64_t> ids;
  for (const Split* s : {&ds.train, &ds.val, &ds.test})
    for (const auto& r : s->samples)
      if (!ids.insert(r.id).second)
        throw DataError("sample id " + std::to_string(r.id) + " appears in more than one split");
  return ds;
}

std::vector<std::vector<int>> concept_label_table(const Split& sp) {
  std::vector<std::vector<int>> out;
  out.reserve(sp.size());
  for (const auto& s : sp.samples) out.push_back(s.concept_labels);
  return out;
}

std::vector<int> diag_label_table(const Split& sp) {
  std::vector<int> out;
  out.reserve(sp.size());
  for (const auto& s : sp.samples) out.push_back(s.label);
  return out;
}

}  // namespace dcg
