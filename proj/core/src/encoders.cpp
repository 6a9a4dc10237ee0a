#include "dcg/encoders.hpp"

#include <cmath>
#include <fstream>

#include "dcg/error.hpp"
#include "dcg/io_util.hpp"
#include "dcg/rng.hpp"

namespace dcg {

std::vector<double> hash_encode(const std::string& prompt, uint64_t seed, int64_t d_t) {
  if (d_t < 8) throw ConfigError("hash_encode: d_t must be >= 8, got " + std::to_string(d_t));
  Rng rng(fnv1a64(prompt, fnv1a64_u64(seed)));
  std::vector<double> v(static_cast<size_t>(d_t));
  double sq = 0.0;
  for (auto& x : v) {
    x = rng.normal();
    sq += x * x;
  }
  double nrm = std::sqrt(sq);
  if (nrm < 1e-150) {
    // astronomically unlikely; keep determinism anyway
    v.assign(static_cast<size_t>(d_t), 0.0);
    v[0] = 1.0;
    return v;
  }
  for (auto& x : v) x /= nrm;
  return v;
}

HashTextEncoder::HashTextEncoder(uint64_t seed, int64_t d_t) : seed_(seed), d_t_(d_t) {
  if (d_t < 8) throw ConfigError("HashTextEncoder: d_t must be >= 8");
}

std::vector<double> HashTextEncoder::encode(const std::string& prompt) const {
  return hash_encode(prompt, seed_, d_t_);
}

FileTextEncoder FileTextEncoder::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open embedding file " + path.string());
  FileTextEncoder enc;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto where = path.filename().string() + " line " + std::to_string(lineno);
    auto tab = line.find('\t');
    if (tab == std::string::npos) throw DataError(where + ": missing TAB separator");
    std::string prompt = line.substr(0, tab);
    std::vector<std::string> fields = split(line.substr(tab + 1), ' ');
    std::vector<double> vec;
    vec.reserve(fields.size());
    for (const auto& f : fields) {
      if (f.empty()) continue;
      vec.push_back(parse_double(f, where));
    }
    if (vec.empty()) throw DataError(where + ": no embedding values");
    if (enc.d_t_ == 0) enc.d_t_ = static_cast<int64_t>(vec.size());
    if (static_cast<int64_t>(vec.size()) != enc.d_t_)
      throw DataError(where + ": width " + std::to_string(vec.size()) + " but file uses d_t=" +
                      std::to_string(enc.d_t_));
    if (!enc.table_.emplace(std::move(prompt), std::move(vec)).second)
      throw DataError(where + ": duplicate prompt");
  }
  if (enc.table_.empty()) throw DataError("embedding file " + path.string() + " is empty");
  return enc;
}

std::vector<double> FileTextEncoder::encode(const std::string& prompt) const {
  auto it = table_.find(prompt);
  if (it == table_.end()) throw DataError("embedding file has no entry for prompt \"" + prompt + "\"");
  return it->second;
}

void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::vector<double>>>& records) {
  std::string out;
  for (const auto& [prompt, vec] : records) {
    if (prompt.find('\t') != std::string::npos || prompt.find('\n') != std::string::npos)
      throw DataError("prompt may not contain TAB or newline: \"" + prompt + "\"");
    out += prompt;
    out += '\t';
    for (size_t i = 0; i < vec.size(); ++i) {
      if (i) out += ' ';
      out += format_double(vec[i]);
    }
    out += '\n';
  }
  write_text_file_atomic(path, out);
}

}  // namespace dcg
