#pragma once
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace dcg {

// Text embedding source. Implementations must be deterministic: the same
// prompt string always yields the same vector.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual int64_t width() const = 0;
  virtual std::vector<double> encode(const std::string& prompt) const = 0;
};

// Deterministic pseudo-random unit vector from (seed, prompt bytes).
// Distinct prompts give near-orthogonal directions at reasonable widths.
std::vector<double> hash_encode(const std::string& prompt, uint64_t seed, int64_t d_t);

class HashTextEncoder final : public TextEncoder {
 public:
  HashTextEncoder(uint64_t seed, int64_t d_t);
  int64_t width() const override { return d_t_; }
  std::vector<double> encode(const std::string& prompt) const override;

 private:
  uint64_t seed_;
  int64_t d_t_;
};

// Encoder backed by a precomputed embedding file (one record per line:
// prompt, TAB, d_t space-separated floats). Lets users plug in embeddings
// from a real pretrained text encoder computed offline.
class FileTextEncoder final : public TextEncoder {
 public:
  static FileTextEncoder load(const std::filesystem::path& path);
  int64_t width() const override { return d_t_; }
  std::vector<double> encode(const std::string& prompt) const override;  // unknown prompt -> DataError
  size_t size() const { return table_.size(); }

 private:
  std::map<std::string, std::vector<double>> table_;
  int64_t d_t_ = 0;
};

// Writes the embedding-file format read by FileTextEncoder. Floats are
// serialized as shortest round-trip decimals.
void write_embedding_file(const std::filesystem::path& path,
                          const std::vector<std::pair<std::string, std::vector<double>>>& records);

}  // namespace dcg
