#pragma once
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

namespace dcg {

// Shortest decimal that round-trips to the same double.
std::string format_double(double v);
// Strict full-string parse; throws DataError on failure.
double parse_double(const std::string& s, const std::string& context);
int64_t parse_int(const std::string& s, const std::string& context);

std::vector<std::string> split(const std::string& s, char sep);

std::string read_text_file(const std::filesystem::path& path);
// Writes to "<path>.tmp" then renames, so failures leave no partial file.
void write_text_file_atomic(const std::filesystem::path& path, const std::string& content);
void write_binary_file_atomic(const std::filesystem::path& path, const std::string& bytes);
// Stages every file to "<path>.tmp" first, then renames them all; a failure
// while writing leaves no renamed output behind.
void write_files_atomic(const std::vector<std::pair<std::filesystem::path, std::string>>& files);

}  // namespace dcg
