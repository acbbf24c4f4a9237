#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace hyb {

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& bytes);

// Regular files directly inside dir, sorted by filename.
std::vector<std::filesystem::path> list_files_sorted(const std::filesystem::path& dir);

}  // namespace hyb
