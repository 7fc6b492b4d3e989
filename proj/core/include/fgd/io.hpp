#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include "fgd/tensor.hpp"

namespace fgd {

/// Failure reading or writing a file; the message carries the path.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// FGT1 container: "FGT1", u32 rank, u32 dims..., f32 data, all little-endian.
std::string encode_fgt(const Tensor<float>& t);
Tensor<float> decode_fgt(std::string_view bytes, const std::string& origin = "<memory>");

void write_fgt(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> read_fgt(const std::filesystem::path& path);

/// Writes to a sibling temporary and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);
std::string read_file(const std::filesystem::path& path);

}  // namespace fgd
