#include "fgd/io.hpp"

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>

namespace fgd {
namespace {

constexpr std::string_view kMagic = "FGT1";

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

std::uint32_t get_u32(std::string_view bytes, std::size_t at) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + i])) << (8 * i);
  return v;
}

}  // namespace

std::string encode_fgt(const Tensor<float>& t) {
  std::string out;
  out.reserve(8 + 4 * t.rank() + 4 * t.size());
  out.append(kMagic);
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
  for (float v : t.data()) put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

Tensor<float> decode_fgt(std::string_view bytes, const std::string& origin) {
  if (bytes.size() < 8 || bytes.substr(0, 4) != kMagic) throw IoError(origin + ": not an FGT1 tensor");
  const std::uint32_t rank = get_u32(bytes, 4);
  if (rank == 0 || bytes.size() < 8 + 4ull * rank) throw IoError(origin + ": truncated FGT1 header");
  Shape shape(rank);
  for (std::uint32_t i = 0; i < rank; ++i) {
    shape[i] = get_u32(bytes, 8 + 4 * i);
    if (shape[i] == 0) throw IoError(origin + ": zero dimension in FGT1 header");
  }
  const std::size_t n = numel(shape);
  const std::size_t off = 8 + 4ull * rank;
  if (bytes.size() != off + 4 * n) {
    throw IoError(origin + ": expected " + std::to_string(off + 4 * n) + " bytes for shape " + to_string(shape) +
                  ", found " + std::to_string(bytes.size()));
  }
  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) data[i] = std::bit_cast<float>(get_u32(bytes, off + 4 * i));
  return Tensor<float>(std::move(shape), std::move(data));
}

void write_fgt(const std::filesystem::path& path, const Tensor<float>& t) { write_file_atomic(path, encode_fgt(t)); }

Tensor<float> read_fgt(const std::filesystem::path& path) { return decode_fgt(read_file(path), path.string()); }

void write_file_atomic(const std::filesystem::path& path, std::string_view contents) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError(tmp.string() + ": cannot open for writing");
    os.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!os) throw IoError(tmp.string() + ": write failed");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError(path.string() + ": rename failed: " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(path.string() + ": cannot open for reading");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace fgd
