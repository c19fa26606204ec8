#include "kfbf/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace kfbf::io {

void ByteWriter::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
  if (!out) throw Error("write failed: " + path.string());
}

ByteReader ByteReader::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return ByteReader(std::move(data));
}

void ByteReader::need(std::uint64_t n, const char* what) const {
  if (n > buf_.size() - pos_) {
    throw FormatError(std::string("truncated file while reading ") + what + ": need " +
                          std::to_string(n) + " bytes, " + std::to_string(buf_.size() - pos_) +
                          " left",
                      pos_);
  }
}

std::string ByteReader::bytes(std::size_t n, const char* what) {
  need(n, what);
  std::string s(buf_.data() + pos_, n);
  pos_ += n;
  return s;
}

void ByteReader::f64s(std::span<double> out, const char* what) {
  need(out.size_bytes(), what);
  std::memcpy(out.data(), buf_.data() + pos_, out.size_bytes());
  pos_ += out.size_bytes();
}

void ByteReader::seek(std::uint64_t pos, const char* what) {
  if (pos > buf_.size()) {
    throw FormatError(std::string("offset for ") + what + " points past end of file", pos_);
  }
  pos_ = pos;
}

}  // namespace kfbf::io
