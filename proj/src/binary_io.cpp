#include "hybridboost/binary_io.hpp"

#include <fstream>
#include <iterator>

namespace hybridboost::io {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string() + " for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

void write_text(const std::filesystem::path& path, std::string_view text) {
  write_file(path, {reinterpret_cast<const std::uint8_t*>(text.data()), text.size()});
}

void ByteWriter::save(const std::filesystem::path& path) const { write_file(path, bytes_); }

ByteReader ByteReader::from_file(const std::filesystem::path& path) {
  return ByteReader(read_file(path), path.string());
}

void ByteReader::need(std::size_t n) const {
  if (n > remaining()) {
    throw CorruptionError(origin_ + ": truncated at byte offset " + std::to_string(pos_) +
                          " (need " + std::to_string(n) + " bytes, " +
                          std::to_string(remaining()) + " left)");
  }
}

void ByteReader::expect_magic(std::string_view tag) {
  if (remaining() < tag.size() ||
      std::memcmp(bytes_.data() + pos_, tag.data(), tag.size()) != 0) {
    throw FormatError(origin_ + ": bad magic at byte offset " + std::to_string(pos_) +
                      ", expected \"" + std::string(tag) + "\"");
  }
  pos_ += tag.size();
}

std::uint32_t ByteReader::expect_version(std::uint32_t supported) {
  const std::size_t at = pos_;
  const std::uint32_t v = u32();
  if (v != supported) {
    throw VersionError(origin_ + ": format version " + std::to_string(v) + " at byte offset " +
                       std::to_string(at) + ", this build reads version " +
                       std::to_string(supported));
  }
  return v;
}

std::string ByteReader::str() {
  const std::uint32_t n = u32();
  need(n);
  std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), n);
  pos_ += n;
  return s;
}

void ByteReader::expect_end() const {
  if (pos_ != bytes_.size()) {
    throw CorruptionError(origin_ + ": " + std::to_string(bytes_.size() - pos_) +
                          " trailing bytes after offset " + std::to_string(pos_));
  }
}

}  // namespace hybridboost::io
