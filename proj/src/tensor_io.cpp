#include "stcm/tensor_io.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace stcm {

namespace {

constexpr std::array<char, 6> kMagic = {'S', 'T', 'C', 'M', '1', '\n'};

void put_u32(std::ostream& out, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  out.write(reinterpret_cast<const char*>(b), 4);
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  void read(void* dst, std::size_t n, const char* what) {
    in_.read(static_cast<char*>(dst), static_cast<std::streamsize>(n));
    const auto got = static_cast<std::uint64_t>(in_.gcount());
    if (got != n) throw FormatError(std::string("truncated ") + what, offset_ + got);
    offset_ += n;
  }

  std::uint32_t u32(const char* what) {
    unsigned char b[4];
    read(b, 4, what);
    return std::uint32_t{b[0]} | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) |
           (std::uint32_t{b[3]} << 24);
  }

  std::uint64_t offset() const { return offset_; }

 private:
  std::istream& in_;
  std::uint64_t offset_ = 0;
};

}  // namespace

void write_tensor(std::ostream& out, const Tensor& t) {
  check_shape(t.shape());
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, static_cast<std::uint32_t>(t.rank()));
  for (Index e : t.shape()) put_u32(out, static_cast<std::uint32_t>(e));
  for (double v : t) put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  if (!out) throw std::runtime_error("write_tensor: stream failure");
}

void write_tensor(const std::filesystem::path& path, const Tensor& t) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  write_tensor(out, t);
}

Tensor read_tensor(std::istream& in) {
  Reader r(in);
  std::array<char, 6> magic{};
  r.read(magic.data(), magic.size(), "magic");
  if (magic != kMagic) throw FormatError("bad magic, expected STCM1", 0);
  const std::uint64_t rank_offset = r.offset();
  const std::uint32_t rank = r.u32("rank");
  if (rank < 1 || rank > kMaxRank) {
    throw FormatError("rank " + std::to_string(rank) + " outside 1.." + std::to_string(kMaxRank), rank_offset);
  }
  Shape shape(rank);
  for (auto& e : shape) {
    const std::uint64_t at = r.offset();
    e = r.u32("extent");
    if (e < 1) throw FormatError("zero extent", at);
  }
  Tensor t(shape);
  for (double& v : t) v = static_cast<double>(std::bit_cast<float>(r.u32("payload")));
  if (in.peek() != std::char_traits<char>::eof()) throw FormatError("trailing bytes after payload", r.offset());
  return t;
}

Tensor read_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return read_tensor(in);
}

}  // namespace stcm
