#include "csmri/ptf.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <functional>
#include <numeric>
#include <stdexcept>

namespace csmri::ptf {

static_assert(std::endian::native == std::endian::little, "PTF I/O assumes a little-endian host");

namespace {

constexpr std::array<char, 4> kMagic{'P', 'T', 'F', '1'};
constexpr std::uint32_t kMaxRank = 16;

void put_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<char const *>(&v), sizeof v); }

std::uint32_t get_u32(std::istream &is)
{
  std::uint32_t v = 0;
  if (!is.read(reinterpret_cast<char *>(&v), sizeof v)) {
    throw std::runtime_error("ptf: truncated header");
  }
  return v;
}

} // namespace

std::size_t Record::element_count() const
{
  return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

void write(std::ostream &os, Record const &rec)
{
  std::size_t const scalars = rec.element_count() * (rec.dtype == DType::Complex32 ? 2 : 1);
  if (scalars != rec.payload.size()) {
    throw std::invalid_argument("ptf: payload size does not match dims");
  }
  os.write(kMagic.data(), kMagic.size());
  put_u32(os, static_cast<std::uint32_t>(rec.dims.size()));
  for (auto d : rec.dims) {
    put_u32(os, d);
  }
  auto const tag = static_cast<std::uint8_t>(rec.dtype);
  os.write(reinterpret_cast<char const *>(&tag), 1);
  os.write(reinterpret_cast<char const *>(rec.payload.data()), static_cast<std::streamsize>(scalars * sizeof(float)));
  if (!os) {
    throw std::runtime_error("ptf: write failed");
  }
}

Record read(std::istream &is)
{
  std::array<char, 4> magic{};
  if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
    throw std::runtime_error("ptf: bad magic");
  }
  Record rec;
  std::uint32_t const rank = get_u32(is);
  if (rank > kMaxRank) {
    throw std::runtime_error("ptf: implausible rank " + std::to_string(rank));
  }
  rec.dims.resize(rank);
  for (auto &d : rec.dims) {
    d = get_u32(is);
  }
  std::uint8_t tag = 0;
  if (!is.read(reinterpret_cast<char *>(&tag), 1) || tag > 1) {
    throw std::runtime_error("ptf: unknown dtype tag");
  }
  rec.dtype = static_cast<DType>(tag);
  std::size_t const scalars = rec.element_count() * (rec.dtype == DType::Complex32 ? 2 : 1);
  rec.payload.resize(scalars);
  if (!is.read(reinterpret_cast<char *>(rec.payload.data()), static_cast<std::streamsize>(scalars * sizeof(float)))) {
    throw std::runtime_error("ptf: truncated payload");
  }
  return rec;
}

void save(std::filesystem::path const &path, Record const &rec)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("ptf: cannot open " + path.string() + " for writing");
  }
  write(os, rec);
}

Record load(std::filesystem::path const &path)
{
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw std::runtime_error("ptf: cannot open " + path.string());
  }
  return read(is);
}

Record from_complex(CxArray const &x)
{
  Record rec{{static_cast<std::uint32_t>(x.rows()), static_cast<std::uint32_t>(x.cols())}, DType::Complex32, {}};
  rec.payload.reserve(2 * x.size());
  for (Index i = 0; i < x.size(); i++) {
    rec.payload.push_back(static_cast<float>(x(i).real()));
    rec.payload.push_back(static_cast<float>(x(i).imag()));
  }
  return rec;
}

Record from_real(RealArray const &x)
{
  Record rec{{static_cast<std::uint32_t>(x.rows()), static_cast<std::uint32_t>(x.cols())}, DType::Real32, {}};
  rec.payload.reserve(x.size());
  for (Index i = 0; i < x.size(); i++) {
    rec.payload.push_back(static_cast<float>(x(i)));
  }
  return rec;
}

Record from_mask(SamplingMask const &m)
{
  Record rec{{static_cast<std::uint32_t>(m.size())}, DType::Real32, {}};
  for (auto v : m.lines) {
    rec.payload.push_back(v ? 1.0f : 0.0f);
  }
  return rec;
}

CxArray to_complex(Record const &rec)
{
  if (rec.dtype != DType::Complex32 || rec.dims.size() != 2) {
    throw std::runtime_error("ptf: expected a rank-2 complex record");
  }
  CxArray x(rec.dims[0], rec.dims[1]);
  for (Index i = 0; i < x.size(); i++) {
    x(i) = Cx(rec.payload[2 * i], rec.payload[2 * i + 1]);
  }
  return x;
}

RealArray to_real(Record const &rec)
{
  if (rec.dtype != DType::Real32 || rec.dims.size() != 2) {
    throw std::runtime_error("ptf: expected a rank-2 real record");
  }
  RealArray x(rec.dims[0], rec.dims[1]);
  for (Index i = 0; i < x.size(); i++) {
    x(i) = rec.payload[i];
  }
  return x;
}

void write_mask_csv(std::filesystem::path const &path, SamplingMask const &m)
{
  std::ofstream os(path);
  if (!os) {
    throw std::runtime_error("cannot open " + path.string() + " for writing");
  }
  for (Index r = 0; r < m.size(); r++) {
    os << r << ',' << (m.lines[r] ? 1 : 0) << '\n';
  }
}

} // namespace csmri::ptf
