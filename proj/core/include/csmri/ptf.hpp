#pragma once

#include "csmri/kspace.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <vector>

namespace csmri::ptf {

// Portable tensor file:
//   "PTF1" | u32 rank | rank x u32 dims | u8 dtype | little-endian payload
// dtype 0 is f32 real, 1 is f32 complex interleaved (re, im).
enum class DType : std::uint8_t
{
  Real32 = 0,
  Complex32 = 1
};

struct Record
{
  std::vector<std::uint32_t> dims;
  DType dtype = DType::Real32;
  std::vector<float> payload; // complex data stored interleaved

  std::size_t element_count() const;
};

void write(std::ostream &os, Record const &rec);
Record read(std::istream &is);

void save(std::filesystem::path const &path, Record const &rec);
Record load(std::filesystem::path const &path);

Record from_complex(CxArray const &x);
Record from_real(RealArray const &x);
Record from_mask(SamplingMask const &m);
CxArray to_complex(Record const &rec);
RealArray to_real(Record const &rec);

// One line per row: "row_index,sampled".
void write_mask_csv(std::filesystem::path const &path, SamplingMask const &m);

} // namespace csmri::ptf
