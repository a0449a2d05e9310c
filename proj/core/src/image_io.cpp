#include "csmri/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace csmri {

void write_pgm(std::filesystem::path const &path, RealArray const &img, double lo, double hi)
{
  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw std::runtime_error("cannot write " + path.string());
  }
  os << "P5\n" << img.cols() << ' ' << img.rows() << "\n255\n";
  double const span = hi > lo ? hi - lo : 1.0;
  std::vector<unsigned char> bytes(img.size());
  for (Index i = 0; i < img.size(); i++) {
    double const v = std::clamp((img(i) - lo) / span, 0.0, 1.0);
    bytes[i] = static_cast<unsigned char>(std::lround(v * 255.0));
  }
  os.write(reinterpret_cast<char const *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_pgm(std::filesystem::path const &path, RealArray const &img)
{
  write_pgm(path, img, img.minCoeff(), img.maxCoeff());
}

} // namespace csmri
