#include "csmri/image_io.hpp"
#include "csmri/keyvalue.hpp"
#include "csmri/param_io.hpp"
#include "csmri/ptf.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

using namespace csmri;
namespace fs = std::filesystem;

namespace {

fs::path scratch(std::string const &name)
{
  auto dir = fs::temp_directory_path() / ("csmri_io_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(fs::path const &p)
{
  std::ifstream is(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(is), {}};
}

} // namespace

TEST(Ptf, ByteLayout)
{
  ptf::Record rec{{2, 3}, ptf::DType::Real32, {1, 2, 3, 4, 5, 6}};
  std::ostringstream os;
  ptf::write(os, rec);
  std::string const bytes = os.str();
  ASSERT_EQ(bytes.size(), 4u + 4u + 8u + 1u + 24u);
  EXPECT_EQ(bytes.substr(0, 4), "PTF1");
  EXPECT_EQ(bytes[4], 2);
  EXPECT_EQ(bytes[5], 0);
  EXPECT_EQ(bytes[8], 2);
  EXPECT_EQ(bytes[12], 3);
  EXPECT_EQ(bytes[16], 0);
  float last = 0.0f;
  std::memcpy(&last, bytes.data() + bytes.size() - 4, 4);
  EXPECT_EQ(last, 6.0f);
}

TEST(Ptf, RoundTrips)
{
  CxArray z = CxArray::Random(4, 8);
  auto rec = ptf::from_complex(z);
  EXPECT_EQ(rec.dtype, ptf::DType::Complex32);
  EXPECT_EQ(rec.element_count(), 32u);
  std::stringstream ss;
  ptf::write(ss, rec);
  auto back = ptf::to_complex(ptf::read(ss));
  ASSERT_EQ(back.rows(), 4);
  ASSERT_EQ(back.cols(), 8);
  for (Index i = 0; i < z.size(); i++) {
    EXPECT_EQ(back(i).real(), static_cast<double>(static_cast<float>(z(i).real())));
    EXPECT_EQ(back(i).imag(), static_cast<double>(static_cast<float>(z(i).imag())));
  }

  auto dir = scratch("ptf");
  RealArray r = RealArray::Random(8, 2);
  ptf::save(dir / "r.ptf", ptf::from_real(r));
  auto rr = ptf::to_real(ptf::load(dir / "r.ptf"));
  EXPECT_LT((rr - r).abs().maxCoeff(), 1e-7);
  EXPECT_THROW(ptf::to_complex(ptf::load(dir / "r.ptf")), std::runtime_error);

  auto mask = make_mask(MaskPattern::UniformACS, 16, 4, 0.1, 0);
  auto mrec = ptf::from_mask(mask);
  ASSERT_EQ(mrec.dims, (std::vector<std::uint32_t>{16}));
  for (std::size_t i = 0; i < 16; i++) {
    EXPECT_EQ(mrec.payload[i], mask.lines[i] ? 1.0f : 0.0f);
  }
  ptf::write_mask_csv(dir / "mask.csv", mask);
  std::ifstream csv(dir / "mask.csv");
  std::string line;
  int rows = 0;
  while (std::getline(csv, line)) {
    if (line.find_first_not_of("0123456789") == 0) {
      continue;
    }
    EXPECT_EQ(line, std::to_string(rows) + "," + std::to_string(int(mask.lines[static_cast<std::size_t>(rows)])));
    rows++;
  }
  EXPECT_EQ(rows, 16);
  fs::remove_all(dir);
}

TEST(Ptf, RejectsCorruptInput)
{
  std::istringstream bad_magic("PTF2\x01\x00\x00\x00");
  EXPECT_THROW(ptf::read(bad_magic), std::runtime_error);
  std::istringstream short_header("PT");
  EXPECT_THROW(ptf::read(short_header), std::runtime_error);

  std::ostringstream os;
  ptf::write(os, ptf::Record{{4}, ptf::DType::Real32, {1, 2, 3, 4}});
  std::string cut = os.str();
  cut.resize(cut.size() - 3);
  std::istringstream truncated(cut);
  EXPECT_THROW(ptf::read(truncated), std::runtime_error);

  std::string tag = os.str();
  tag[12] = 7;
  std::istringstream bad_tag(tag);
  EXPECT_THROW(ptf::read(bad_tag), std::runtime_error);

  std::ostringstream sink;
  EXPECT_THROW(ptf::write(sink, ptf::Record{{3}, ptf::DType::Real32, {1}}), std::invalid_argument);
  EXPECT_THROW(ptf::load("/nonexistent/x.ptf"), std::runtime_error);
}

TEST(KeyValue, Parsing)
{
  auto kv = parse_key_values("# comment\n\n a = 1 \nb=two words\nc=\n");
  ASSERT_EQ(kv.size(), 3u);
  EXPECT_EQ(kv[0], (std::pair<std::string, std::string>{"a", "1"}));
  EXPECT_EQ(kv[1].second, "two words");
  EXPECT_EQ(kv[2].second, "");
  EXPECT_EQ(parse_key_values(format_key_values(kv)), kv);

  EXPECT_THROW(parse_key_values("a=1\na=2\n"), std::invalid_argument);
  EXPECT_THROW(parse_key_values("novalue\n"), std::invalid_argument);
  EXPECT_THROW(parse_key_values("=3\n"), std::invalid_argument);
}

TEST(KeyValue, TypedValues)
{
  EXPECT_EQ(parse_int("k", "-12"), -12);
  EXPECT_THROW(parse_int("k", "1.5"), std::invalid_argument);
  EXPECT_THROW(parse_int("k", "12x"), std::invalid_argument);
  EXPECT_EQ(parse_double("k", "2.5e-3"), 2.5e-3);
  EXPECT_THROW(parse_double("k", "abc"), std::invalid_argument);
  EXPECT_TRUE(parse_bool("k", "true"));
  EXPECT_FALSE(parse_bool("k", "0"));
  EXPECT_THROW(parse_bool("k", "maybe"), std::invalid_argument);
  EXPECT_EQ(parse_u64("k", "18446744073709551615"), std::numeric_limits<std::uint64_t>::max());
  EXPECT_THROW(parse_u64("k", "-1"), std::invalid_argument);
}

TEST(KeyValue, FormatDoubleRoundTrips)
{
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_EQ(format_double(3.0), "3");
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(-1e6, 1e6);
  for (int i = 0; i < 2000; i++) {
    double const v = u(rng) * std::pow(10.0, static_cast<int>(rng() % 40) - 20);
    EXPECT_EQ(parse_double("k", format_double(v)), v);
  }
}

TEST(ParamIo, SaveLoadNetwork)
{
  NetworkSpec spec;
  spec.n_scales = 2;
  spec.layers_per_stage = 1;
  spec.base_channels = 3;
  spec.input_h = 8;
  spec.input_w = 8;
  Network<float> net(spec, 4);
  std::mt19937_64 rng(1);
  Tensor x({2, 1, 8, 8});
  std::normal_distribution<float> g;
  for (auto &v : x.values()) {
    v = g(rng);
  }
  net.forward(x, BNMode::Train); // moves the running statistics away from their defaults
  auto dir = scratch("params");
  save_network(net, dir, {{"epoch", "7"}, {"scale", "2.5"}});

  auto loaded = load_network<float>(dir / "manifest.txt");
  EXPECT_EQ(format_network_spec(loaded.spec()), format_network_spec(spec));
  auto const y0 = net.forward(x, BNMode::Infer);
  auto const y1 = loaded.forward(x, BNMode::Infer);
  for (std::size_t i = 0; i < y0.size(); i++) {
    EXPECT_EQ(y0[i], y1[i]);
  }
  auto meta = manifest_meta(dir / "manifest.txt");
  EXPECT_EQ(meta, (KeyValues{{"epoch", "7"}, {"scale", "2.5"}}));

  // Saving the loaded network writes the same bytes.
  auto again = scratch("params_again");
  save_network(loaded, again, {{"epoch", "7"}, {"scale", "2.5"}});
  for (auto const &entry : fs::directory_iterator(dir)) {
    EXPECT_EQ(slurp(entry.path()), slurp(again / entry.path().filename())) << entry.path().filename();
  }

  auto lines = slurp(dir / "manifest.txt");
  auto pos = lines.find("head.conv.weight=");
  ASSERT_NE(pos, std::string::npos);
  std::ofstream(dir / "manifest.txt") << lines.substr(0, pos);
  EXPECT_THROW(load_network<float>(dir / "manifest.txt"), std::runtime_error);
  fs::remove_all(dir);
  fs::remove_all(again);
}

TEST(ImageIo, Pgm)
{
  auto dir = scratch("pgm");
  RealArray img(2, 3);
  img << 0.0, 0.5, 1.0, -1.0, 2.0, 0.25;
  write_pgm(dir / "a.pgm", img, 0.0, 1.0);
  std::string const bytes = slurp(dir / "a.pgm");
  std::string const header = "P5\n3 2\n255\n";
  ASSERT_EQ(bytes.size(), header.size() + 6);
  EXPECT_EQ(bytes.substr(0, header.size()), header);
  auto px = [&](int i) { return static_cast<unsigned char>(bytes[header.size() + static_cast<std::size_t>(i)]); };
  EXPECT_EQ(px(0), 0);
  EXPECT_EQ(px(2), 255);
  EXPECT_EQ(px(3), 0);
  EXPECT_EQ(px(4), 255);
  EXPECT_NEAR(px(1), 127.5, 0.5);

  write_pgm(dir / "b.pgm", img);
  std::string const auto_bytes = slurp(dir / "b.pgm");
  EXPECT_EQ(static_cast<unsigned char>(auto_bytes[header.size() + 3]), 0);
  EXPECT_EQ(static_cast<unsigned char>(auto_bytes[header.size() + 4]), 255);
  write_pgm(dir / "flat.pgm", RealArray::Constant(2, 2, 3.0));
  EXPECT_THROW(write_pgm("/nonexistent/dir/x.pgm", img), std::runtime_error);
  fs::remove_all(dir);
}
