#include <gtest/gtest.h>

#include <fstream>
#include <sstream>

#include "test_support.hpp"
#include "transinv/sensitivity_io.hpp"

using namespace transinv;
using namespace transinv::sens;
using transinv::testing::TempDir;

namespace {

SensitivityMap sample_map(int max_shift = 10) {
  SensitivityMap map(max_shift, Metric::euclidean, Tap::conv_final, 6);
  std::mt19937_64 rng(1);
  for (auto& v : map.values()) v = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
  map.sample_count = 12;
  map.vector_dim = 750;
  map.degenerate_count = 1;
  map.seed = 3;
  return map;
}

std::vector<std::string> lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  std::vector<std::string> out;
  for (std::string line; std::getline(in, line);) out.push_back(line);
  return out;
}

}  // namespace

TEST(MapFiles, RoundTripIsExact) {
  TempDir dir;
  const auto map = sample_map();
  write_map(map, dir / "m");
  const auto back = read_map(dir / "m.csv");
  EXPECT_EQ(back.max_shift(), 10);
  EXPECT_EQ(back.metric, Metric::euclidean);
  EXPECT_EQ(back.tap, Tap::conv_final);
  EXPECT_EQ(back.class_id, 6);
  EXPECT_EQ(back.sample_count, 12u);
  EXPECT_EQ(back.vector_dim, 750u);
  EXPECT_EQ(back.degenerate_count, 1u);
  EXPECT_EQ(back.seed, std::optional<std::uint64_t>(3));
  const auto a = map.values(), b = back.values();
  EXPECT_TRUE(std::equal(a.begin(), a.end(), b.begin()));
}

TEST(MapFiles, CsvLayout) {
  TempDir dir;
  write_map(sample_map(), dir / "m");
  const auto rows = lines(dir / "m.csv");
  ASSERT_EQ(rows.size(), 442u);
  EXPECT_EQ(rows[0], "dx,dy,value");
  EXPECT_EQ(rows[1].substr(0, 7), "-10,-10");
  EXPECT_EQ(rows[2].substr(0, 7), "-9,-10,");
  EXPECT_EQ(rows[441].substr(0, 6), "10,10,");
}

TEST(MapFiles, MissingRowRejected) {
  TempDir dir;
  write_map(sample_map(1), dir / "m");
  auto rows = lines(dir / "m.csv");
  rows.pop_back();
  std::ofstream out(dir / "m.csv", std::ios::trunc);
  for (const auto& r : rows) out << r << '\n';
  out.close();
  EXPECT_THROW(read_map(dir / "m.csv"), Error);
}

TEST(MapFiles, DuplicateRowRejected) {
  TempDir dir;
  write_map(sample_map(1), dir / "m");
  auto rows = lines(dir / "m.csv");
  rows.back() = rows[1];
  std::ofstream out(dir / "m.csv", std::ios::trunc);
  for (const auto& r : rows) out << r << '\n';
  out.close();
  EXPECT_THROW(read_map(dir / "m.csv"), Error);
}

TEST(MapFiles, OutOfGridRejected) {
  TempDir dir;
  write_map(sample_map(1), dir / "m");
  auto rows = lines(dir / "m.csv");
  rows[1] = "5,0,0.5";
  std::ofstream out(dir / "m.csv", std::ios::trunc);
  for (const auto& r : rows) out << r << '\n';
  out.close();
  EXPECT_THROW(read_map(dir / "m.csv"), Error);
}

TEST(MapFiles, MissingSidecarRejected) {
  TempDir dir;
  write_map(sample_map(1), dir / "m");
  std::filesystem::remove(dir / "m.json");
  EXPECT_THROW(read_map(dir / "m.csv"), Error);
}

TEST(Pgm, LinearScale) {
  TempDir dir;
  const std::vector<double> values{0.0, 0.5, 1.0, 2.0};
  write_pgm(values, 2, 2, dir / "x.pgm", 0.0, 1.0);
  std::ifstream in(dir / "x.pgm");
  std::string magic;
  int w, h, maxval, a, b, c, d;
  in >> magic >> w >> h >> maxval >> a >> b >> c >> d;
  EXPECT_EQ(magic, "P2");
  EXPECT_EQ(w, 2);
  EXPECT_EQ(h, 2);
  EXPECT_EQ(maxval, 255);
  EXPECT_EQ(a, 0);
  EXPECT_EQ(b, 128);
  EXPECT_EQ(c, 255);
  EXPECT_EQ(d, 255);
  EXPECT_THROW(write_pgm(values, 3, 2, dir / "y.pgm", 0.0, 1.0), ShapeError);
}

TEST(Pgm, MapUsesItsOwnRange) {
  TempDir dir;
  SensitivityMap map(1, Metric::cosine, Tap::fc_out, 0);
  map.at(0, 0) = 1.0;
  write_pgm(map, dir / "m.pgm");
  std::ifstream in(dir / "m.pgm");
  std::string magic;
  int w, h, maxval;
  in >> magic >> w >> h >> maxval;
  std::vector<int> px(9);
  for (auto& p : px) in >> p;
  EXPECT_EQ(px[4], 255);
  EXPECT_EQ(px[0], 0);
}

TEST(ProfileFiles, RoundTrip) {
  TempDir dir;
  const auto profile = radial_profile(sample_map());
  write_profile_csv(profile, dir / "p.csv");
  EXPECT_EQ(lines(dir / "p.csv")[0], "radius,mean,count");
  const auto back = read_profile_csv(dir / "p.csv");
  EXPECT_EQ(back.radii, profile.radii);
  EXPECT_EQ(back.values, profile.values);
  EXPECT_EQ(back.counts, profile.counts);
}
