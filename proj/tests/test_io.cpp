#include <doctest.h>

#include <filesystem>
#include <limits>

#include "oracles.hpp"
#include "ssnls/io.hpp"

using namespace ssnls;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "ssnls_test_io";
  fs::create_directories(dir);
  return dir / name;
}

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::Config;
}

}  // namespace

TEST_CASE("shortest round-trip formatting") {
  std::mt19937_64 rng(1);
  for (int t = 0; t < 1000; ++t) {
    const double v = oracle::gaussian_mat(rng, 1, 1)(0, 0) * std::pow(10.0, double(t % 40 - 20));
    CHECK(std::stod(io::format_double(v)) == v);
  }
  CHECK(io::format_double(0.1) == "0.1");
  CHECK(io::format_double(1.0) == "1");
  CHECK(io::format_double(-2.5e-7) == "-2.5e-07");
}

TEST_CASE("CSV round trip with and without a header") {
  std::mt19937_64 rng(2);
  const Mat m = oracle::gaussian_mat(rng, 7, 4);
  io::write_csv(scratch("a.csv"), m, {"w", "x", "y", "z"});
  const auto t = io::read_csv(scratch("a.csv"));
  CHECK(t.header == std::vector<std::string>{"w", "x", "y", "z"});
  CHECK(t.values == m);
  io::write_csv(scratch("b.csv"), m);
  const auto u = io::read_csv(scratch("b.csv"));
  CHECK(u.header.empty());
  CHECK(u.values == m);
  CHECK_THROWS_AS(io::write_csv(scratch("c.csv"), m, {"only"}), Error);
}

TEST_CASE("CSV comments, blank lines and malformed input") {
  io::write_text(scratch("c.csv"), "# note\n\na,b\n1, 2\n# mid\n3,4\n");
  const auto t = io::read_csv(scratch("c.csv"));
  CHECK(t.values.rows() == 2);
  CHECK(t.values(1, 0) == 3.0);
  io::write_text(scratch("ragged.csv"), "1,2\n3\n");
  CHECK(kind_of([] { io::read_csv(scratch("ragged.csv")); }) == ErrorKind::Io);
  io::write_text(scratch("text.csv"), "1,2\nx,y\n");
  CHECK(kind_of([] { io::read_csv(scratch("text.csv")); }) == ErrorKind::Io);
  io::write_text(scratch("width.csv"), "a,b,c\n1,2\n");
  CHECK(kind_of([] { io::read_csv(scratch("width.csv")); }) == ErrorKind::Io);
  CHECK(kind_of([] { io::read_csv(scratch("missing.csv")); }) == ErrorKind::Io);
}

TEST_CASE("reference spectrum files") {
  doas::ReferenceSpectrum r{Vec::LinSpaced(6, 340.0, 345.0), Vec(6), "HONO"};
  r.values << 1e-20, 3e-19, -2e-21, 0, 5.5e-19, 1.25e-20;
  io::write_reference_csv(scratch("hono.csv"), r);
  const auto back = io::read_reference_csv(scratch("hono.csv"));
  CHECK(back.name == "hono");
  CHECK(back.wavelengths == r.wavelengths);
  CHECK(back.values == r.values);
  CHECK(io::read_reference_csv(scratch("hono.csv"), "X").name == "X");
  io::write_text(scratch("three.csv"), "1,2,3\n2,3,4\n");
  CHECK(kind_of([] { io::read_reference_csv(scratch("three.csv")); }) == ErrorKind::Io);
  io::write_text(scratch("uneven.csv"), "1,2\n2,3\n4,5\n");
  CHECK(kind_of([] { io::read_reference_csv(scratch("uneven.csv")); }) == ErrorKind::Io);
}

TEST_CASE("dictionary cache round trip") {
  const Vec lam = doas::instrument_wavelengths(40);
  const auto dd = doas::build_deformation_dictionary(doas::synthetic_references(lam),
                                                     doas::DeformationGrid::uniform(-0.01, 0.01, 3, -0.1, 0.1, 2));
  io::save_dictionary_cache(scratch("dict"), dd);
  const auto back = io::load_dictionary_cache(scratch("dict"));
  CHECK(back.dict.entries() == dd.dict.entries());
  CHECK(back.dict.scales() == dd.dict.scales());
  CHECK(back.dict.layout().offsets == dd.dict.layout().offsets);
  CHECK(back.grid.slopes == dd.grid.slopes);
  CHECK(back.grid.offsets == dd.grid.offsets);
  CHECK(back.wavelengths == dd.wavelengths);
  CHECK(back.names == dd.names);

  io::write_text(scratch("dict.json"), "{\"group_offsets\": [0, 6]}");
  CHECK(kind_of([] { io::load_dictionary_cache(scratch("dict")); }) == ErrorKind::Io);
  io::write_text(scratch("dict.json"), "{not json");
  CHECK(kind_of([] { io::load_dictionary_cache(scratch("dict")); }) == ErrorKind::Io);
}

TEST_CASE("scene round trip") {
  std::mt19937_64 rng(3);
  hsi::HsiScene scene{oracle::gaussian_mat(rng, 9, 5), Vec::LinSpaced(9, 400, 800), false};
  scene.normalize();
  io::save_scene(scratch("scene"), scene);
  const auto back = io::load_scene(scratch("scene"));
  CHECK(back.data == scene.data);
  CHECK(back.normalized);
  REQUIRE(back.wavelengths);
  CHECK(*back.wavelengths == *scene.wavelengths);

  fs::remove(scratch("bare.json"));
  io::write_csv(scratch("bare.csv"), scene.data);
  const auto bare = io::load_scene(scratch("bare"));
  CHECK_FALSE(bare.normalized);
  CHECK_FALSE(bare.wavelengths);

  io::write_text(scratch("bad.json"), "{\"wavelengths\": [1, 2]}");
  io::write_csv(scratch("bad.csv"), scene.data);
  CHECK(kind_of([] { io::load_scene(scratch("bad")); }) == ErrorKind::Io);
}

TEST_CASE("text files") {
  io::write_text(scratch("nested/dir/t.txt"), "hello\n");
  CHECK(io::read_text(scratch("nested/dir/t.txt")) == "hello\n");
  CHECK(kind_of([] { io::read_text(scratch("nope.txt")); }) == ErrorKind::Io);
}
