#include "catch_amalgamated.hpp"

#include <fstream>

#include "oracles.hpp"
#include "spasvc/archive.hpp"
#include "spasvc/error.hpp"

using namespace spasvc;

TEST_CASE("tensor archive round-trips tensors and metadata bit-exactly", "[archive]") {
  oracle::TempDir dir("archive");
  TensorArchive ar;
  ar.meta = {{"kind", "test"}, {"step", 42}};
  ar.tensors["a"] = ag::Mat::Random(3, 5);
  ar.tensors["b/c"] = ag::Mat::Constant(1, 1, 1.0 / 3.0);
  ar.save(dir / "x.svc");
  const TensorArchive back = TensorArchive::load(dir / "x.svc");
  REQUIRE(back.meta.at("step") == 42);
  REQUIRE(back.tensors.size() == 2);
  REQUIRE(back.at("a") == ar.tensors.at("a"));
  REQUIRE(back.at("b/c")(0, 0) == 1.0 / 3.0);
  REQUIRE_THROWS_AS(back.at("nope"), DataError);
}

TEST_CASE("tensor archive rejects foreign and truncated files", "[archive]") {
  oracle::TempDir dir("archive_bad");
  {
    std::ofstream(dir / "bad.svc") << "hello";
  }
  REQUIRE_THROWS_AS(TensorArchive::load(dir / "bad.svc"), DataError);
  TensorArchive ar;
  ar.tensors["a"] = ag::Mat::Ones(10, 10);
  ar.save(dir / "ok.svc");
  std::filesystem::resize_file(dir / "ok.svc", std::filesystem::file_size(dir / "ok.svc") - 8);
  REQUIRE_THROWS_AS(TensorArchive::load(dir / "ok.svc"), DataError);
}
