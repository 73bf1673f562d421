#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "helpers.hpp"
#include "pcotta/serialize.hpp"

using namespace pcotta;

namespace {
std::string temp_stem(const char* tag) {
  auto dir = std::filesystem::temp_directory_path() / "pcotta_tests";
  std::filesystem::create_directories(dir);
  return (dir / tag).string();
}
}  // namespace

TEST_CASE("blob round-trip is bit-exact", "[serialize]") {
  Rng rng(5);
  BlobFile f;
  f.meta["kind"] = "test";
  f.add("weights", testutil::random_tensor<float>({4, 3}, rng));
  f.add("bias", testutil::random_tensor<float>({3}, rng));
  auto stem = temp_stem("roundtrip");
  f.save(stem);

  BlobFile g = BlobFile::load(stem);
  CHECK(g.meta_or("kind", "") == "test");
  CHECK(g.get("weights").data == f.get("weights").data);
  CHECK(g.get("weights").shape == f.get("weights").shape);
  CHECK(g.get("bias").data == f.get("bias").data);
}

TEST_CASE("tampered blob fails to load", "[serialize]") {
  BlobFile f;
  f.add("x", TensorF({2, 2}, {1, 2, 3, 4}));
  auto stem = temp_stem("tamper");
  f.save(stem);
  {
    std::ofstream blob(stem + ".blob", std::ios::binary | std::ios::trunc);
    blob << "xx";  // wrong length
  }
  CHECK_THROWS_AS(BlobFile::load(stem), parse_error);
}

TEST_CASE("corrupted payload fails the checksum", "[serialize]") {
  BlobFile f;
  f.add("x", TensorF({2, 2}, {1, 2, 3, 4}));
  auto stem = temp_stem("checksum");
  f.save(stem);
  {
    std::fstream blob(stem + ".blob", std::ios::binary | std::ios::in | std::ios::out);
    blob.seekp(0);
    float v = 9.0f;
    blob.write(reinterpret_cast<const char*>(&v), 4);
  }
  CHECK_THROWS_WITH(BlobFile::load(stem), Catch::Matchers::ContainsSubstring("checksum"));
}

TEST_CASE("missing tensor lookup names the tensor", "[serialize]") {
  BlobFile f;
  CHECK_THROWS_WITH(f.get("absent"), Catch::Matchers::ContainsSubstring("absent"));
}

TEST_CASE("params_checksum is order- and value-sensitive", "[serialize]") {
  Parameter<float> a("a", TensorF::scalar(1.0f));
  Parameter<float> b("b", TensorF::scalar(2.0f));
  auto h1 = params_checksum<float>({&a, &b});
  auto h2 = params_checksum<float>({&b, &a});
  CHECK(h1 != h2);
  a.value.data[0] = 1.5f;
  CHECK(params_checksum<float>({&a, &b}) != h1);
}
