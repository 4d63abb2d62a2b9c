#include "doctest.h"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "tvlab/checkpoint.hpp"

using namespace tvlab;

namespace {

std::string temp_path(const char* name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::vector<ContainerEntry> sample_entries() {
  return {{"alpha", {2, 2}, {1.0f, 2.0f, 3.0f, 4.0f}}, {"beta", {3}, {-1.0f, 0.0f, 1.0f}}};
}

}  // namespace

TEST_CASE("container round-trip preserves metadata and arrays") {
  const std::string path = temp_path("tvlab_container.tvl");
  nlohmann::json meta;
  meta["kind"] = "test";
  meta["note"] = 17;
  write_container(path, meta, sample_entries());

  Container c = read_container(path);
  CHECK((*c.meta)["kind"] == "test");
  CHECK((*c.meta)["note"] == 17);
  REQUIRE(c.entries.size() == 2);
  CHECK(c.entries[0].name == "alpha");
  CHECK(c.entries[0].shape == Shape{2, 2});
  CHECK(c.entries[0].data == std::vector<float>{1.0f, 2.0f, 3.0f, 4.0f});
  CHECK(c.entries[1].name == "beta");
  CHECK(c.entries[1].data == std::vector<float>{-1.0f, 0.0f, 1.0f});
  std::filesystem::remove(path);
}

TEST_CASE("write rejects shape/data mismatch") {
  std::vector<ContainerEntry> bad = {{"x", {2, 2}, {1.0f}}};
  CHECK_THROWS_AS(write_container(temp_path("tvlab_bad.tvl"), nlohmann::json::object(), bad),
                  ContractError);
}

TEST_CASE("bad magic reported with offset") {
  const std::string path = temp_path("tvlab_badmagic.tvl");
  write_container(path, nlohmann::json::object(), sample_entries());
  {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.write("NOPE", 4);
  }
  try {
    read_container(path);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.offset() == 0);
  }
  std::filesystem::remove(path);
}

TEST_CASE("truncated payload rejected") {
  const std::string path = temp_path("tvlab_trunc.tvl");
  write_container(path, nlohmann::json::object(), sample_entries());
  const auto full = std::filesystem::file_size(path);
  std::filesystem::resize_file(path, full - 5);
  CHECK_THROWS_AS(read_container(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("trailing bytes rejected") {
  const std::string path = temp_path("tvlab_trail.tvl");
  write_container(path, nlohmann::json::object(), sample_entries());
  {
    std::ofstream f(path, std::ios::app | std::ios::binary);
    f.write("zz", 2);
  }
  CHECK_THROWS_AS(read_container(path), IoError);
  std::filesystem::remove(path);
}

TEST_CASE("atomic text write leaves no temp file") {
  const std::string path = temp_path("tvlab_atomic.txt");
  write_file_atomic(path, "hello\n");
  std::ifstream in(path);
  std::string line;
  std::getline(in, line);
  CHECK(line == "hello");
  int count = 0;
  for (const auto& e : std::filesystem::directory_iterator(std::filesystem::temp_directory_path()))
    if (e.path().string().find("tvlab_atomic") != std::string::npos) ++count;
  CHECK(count == 1);
  std::filesystem::remove(path);
}
