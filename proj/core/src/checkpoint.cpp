#include "tvlab/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace tvlab {

namespace {
constexpr char kMagic[4] = {'T', 'V', 'L', '1'};
}

Container::Container() : meta(new nlohmann::json()) {}
Container::Container(Container&& o) noexcept : meta(o.meta), entries(std::move(o.entries)) {
  o.meta = nullptr;
}
Container& Container::operator=(Container&& o) noexcept {
  if (this != &o) {
    delete meta;
    meta = o.meta;
    o.meta = nullptr;
    entries = std::move(o.entries);
  }
  return *this;
}
Container::~Container() { delete meta; }

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open for writing: " + tmp);
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!out) throw IoError("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<ContainerEntry>& entries) {
  nlohmann::json header = meta;
  nlohmann::json manifest = nlohmann::json::array();
  for (const auto& e : entries) {
    manifest.push_back({{"name", e.name}, {"shape", e.shape}});
    if (shape_numel(e.shape) != e.data.size())
      throw ContractError("container entry '" + e.name + "' shape/data mismatch");
  }
  header["manifest"] = manifest;
  const std::string hjson = header.dump();

  std::string blob;
  blob.reserve(8 + hjson.size());
  blob.append(kMagic, 4);
  const uint32_t hlen = static_cast<uint32_t>(hjson.size());
  char lenbuf[4];
  std::memcpy(lenbuf, &hlen, 4);  // little-endian host
  blob.append(lenbuf, 4);
  blob.append(hjson);
  for (const auto& e : entries)
    blob.append(reinterpret_cast<const char*>(e.data.data()), e.data.size() * sizeof(float));
  write_file_atomic(path, blob);
}

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);

  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw IoError("bad magic in " + path, 0);

  uint32_t hlen = 0;
  in.read(reinterpret_cast<char*>(&hlen), 4);
  if (!in) throw IoError("truncated header length in " + path, 4);

  std::string hjson(hlen, '\0');
  in.read(hjson.data(), hlen);
  if (!in) throw IoError("truncated header in " + path, 8);

  Container c;
  try {
    *c.meta = nlohmann::json::parse(hjson);
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed header JSON in " + path + ": " + e.what(), 8);
  }
  if (!c.meta->contains("manifest") || !(*c.meta)["manifest"].is_array())
    throw IoError("header missing manifest in " + path, 8);

  long long offset = 8 + static_cast<long long>(hlen);
  for (const auto& m : (*c.meta)["manifest"]) {
    ContainerEntry e;
    e.name = m.at("name").get<std::string>();
    e.shape = m.at("shape").get<Shape>();
    e.data.resize(shape_numel(e.shape));
    in.read(reinterpret_cast<char*>(e.data.data()),
            static_cast<std::streamsize>(e.data.size() * sizeof(float)));
    if (!in) throw IoError("truncated tensor '" + e.name + "' in " + path, offset);
    offset += static_cast<long long>(e.data.size() * sizeof(float));
    c.entries.push_back(std::move(e));
  }
  // trailing garbage is a format error too
  char probe;
  in.read(&probe, 1);
  if (in.gcount() != 0) throw IoError("trailing bytes in " + path, offset);
  return c;
}

}  // namespace tvlab
