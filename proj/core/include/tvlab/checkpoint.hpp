#pragma once

#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "tvlab/tensor.hpp"

namespace tvlab {

/// Binary tensor container, shared by model checkpoints and task-vector
/// sets. Layout (bit-exact):
///   magic "TVL1" | u32 LE header length | UTF-8 JSON header | f32 LE arrays
/// The header carries arbitrary metadata plus a "manifest" list of
/// {name, shape}; arrays follow in manifest order.
struct ContainerEntry {
  std::string name;
  Shape shape;
  std::vector<float> data;
};

void write_container(const std::string& path, const nlohmann::json& meta,
                     const std::vector<ContainerEntry>& entries);

struct Container {
  nlohmann::json* meta;  // owned; json_fwd keeps the header light
  std::vector<ContainerEntry> entries;

  Container();
  Container(Container&&) noexcept;
  Container& operator=(Container&&) noexcept;
  ~Container();
};

Container read_container(const std::string& path);

/// write-temp-then-rename text file write.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace tvlab
