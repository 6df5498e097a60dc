#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dive/matrix.hpp"

namespace dive {

enum class ModelKind : std::uint32_t {
  kDive = 1,
  kMatryoshka = 2,
  kSearchAdaptor = 3,
  kSmec = 4,
  kPca = 5,
  kAutoencoder = 6,
};

const char* model_kind_name(ModelKind kind);

struct NamedTensor {
  std::string name;
  Matrix value;
};

// Named-tensor container. On disk (little-endian):
//   "DIVE" | version u32 | kind u32 | n_config u32 | n_config x u64
//   | n_tensors u32 | per tensor: name_len u32, name bytes, rows u64,
//     cols u64, rows*cols f32
struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  ModelKind kind = ModelKind::kDive;
  std::vector<std::uint64_t> config;
  std::vector<NamedTensor> tensors;

  const Matrix& tensor(const std::string& name) const;
  // Looks up `name` and verifies its shape.
  const Matrix& tensor(const std::string& name, std::size_t rows, std::size_t cols) const;
  void add(std::string name, const Matrix& value) { tensors.push_back({std::move(name), value}); }
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dive
