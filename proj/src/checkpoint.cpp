#include "dive/checkpoint.hpp"

#include <fstream>

#include "dive/binary_io.hpp"
#include "dive/errors.hpp"

namespace dive {

namespace {
constexpr char kMagic[4] = {'D', 'I', 'V', 'E'};
constexpr std::uint64_t kMaxElements = std::uint64_t(1) << 34;
}  // namespace

const char* model_kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kDive: return "dive";
    case ModelKind::kMatryoshka: return "matryoshka";
    case ModelKind::kSearchAdaptor: return "search_adaptor";
    case ModelKind::kSmec: return "smec";
    case ModelKind::kPca: return "pca";
    case ModelKind::kAutoencoder: return "autoencoder";
  }
  return "unknown";
}

const Matrix& Checkpoint::tensor(const std::string& name) const {
  for (const auto& t : tensors)
    if (t.name == name) return t.value;
  throw DataError("checkpoint has no tensor named '" + name + "'");
}

const Matrix& Checkpoint::tensor(const std::string& name, std::size_t rows,
                                 std::size_t cols) const {
  const Matrix& m = tensor(name);
  if (m.rows() != rows || m.cols() != cols) {
    throw DataError("checkpoint tensor '" + name + "' has shape " + m.shape_string() +
                    ", config expects [" + std::to_string(rows) + "x" + std::to_string(cols) +
                    "]");
  }
  return m;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, 4);
  binary::write_u32(out, Checkpoint::kVersion);
  binary::write_u32(out, std::uint32_t(ckpt.kind));
  binary::write_u32(out, std::uint32_t(ckpt.config.size()));
  for (std::uint64_t v : ckpt.config) binary::write_u64(out, v);
  binary::write_u32(out, std::uint32_t(ckpt.tensors.size()));
  for (const auto& t : ckpt.tensors) {
    binary::write_string(out, t.name);
    binary::write_u64(out, t.value.rows());
    binary::write_u64(out, t.value.cols());
    for (float v : t.value.data()) binary::write_f32(out, v);
  }
  if (!out) throw DataError("write failed for '" + path.string() + "'");
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open checkpoint '" + path.string() + "'");
  char magic[4];
  binary::read_exact(in, magic, 4, "checkpoint magic");
  if (!std::equal(magic, magic + 4, kMagic)) {
    throw BadMagicError("'" + path.string() + "' is not a checkpoint (bad magic)");
  }
  const std::uint32_t version = binary::read_u32(in, "checkpoint version");
  if (version != Checkpoint::kVersion) {
    throw DataError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ckpt;
  const std::uint32_t kind = binary::read_u32(in, "checkpoint kind");
  if (kind < 1 || kind > 6) throw DataError("unknown model kind " + std::to_string(kind));
  ckpt.kind = ModelKind(kind);
  const std::uint32_t n_config = binary::read_u32(in, "config count");
  if (n_config > 64) throw DataError("implausible config field count");
  for (std::uint32_t i = 0; i < n_config; ++i)
    ckpt.config.push_back(binary::read_u64(in, "config field"));
  const std::uint32_t n_tensors = binary::read_u32(in, "tensor count");
  for (std::uint32_t t = 0; t < n_tensors; ++t) {
    std::string name = binary::read_string(in, "tensor name", 4096);
    const std::uint64_t rows = binary::read_u64(in, "tensor rows");
    const std::uint64_t cols = binary::read_u64(in, "tensor cols");
    if (rows * cols > kMaxElements) throw DataError("implausible tensor size for " + name);
    Matrix m(rows, cols);
    for (float& v : m.data()) v = binary::read_f32(in, "tensor payload");
    ckpt.tensors.push_back({std::move(name), std::move(m)});
  }
  return ckpt;
}

}  // namespace dive
