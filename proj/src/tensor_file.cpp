#include "slbr/tensor_file.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "slbr/errors.hpp"

namespace slbr {
namespace {

static_assert(std::endian::native == std::endian::little,
              "tensor files are written in host byte order; big-endian hosts unsupported");

constexpr char kMagic[8] = {'S', 'L', 'B', 'R', 'T', 'N', 'S', '1'};

}  // namespace

const Tensor& TensorFile::at(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw LoadError("tensor '" + name + "' missing from file");
}

bool TensorFile::contains(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return true;
  }
  return false;
}

void write_tensor_file(const std::filesystem::path& path, const TensorFile& file) {
  nlohmann::json header{{"meta", file.meta}, {"tensors", nlohmann::json::array()}};
  for (const auto& [name, t] : file.tensors) {
    const Shape s = t.shape();
    header["tensors"].push_back({{"name", name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  const std::string text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw LoadError("cannot open '" + path.string() + "' for writing");
  out.write(kMagic, sizeof(kMagic));
  const std::uint64_t len = text.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof(len));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, t] : file.tensors) {
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
  }
  if (!out) throw LoadError("write to '" + path.string() + "' failed");
}

TensorFile read_tensor_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw LoadError("'" + path.string() + "' is not a tensor file (bad magic)");
  }
  std::uint64_t len = 0;
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || len > (1ull << 30)) throw LoadError("'" + path.string() + "': corrupt header length");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw LoadError("'" + path.string() + "': truncated header");

  TensorFile file;
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    file.meta = header.at("meta");
    for (const auto& entry : header.at("tensors")) {
      const auto dims = entry.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw LoadError("tensor shape must have 4 dims");
      Tensor t(Shape{dims[0], dims[1], dims[2], dims[3]});
      in.read(reinterpret_cast<char*>(t.data()),
              static_cast<std::streamsize>(t.size() * sizeof(double)));
      if (!in) {
        throw LoadError("'" + path.string() + "': truncated payload at tensor '" +
                        entry.at("name").get<std::string>() + "'");
      }
      file.tensors.emplace_back(entry.at("name").get<std::string>(), std::move(t));
    }
  } catch (const nlohmann::json::exception& e) {
    throw LoadError("'" + path.string() + "': malformed header: " + e.what());
  } catch (const ContractError& e) {
    throw LoadError("'" + path.string() + "': bad tensor shape: " + e.what());
  }
  return file;
}

}  // namespace slbr
