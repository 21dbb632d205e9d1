#include "spasvc/archive.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include "spasvc/error.hpp"

namespace spasvc {
namespace {

constexpr char kMagic[8] = {'S', 'V', 'C', 'A', 'R', 'C', 'H', '\0'};

static_assert(std::endian::native == std::endian::little, "archive I/O assumes little-endian host");

}  // namespace

void TensorArchive::save(const std::filesystem::path& path) const {
  nlohmann::json header;
  header["meta"] = meta;
  header["tensors"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : tensors) {
    header["tensors"].push_back({{"name", name}, {"rows", m.rows()}, {"cols", m.cols()}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size());
  }
  const std::string text = header.dump();

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw DataError("cannot write archive: " + path.string());
    os.write(kMagic, 8);
    const std::uint32_t schema = kArchiveSchema;
    os.write(reinterpret_cast<const char*>(&schema), 4);
    const std::uint64_t len = text.size();
    os.write(reinterpret_cast<const char*>(&len), 8);
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& [_, m] : tensors)
      os.write(reinterpret_cast<const char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
    if (!os) throw DataError("short write: " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open archive: " + path.string());
  char magic[8];
  std::uint32_t schema = 0;
  std::uint64_t len = 0;
  is.read(magic, 8);
  is.read(reinterpret_cast<char*>(&schema), 4);
  is.read(reinterpret_cast<char*>(&len), 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0) throw DataError("not a tensor archive: " + path.string());
  if (schema != kArchiveSchema)
    throw DataError("unsupported archive schema " + std::to_string(schema) + ": " + path.string());
  std::string text(len, '\0');
  is.read(text.data(), static_cast<std::streamsize>(len));
  if (!is) throw DataError("truncated archive header: " + path.string());

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("corrupt archive header in " + path.string() + ": " + e.what());
  }
  const auto payload_start = is.tellg();
  TensorArchive ar;
  ar.meta = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const auto rows = t.at("rows").get<Eigen::Index>();
    const auto cols = t.at("cols").get<Eigen::Index>();
    const auto offset = t.at("offset").get<std::uint64_t>();
    ag::Mat m(rows, cols);
    is.seekg(payload_start + static_cast<std::streamoff>(offset * 8));
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * 8));
    if (!is) throw DataError("truncated archive payload: " + path.string());
    ar.tensors.emplace(t.at("name").get<std::string>(), std::move(m));
  }
  return ar;
}

const ag::Mat& TensorArchive::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw DataError("archive missing tensor '" + name + "'");
  return it->second;
}

}  // namespace spasvc
