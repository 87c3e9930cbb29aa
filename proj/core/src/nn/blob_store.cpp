#include "pbooth/nn/blob_store.h"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "json.hpp"
#include "pbooth/errors.h"

namespace pbooth::io {

namespace fs = std::filesystem;
using nlohmann::json;

std::uint32_t Crc32(std::span<const std::uint8_t> bytes) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t offset = 0;
  while (offset < bytes.size()) {
    const auto chunk = static_cast<uInt>(
        std::min<std::size_t>(bytes.size() - offset, 1u << 30));
    crc = crc32(crc, bytes.data() + offset, chunk);
    offset += chunk;
  }
  return static_cast<std::uint32_t>(crc);
}

std::uint32_t Crc32OfFile(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  return Crc32(bytes);
}

std::vector<std::uint8_t> ReadBytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IntegrityError("cannot open " + path.string());
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::size_t>(in.tellg());
  in.seekg(0, std::ios::beg);
  std::vector<std::uint8_t> bytes(size);
  in.read(reinterpret_cast<char*>(bytes.data()),
          static_cast<std::streamsize>(size));
  if (!in) throw IntegrityError("short read from " + path.string());
  return bytes;
}

void WriteBytes(const fs::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("write failed for " + path.string());
}

void WriteText(const fs::path& path, const std::string& text) {
  WriteBytes(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()),
                             text.size()));
}

std::string ReadText(const fs::path& path) {
  const auto bytes = ReadBytes(path);
  return std::string(bytes.begin(), bytes.end());
}

std::vector<std::uint8_t> EncodeFloats(std::span<const float> values) {
  std::vector<std::uint8_t> out(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(values[i]);
    out[4 * i + 0] = static_cast<std::uint8_t>(bits & 0xff);
    out[4 * i + 1] = static_cast<std::uint8_t>((bits >> 8) & 0xff);
    out[4 * i + 2] = static_cast<std::uint8_t>((bits >> 16) & 0xff);
    out[4 * i + 3] = static_cast<std::uint8_t>((bits >> 24) & 0xff);
  }
  return out;
}

std::vector<float> DecodeFloats(std::span<const std::uint8_t> bytes) {
  if (bytes.size() % 4 != 0) {
    throw IntegrityError("float blob length " + std::to_string(bytes.size()) +
                         " is not a multiple of 4");
  }
  std::vector<float> out(bytes.size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const std::uint32_t bits = static_cast<std::uint32_t>(bytes[4 * i]) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 1]) << 8) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 2]) << 16) |
                               (static_cast<std::uint32_t>(bytes[4 * i + 3]) << 24);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

namespace {

std::string Hex32(std::uint32_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(8) << std::setfill('0') << v;
  return os.str();
}

}  // namespace

void WriteChecksums(const fs::path& dir,
                    const std::vector<std::string>& relative_paths) {
  std::ostringstream os;
  for (const auto& rel : relative_paths) {
    os << Hex32(Crc32OfFile(dir / rel)) << "  " << rel << "\n";
  }
  WriteText(dir / "checksums.txt", os.str());
}

void VerifyChecksums(const fs::path& dir) {
  const fs::path list = dir / "checksums.txt";
  if (!fs::exists(list)) {
    throw IntegrityError("missing checksum file " + list.string());
  }
  std::istringstream in(ReadText(list));
  std::string line;
  std::size_t count = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sep = line.find("  ");
    if (sep == std::string::npos || sep != 8) {
      throw IntegrityError("malformed checksum line: " + line);
    }
    const std::string expected = line.substr(0, sep);
    const std::string rel = line.substr(sep + 2);
    const fs::path file = dir / rel;
    if (!fs::exists(file)) throw IntegrityError("missing file " + file.string());
    const std::string actual = Hex32(Crc32OfFile(file));
    if (actual != expected) {
      throw IntegrityError("checksum mismatch for " + rel + ": expected " +
                           expected + ", found " + actual);
    }
    ++count;
  }
  if (count == 0) throw IntegrityError("empty checksum file " + list.string());
}

void TensorArchive::Save(const fs::path& dir) const {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "pbooth-tensors";
  manifest["version"] = 1;
  manifest["stage"] = stage;
  manifest["metadata"] = metadata;
  json entries = json::array();
  std::vector<float> payload;
  for (const auto& [name, tensor] : tensors) {
    entries.push_back({{"name", name},
                       {"shape", tensor.shape()},
                       {"offset", payload.size()},
                       {"count", tensor.size()}});
    payload.insert(payload.end(), tensor.values().begin(), tensor.values().end());
  }
  manifest["tensors"] = entries;
  WriteBytes(dir / "tensors.bin", EncodeFloats(payload));
  WriteText(dir / "manifest.json", manifest.dump(2) + "\n");
  WriteChecksums(dir, {"manifest.json", "tensors.bin"});
}

TensorArchive TensorArchive::Load(const fs::path& dir) {
  VerifyChecksums(dir);
  json manifest;
  try {
    manifest = json::parse(ReadText(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IntegrityError("unreadable manifest in " + dir.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "pbooth-tensors") {
    throw IntegrityError(dir.string() + " is not a tensor archive");
  }
  const auto payload = DecodeFloats(ReadBytes(dir / "tensors.bin"));
  TensorArchive archive;
  archive.stage = manifest.at("stage").get<std::string>();
  archive.metadata =
      manifest.at("metadata").get<std::map<std::string, std::string>>();
  for (const auto& e : manifest.at("tensors")) {
    const auto offset = e.at("offset").get<std::size_t>();
    const auto count = e.at("count").get<std::size_t>();
    const auto shape = e.at("shape").get<nn::Shape>();
    if (offset + count > payload.size() || nn::ShapeSize(shape) != count) {
      throw IntegrityError("tensor entry '" + e.at("name").get<std::string>() +
                           "' is inconsistent with the payload");
    }
    std::vector<float> data(payload.begin() + static_cast<std::ptrdiff_t>(offset),
                            payload.begin() +
                                static_cast<std::ptrdiff_t>(offset + count));
    archive.tensors.emplace(e.at("name").get<std::string>(),
                            nn::Tensor<float>(shape, std::move(data)));
  }
  return archive;
}

template <typename T>
void StoreParameters(const nn::ParameterList<T>& params, TensorArchive& archive) {
  for (const auto* p : params) {
    if (archive.tensors.count(p->name)) {
      throw UsageError("duplicate parameter name '" + p->name + "'");
    }
    archive.tensors.emplace(p->name, p->value.template Cast<float>());
  }
}

template <typename T>
void RestoreParameters(const nn::ParameterList<T>& params,
                       const TensorArchive& archive) {
  for (auto* p : params) {
    auto it = archive.tensors.find(p->name);
    if (it == archive.tensors.end()) {
      throw IntegrityError("checkpoint is missing parameter '" + p->name + "'");
    }
    nn::CheckSameShape(p->value.shape(), it->second.shape(), p->name.c_str());
    p->value = it->second.template Cast<T>();
  }
}

template void StoreParameters<float>(const nn::ParameterList<float>&, TensorArchive&);
template void StoreParameters<double>(const nn::ParameterList<double>&, TensorArchive&);
template void RestoreParameters<float>(const nn::ParameterList<float>&,
                                       const TensorArchive&);
template void RestoreParameters<double>(const nn::ParameterList<double>&,
                                        const TensorArchive&);

}  // namespace pbooth::io
