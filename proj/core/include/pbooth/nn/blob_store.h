#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "pbooth/nn/autograd.h"
#include "pbooth/nn/tensor.h"

namespace pbooth::io {

std::uint32_t Crc32(std::span<const std::uint8_t> bytes);
std::uint32_t Crc32OfFile(const std::filesystem::path& path);

std::vector<std::uint8_t> ReadBytes(const std::filesystem::path& path);
void WriteBytes(const std::filesystem::path& path,
                std::span<const std::uint8_t> bytes);
void WriteText(const std::filesystem::path& path, const std::string& text);
std::string ReadText(const std::filesystem::path& path);

// Little-endian IEEE-754 binary32, independent of host byte order.
std::vector<std::uint8_t> EncodeFloats(std::span<const float> values);
std::vector<float> DecodeFloats(std::span<const std::uint8_t> bytes);

// checksums.txt holds one "<crc32 hex>  <relative path>" line per file.
void WriteChecksums(const std::filesystem::path& dir,
                    const std::vector<std::string>& relative_paths);
// Throws IntegrityError on a missing file or CRC mismatch.
void VerifyChecksums(const std::filesystem::path& dir);

// Named float tensors plus string metadata, stored as manifest.json,
// tensors.bin and checksums.txt inside one directory.
struct TensorArchive {
  std::string stage;
  std::map<std::string, std::string> metadata;
  std::map<std::string, nn::Tensor<float>> tensors;

  void Save(const std::filesystem::path& dir) const;
  static TensorArchive Load(const std::filesystem::path& dir);
};

// Copies parameter values into / out of an archive by parameter name.
template <typename T>
void StoreParameters(const nn::ParameterList<T>& params, TensorArchive& archive);
template <typename T>
void RestoreParameters(const nn::ParameterList<T>& params,
                       const TensorArchive& archive);

}  // namespace pbooth::io
