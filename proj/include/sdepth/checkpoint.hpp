#pragma once

// Named-tensor archive used for checkpoints and pretrained weights.
//
// Layout (little-endian):
//   magic    8 bytes  "SDCKPT\0\1"
//   count    u32      number of entries
//   entry    u32 key_len, key bytes, u8 dtype (0=f32 1=f64 2=i64 3=u8),
//            u8 ndim, i64 dims[ndim], raw row-major data
//   checksum u64      FNV-1a over every preceding byte
//
// Strings are stored as u8 tensors. Writes go to "<path>.tmp" and are
// renamed into place.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

#include <torch/torch.h>

namespace sdepth {

class TensorArchive {
 public:
  void put(const std::string& key, const torch::Tensor& value);
  void put_string(const std::string& key, const std::string& value);
  void put_int(const std::string& key, int64_t value);
  void put_double(const std::string& key, double value);

  bool contains(const std::string& key) const { return entries_.count(key) > 0; }
  const torch::Tensor& get(const std::string& key) const;
  std::string get_string(const std::string& key) const;
  int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;

  const std::map<std::string, torch::Tensor>& entries() const { return entries_; }

  /// Copies every named parameter and buffer of `module` under `prefix`.
  void put_module(const std::string& prefix, const torch::nn::Module& module);
  /// Loads parameters and buffers of `module` from `prefix`; every tensor must
  /// be present with a matching shape.
  void load_module(const std::string& prefix, torch::nn::Module& module) const;

  void save(const std::filesystem::path& path) const;
  /// Throws CheckpointError on missing, truncated, or corrupted files.
  static TensorArchive load(const std::filesystem::path& path);

 private:
  std::map<std::string, torch::Tensor> entries_;
};

/// FNV-1a 64-bit digest.
uint64_t fnv1a64(std::string_view bytes, uint64_t seed = 0xcbf29ce484222325ULL);

}  // namespace sdepth
