#include "sdepth/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <iterator>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace {

constexpr char kMagic[8] = {'S', 'D', 'C', 'K', 'P', 'T', '\0', '\1'};

uint8_t dtype_code(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return 0;
    case torch::kFloat64: return 1;
    case torch::kInt64: return 2;
    case torch::kUInt8: return 3;
    default: throw CheckpointError(std::string("unsupported tensor dtype ") + c10::toString(t));
  }
}

torch::ScalarType dtype_from_code(uint8_t c) {
  switch (c) {
    case 0: return torch::kFloat32;
    case 1: return torch::kFloat64;
    case 2: return torch::kInt64;
    case 3: return torch::kUInt8;
    default: throw CheckpointError("unknown dtype code " + std::to_string(c));
  }
}

template <typename T>
void append(std::string& buf, const T& v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& data, const std::filesystem::path& path) : data_(data), path_(path) {}

  template <typename T>
  T read() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }

  const char* take(size_t n) {
    if (pos_ + n > limit()) throw CheckpointError("truncated checkpoint: " + path_.string());
    const char* p = data_.data() + pos_;
    pos_ += n;
    return p;
  }

  size_t limit() const { return data_.size() - sizeof(uint64_t); }
  size_t pos() const { return pos_; }

 private:
  const std::string& data_;
  const std::filesystem::path& path_;
  size_t pos_ = 0;
};

}  // namespace

uint64_t fnv1a64(std::string_view bytes, uint64_t seed) {
  uint64_t h = seed;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void TensorArchive::put(const std::string& key, const torch::Tensor& value) {
  entries_[key] = value.detach().to(torch::kCPU).contiguous().clone();
}

void TensorArchive::put_string(const std::string& key, const std::string& value) {
  auto t = torch::empty({static_cast<int64_t>(value.size())}, torch::kUInt8);
  if (!value.empty()) std::memcpy(t.data_ptr<uint8_t>(), value.data(), value.size());
  entries_[key] = t;
}

void TensorArchive::put_int(const std::string& key, int64_t value) {
  entries_[key] = torch::tensor({value}, torch::kInt64);
}

void TensorArchive::put_double(const std::string& key, double value) {
  entries_[key] = torch::tensor({value}, torch::kFloat64);
}

const torch::Tensor& TensorArchive::get(const std::string& key) const {
  const auto it = entries_.find(key);
  if (it == entries_.end()) throw CheckpointError("checkpoint entry missing: " + key);
  return it->second;
}

std::string TensorArchive::get_string(const std::string& key) const {
  const auto& t = get(key);
  if (t.scalar_type() != torch::kUInt8) throw CheckpointError("entry is not a string: " + key);
  return {reinterpret_cast<const char*>(t.data_ptr<uint8_t>()), static_cast<size_t>(t.numel())};
}

int64_t TensorArchive::get_int(const std::string& key) const {
  const auto& t = get(key);
  if (t.scalar_type() != torch::kInt64 || t.numel() != 1) throw CheckpointError("entry is not an integer: " + key);
  return t.item<int64_t>();
}

double TensorArchive::get_double(const std::string& key) const {
  const auto& t = get(key);
  if (t.scalar_type() != torch::kFloat64 || t.numel() != 1) throw CheckpointError("entry is not a double: " + key);
  return t.item<double>();
}

void TensorArchive::put_module(const std::string& prefix, const torch::nn::Module& module) {
  for (const auto& p : module.named_parameters()) put(prefix + p.key(), p.value());
  for (const auto& b : module.named_buffers()) put(prefix + b.key(), b.value());
}

void TensorArchive::load_module(const std::string& prefix, torch::nn::Module& module) const {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor& dst) {
    const auto& src = get(prefix + name);
    if (src.sizes() != dst.sizes()) {
      std::ostringstream msg;
      msg << "shape mismatch for " << prefix << name << ": archive " << src.sizes() << ", module " << dst.sizes();
      throw CheckpointError(msg.str());
    }
    dst.copy_(src);
  };
  for (auto& p : module.named_parameters()) copy_into(p.key(), p.value());
  for (auto& b : module.named_buffers()) copy_into(b.key(), b.value());
}

void TensorArchive::save(const std::filesystem::path& path) const {
  std::string buf(kMagic, sizeof(kMagic));
  append(buf, static_cast<uint32_t>(entries_.size()));
  for (const auto& [key, value] : entries_) {
    append(buf, static_cast<uint32_t>(key.size()));
    buf += key;
    append(buf, dtype_code(value.scalar_type()));
    append(buf, static_cast<uint8_t>(value.dim()));
    for (auto d : value.sizes()) append(buf, static_cast<int64_t>(d));
    buf.append(static_cast<const char*>(value.data_ptr()), value.numel() * value.element_size());
  }
  append(buf, fnv1a64(buf));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint: " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw CheckpointError("short write: " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

TensorArchive TensorArchive::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint: " + path.string());
  const std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (data.size() < sizeof(kMagic) + sizeof(uint32_t) + sizeof(uint64_t) ||
      std::memcmp(data.data(), kMagic, sizeof(kMagic)) != 0)
    throw CheckpointError("not a checkpoint archive: " + path.string());

  uint64_t stored = 0;
  std::memcpy(&stored, data.data() + data.size() - sizeof(uint64_t), sizeof(uint64_t));
  if (stored != fnv1a64(std::string_view(data.data(), data.size() - sizeof(uint64_t))))
    throw CheckpointError("checksum mismatch, checkpoint is corrupt: " + path.string());

  Reader r(data, path);
  r.take(sizeof(kMagic));
  const auto count = r.read<uint32_t>();
  TensorArchive archive;
  for (uint32_t i = 0; i < count; ++i) {
    const auto key_len = r.read<uint32_t>();
    std::string key(r.take(key_len), key_len);
    const auto dtype = dtype_from_code(r.read<uint8_t>());
    const auto ndim = r.read<uint8_t>();
    std::vector<int64_t> dims(ndim);
    for (auto& d : dims) {
      d = r.read<int64_t>();
      if (d < 0) throw CheckpointError("negative dimension in " + key);
    }
    auto t = torch::empty(dims, dtype);
    const size_t bytes = static_cast<size_t>(t.numel()) * t.element_size();
    if (bytes > 0) std::memcpy(t.data_ptr(), r.take(bytes), bytes);
    archive.entries_[std::move(key)] = std::move(t);
  }
  if (r.pos() != r.limit()) throw CheckpointError("trailing bytes in checkpoint: " + path.string());
  return archive;
}

}  // namespace sdepth
