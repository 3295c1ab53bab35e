#pragma once

#include <filesystem>
#include <optional>

#include <torch/torch.h>

namespace sdepth {

/// Decodes an 8-bit PNG/JPEG into a 3 x H x W float tensor in [0, 1] (RGB).
/// When a size is given the image is resized with area averaging.
torch::Tensor read_rgb(const std::filesystem::path& path, std::optional<std::pair<int, int>> height_width = {});

/// Writes a 3 x H x W tensor in [0, 1] as an 8-bit RGB PNG.
void write_rgb(const std::filesystem::path& path, const torch::Tensor& image);

/// Writes an H x W uint16-valued tensor (any integer or float dtype) as a 16-bit PNG.
void write_png16(const std::filesystem::path& path, const torch::Tensor& values);

/// Reads a 16-bit single-channel PNG into an H x W int64 tensor.
torch::Tensor read_png16(const std::filesystem::path& path);

/// Area-averaging resize of a C x H x W or B x C x H x W float tensor.
torch::Tensor resize_area(const torch::Tensor& image, int height, int width);

}  // namespace sdepth
