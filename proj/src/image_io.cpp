#include "sdepth/image_io.hpp"

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace F = torch::nn::functional;

namespace {

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

void write_or_throw(const std::filesystem::path& path, const cv::Mat& mat) {
  ensure_parent(path);
  if (!cv::imwrite(path.string(), mat)) throw DataError("failed to write image: " + path.string());
}

}  // namespace

torch::Tensor read_rgb(const std::filesystem::path& path, std::optional<std::pair<int, int>> height_width) {
  if (!std::filesystem::exists(path)) throw DataError("image not found: " + path.string());
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw DataError("cannot decode image: " + path.string());
  if (height_width && (bgr.rows != height_width->first || bgr.cols != height_width->second)) {
    cv::Mat resized;
    cv::resize(bgr, resized, cv::Size(height_width->second, height_width->first), 0, 0, cv::INTER_AREA);
    bgr = resized;
  }
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8).clone();
  return t.permute({2, 0, 1}).to(torch::kFloat32).div_(255.0).contiguous();
}

void write_rgb(const std::filesystem::path& path, const torch::Tensor& image) {
  TORCH_CHECK(image.dim() == 3 && image.size(0) == 3, "write_rgb expects 3 x H x W");
  auto bytes = image.detach().to(torch::kCPU, torch::kFloat32).clamp(0.0, 1.0).mul(255.0).round().to(torch::kUInt8);
  bytes = bytes.flip({0}).permute({1, 2, 0}).contiguous();  // RGB -> BGR, HWC
  cv::Mat mat(static_cast<int>(bytes.size(0)), static_cast<int>(bytes.size(1)), CV_8UC3, bytes.data_ptr<uint8_t>());
  write_or_throw(path, mat);
}

void write_png16(const std::filesystem::path& path, const torch::Tensor& values) {
  TORCH_CHECK(values.dim() == 2, "write_png16 expects H x W");
  auto v = values.detach().to(torch::kCPU, torch::kInt32).clamp(0, 65535).contiguous();
  cv::Mat mat(static_cast<int>(v.size(0)), static_cast<int>(v.size(1)), CV_16UC1);
  auto acc = v.accessor<int32_t, 2>();
  for (int r = 0; r < mat.rows; ++r)
    for (int c = 0; c < mat.cols; ++c) mat.at<uint16_t>(r, c) = static_cast<uint16_t>(acc[r][c]);
  write_or_throw(path, mat);
}

torch::Tensor read_png16(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw DataError("depth file not found: " + path.string());
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_ANYDEPTH);
  if (mat.empty() || mat.type() != CV_16UC1) throw DataError("not a 16-bit single channel PNG: " + path.string());
  auto out = torch::empty({mat.rows, mat.cols}, torch::kInt64);
  auto acc = out.accessor<int64_t, 2>();
  for (int r = 0; r < mat.rows; ++r)
    for (int c = 0; c < mat.cols; ++c) acc[r][c] = mat.at<uint16_t>(r, c);
  return out;
}

torch::Tensor resize_area(const torch::Tensor& image, int height, int width) {
  const bool batched = image.dim() == 4;
  auto x = batched ? image : image.unsqueeze(0);
  if (x.size(2) == height && x.size(3) == width) return image;
  x = F::interpolate(x, F::InterpolateFuncOptions().size(std::vector<int64_t>{height, width}).mode(torch::kArea));
  return batched ? x : x.squeeze(0);
}

}  // namespace sdepth
