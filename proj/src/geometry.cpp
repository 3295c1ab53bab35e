#include "sdepth/geometry.hpp"

#include <cmath>
#include <sstream>

#include "sdepth/errors.hpp"

namespace sdepth {

namespace F = torch::nn::functional;

void CameraIntrinsics::validate() const {
  std::ostringstream why;
  if (!(fx > 0.0) || !(fy > 0.0)) why << "focal lengths must be positive (fx=" << fx << ", fy=" << fy << "). ";
  if (width < 2 || height < 2) why << "resolution must be at least 2x2 (" << width << "x" << height << "). ";
  if (!(cx >= 0.0 && cx < width) || !(cy >= 0.0 && cy < height))
    why << "principal point (" << cx << ", " << cy << ") outside the image. ";
  if (!why.str().empty()) throw ConfigError("invalid camera intrinsics: " + why.str());
}

CameraIntrinsics CameraIntrinsics::scaled(double s) const {
  CameraIntrinsics k = *this;
  k.fx *= s;
  k.fy *= s;
  k.cx *= s;
  k.cy *= s;
  k.width = static_cast<int>(std::lround(width * s));
  k.height = static_cast<int>(std::lround(height * s));
  return k;
}

CameraIntrinsics CameraIntrinsics::resized(int w, int h) const {
  const double sx = static_cast<double>(w - 1) / (width - 1);
  const double sy = static_cast<double>(h - 1) / (height - 1);
  return {fx * sx, fy * sy, cx * sx, cy * sy, w, h};
}

CameraIntrinsics CameraIntrinsics::flipped() const {
  CameraIntrinsics k = *this;
  k.cx = (width - 1) - cx;
  return k;
}

Eigen::Matrix3d CameraIntrinsics::matrix() const {
  Eigen::Matrix3d m;
  m << fx, 0, cx, 0, fy, cy, 0, 0, 1;
  return m;
}

Eigen::Matrix3d CameraIntrinsics::inverse_matrix() const {
  Eigen::Matrix3d m;
  m << 1.0 / fx, 0, -cx / fx, 0, 1.0 / fy, -cy / fy, 0, 0, 1;
  return m;
}

CameraIntrinsics CameraIntrinsics::from_normalized(double fx_ratio, double fy_ratio, int width,
                                                   int height) {
  CameraIntrinsics k{fx_ratio * width, fy_ratio * height, (width - 1) / 2.0, (height - 1) / 2.0, width,
                     height};
  k.validate();
  return k;
}

Eigen::Matrix3d axis_angle_to_matrix(const Eigen::Vector3d& aa) {
  const double theta2 = aa.squaredNorm();
  double a = 0.0;
  double b = 0.0;
  if (theta2 < 1e-12) {
    a = 1.0 - theta2 / 6.0;
    b = 0.5 - theta2 / 24.0;
  } else {
    const double theta = std::sqrt(theta2);
    a = std::sin(theta) / theta;
    b = (1.0 - std::cos(theta)) / theta2;
  }
  Eigen::Matrix3d k;
  k << 0, -aa.z(), aa.y(), aa.z(), 0, -aa.x(), -aa.y(), aa.x(), 0;
  return Eigen::Matrix3d::Identity() + a * k + b * k * k;
}

Eigen::Vector3d matrix_to_axis_angle(const Eigen::Matrix3d& rotation) {
  const Eigen::AngleAxisd aa(rotation);
  return aa.angle() * aa.axis();
}

PoseSE3 PoseSE3::from_matrix(const Eigen::Matrix4d& m) {
  return {matrix_to_axis_angle(m.topLeftCorner<3, 3>()), m.topRightCorner<3, 1>()};
}

Eigen::Matrix4d PoseSE3::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation();
  m.topRightCorner<3, 1>() = translation_;
  return m;
}

PoseSE3 PoseSE3::compose(const PoseSE3& other) const {
  const Eigen::Matrix3d r = rotation();
  return {matrix_to_axis_angle(r * other.rotation()), r * other.translation_ + translation_};
}

PoseSE3 PoseSE3::inverse() const {
  const Eigen::Matrix3d rt = rotation().transpose();
  return {-axis_angle_, -rt * translation_};
}

torch::Tensor PoseSE3::to_tensor(const torch::TensorOptions& options) const {
  const Eigen::Matrix4d m = matrix();
  auto t = torch::empty({4, 4}, torch::kFloat64);
  auto acc = t.accessor<double, 2>();
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) acc[r][c] = m(r, c);
  return t.to(options);
}

torch::Tensor axis_angle_to_matrix(const torch::Tensor& aa) {
  TORCH_CHECK(aa.dim() == 2 && aa.size(1) == 3, "axis_angle must be B x 3");
  const auto theta2 = (aa * aa).sum(1, /*keepdim=*/true).unsqueeze(-1);  // B x 1 x 1
  const auto small = theta2 < 1e-8;
  const auto safe2 = torch::where(small, torch::ones_like(theta2), theta2);
  const auto theta = safe2.sqrt();
  const auto a = torch::where(small, 1.0 - theta2 / 6.0, theta.sin() / theta);
  const auto b = torch::where(small, 0.5 - theta2 / 24.0, (1.0 - theta.cos()) / safe2);

  const auto x = aa.select(1, 0);
  const auto y = aa.select(1, 1);
  const auto z = aa.select(1, 2);
  const auto zero = torch::zeros_like(x);
  const auto k = torch::stack({zero, -z, y, z, zero, -x, -y, x, zero}, 1).view({-1, 3, 3});
  const auto eye = torch::eye(3, aa.options()).unsqueeze(0);
  return eye + a * k + b * torch::matmul(k, k);
}

torch::Tensor pose_to_matrix(const torch::Tensor& axis_angle, const torch::Tensor& translation,
                             bool invert) {
  TORCH_CHECK(translation.dim() == 2 && translation.size(1) == 3, "translation must be B x 3");
  auto r = axis_angle_to_matrix(axis_angle);
  auto t = translation.unsqueeze(-1);
  if (invert) {
    r = r.transpose(1, 2);
    t = -torch::matmul(r, t);
  }
  const auto batch = axis_angle.size(0);
  auto bottom = torch::zeros({batch, 1, 4}, axis_angle.options());
  bottom.select(2, 3).fill_(1.0);
  return torch::cat({torch::cat({r, t}, 2), bottom}, 1);
}

namespace {

void check_resolution(const torch::Tensor& depth, const CameraIntrinsics& K) {
  if (depth.dim() != 4 || depth.size(1) != 1)
    throw ConfigError("depth must be B x 1 x H x W");
  if (depth.size(2) != K.height || depth.size(3) != K.width) {
    std::ostringstream msg;
    msg << "intrinsics resolution " << K.width << "x" << K.height << " does not match depth "
        << depth.size(3) << "x" << depth.size(2);
    throw ConfigError(msg.str());
  }
}

}  // namespace

torch::Tensor backproject(const torch::Tensor& depth, const CameraIntrinsics& K) {
  check_resolution(depth, K);
  const auto batch = depth.size(0);
  const auto h = depth.size(2);
  const auto w = depth.size(3);
  const auto opts = depth.options();
  const auto vs = torch::arange(h, opts);
  const auto us = torch::arange(w, opts);
  const auto mesh = torch::meshgrid({vs, us}, "ij");
  const auto pix = torch::stack({mesh[1].reshape(-1), mesh[0].reshape(-1), torch::ones({h * w}, opts)}, 0);

  const Eigen::Matrix3d kinv = K.inverse_matrix();
  auto kinv_t = torch::empty({3, 3}, torch::kFloat64);
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) kinv_t[r][c] = kinv(r, c);
  const auto rays = torch::matmul(kinv_t.to(opts.dtype()), pix);  // 3 x N
  const auto cam = depth.reshape({batch, 1, h * w}) * rays.unsqueeze(0);
  return torch::cat({cam, torch::ones({batch, 1, h * w}, opts)}, 1);
}

SampleGrid project(const torch::Tensor& points, const CameraIntrinsics& K, const torch::Tensor& T) {
  TORCH_CHECK(points.dim() == 3 && points.size(1) == 4, "points must be B x 4 x N");
  const auto batch = points.size(0);
  const auto n = points.size(2);
  if (n != static_cast<int64_t>(K.width) * K.height)
    throw ConfigError("point count does not match the intrinsics resolution");

  auto transform = T.to(points.dtype());
  if (transform.dim() == 2) transform = transform.unsqueeze(0);
  const auto cam = torch::matmul(transform.slice(1, 0, 3), points);  // B x 3 x N
  const auto z = cam.select(1, 2);
  const auto behind = z < kProjectionMinZ;
  const auto zc = z.clamp_min(kProjectionMinZ);
  const auto u = K.fx * cam.select(1, 0) / zc + K.cx;
  const auto v = K.fy * cam.select(1, 1) / zc + K.cy;
  const auto xn = u * (2.0 / (K.width - 1)) - 1.0;
  const auto yn = v * (2.0 / (K.height - 1)) - 1.0;

  SampleGrid grid;
  grid.coords = torch::stack({xn, yn}, -1).view({batch, K.height, K.width, 2});
  const double edge = 1.0 + 1e-6;
  const auto oob = behind | (xn.abs() > edge) | (yn.abs() > edge);
  grid.oob_mask = oob.view({batch, K.height, K.width});
  return grid;
}

torch::Tensor identity_grid(int64_t batch, int64_t height, int64_t width, const torch::TensorOptions& options) {
  const auto xs = torch::linspace(-1.0, 1.0, width, options);
  const auto ys = torch::linspace(-1.0, 1.0, height, options);
  const auto mesh = torch::meshgrid({ys, xs}, "ij");
  return torch::stack({mesh[1], mesh[0]}, -1).unsqueeze(0).expand({batch, height, width, 2}).contiguous();
}

torch::Tensor bilinear_sample(const torch::Tensor& image, const torch::Tensor& coords) {
  TORCH_CHECK(image.dim() == 4 && coords.dim() == 4 && coords.size(3) == 2,
              "bilinear_sample expects B x C x H x W image and B x h x w x 2 grid");
  return F::grid_sample(image, coords.to(image.dtype()),
                        F::GridSampleFuncOptions()
                            .mode(torch::kBilinear)
                            .padding_mode(torch::kBorder)
                            .align_corners(true));
}

torch::Tensor disparity_to_depth(const torch::Tensor& sigma, double d_min, double d_max) {
  const double b = 1.0 / d_max;
  const double a = 1.0 / d_min - b;
  return 1.0 / (a * sigma + b);
}

torch::Tensor depth_to_disparity(const torch::Tensor& depth, double d_min, double d_max) {
  const double b = 1.0 / d_max;
  const double a = 1.0 / d_min - b;
  return (1.0 / depth - b) / a;
}

torch::Tensor warp_image(const torch::Tensor& source, const torch::Tensor& depth, const CameraIntrinsics& K,
                         const torch::Tensor& T) {
  return bilinear_sample(source, project(backproject(depth, K), K, T));
}

}  // namespace sdepth
