#include "sdepth/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <random>

#include <json.hpp>

#include "sdepth/errors.hpp"
#include "sdepth/image_io.hpp"

namespace sdepth {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr int kMetadataVersion = 1;
constexpr double kDepthPngScale = 256.0;

std::vector<double> gaussian_kernel(double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(2 * radius + 1);
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) sum += k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  return k;
}

// Blurs one channel (rows x cols, row-major) with clamped borders.
void blur(std::vector<double>& img, int rows, int cols, const std::vector<double>& k) {
  const int r = static_cast<int>(k.size() / 2);
  std::vector<double> tmp(img.size());
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * img[y * cols + std::clamp(x + i, 0, cols - 1)];
      tmp[y * cols + x] = acc;
    }
  for (int y = 0; y < rows; ++y)
    for (int x = 0; x < cols; ++x) {
      double acc = 0.0;
      for (int i = -r; i <= r; ++i) acc += k[i + r] * tmp[std::clamp(y + i, 0, rows - 1) * cols + x];
      img[y * cols + x] = acc;
    }
}

double sample_bilinear(const double* channel, int rows, int cols, double col, double row) {
  col = std::clamp(col, 0.0, static_cast<double>(cols - 1));
  row = std::clamp(row, 0.0, static_cast<double>(rows - 1));
  const int c0 = static_cast<int>(std::floor(col));
  const int r0 = static_cast<int>(std::floor(row));
  const int c1 = std::min(c0 + 1, cols - 1);
  const int r1 = std::min(r0 + 1, rows - 1);
  const double fc = col - c0;
  const double fr = row - r0;
  const double top = (1.0 - fc) * channel[r0 * cols + c0] + fc * channel[r0 * cols + c1];
  const double bottom = (1.0 - fc) * channel[r1 * cols + c0] + fc * channel[r1 * cols + c1];
  return (1.0 - fr) * top + fr * bottom;
}

json pose_to_json(const PoseSE3& p) {
  return {{"axis_angle", {p.axis_angle().x(), p.axis_angle().y(), p.axis_angle().z()}},
          {"translation", {p.translation().x(), p.translation().y(), p.translation().z()}}};
}

PoseSE3 pose_from_json(const json& j) {
  const auto aa = j.at("axis_angle").get<std::vector<double>>();
  const auto t = j.at("translation").get<std::vector<double>>();
  if (aa.size() != 3 || t.size() != 3) throw DataError("pose entries need three components");
  return {Eigen::Vector3d(aa[0], aa[1], aa[2]), Eigen::Vector3d(t[0], t[1], t[2])};
}

std::string frame_name(size_t i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%06zu.png", i);
  return buf;
}

double visible_fraction(const torch::Tensor& depth, const CameraIntrinsics& K, const PoseSE3& from_to) {
  const auto grid = project(backproject(depth.unsqueeze(0).to(torch::kFloat64), K), K,
                            from_to.to_tensor(torch::kFloat64));
  return 1.0 - grid.oob_mask.to(torch::kFloat64).mean().item<double>();
}

}  // namespace

torch::Tensor make_texture(const PlaneLayer& layer) {
  const int cols = static_cast<int>(std::ceil((layer.x_max - layer.x_min) / layer.texel_size)) + 1;
  const int rows = static_cast<int>(std::ceil((layer.y_max - layer.y_min) / layer.texel_size)) + 1;
  if (cols < 2 || rows < 2 || static_cast<int64_t>(cols) * rows > 16'000'000)
    throw ConfigError("plane texture size out of range; check extents and texel_size");
  std::mt19937_64 rng(layer.texture_seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  const auto kernel = gaussian_kernel(layer.blur_sigma);

  auto tex = torch::empty({3, rows, cols}, torch::kFloat64);
  for (int c = 0; c < 3; ++c) {
    std::vector<double> ch(static_cast<size_t>(rows) * cols);
    for (auto& v : ch) v = unit(rng);
    blur(ch, rows, cols, kernel);
    const auto [lo, hi] = std::minmax_element(ch.begin(), ch.end());
    const double span = std::max(*hi - *lo, 1e-12);
    const double low = *lo;
    double* dst = tex[c].data_ptr<double>();
    for (size_t i = 0; i < ch.size(); ++i) dst[i] = layer.tint[c] * (0.15 + 0.7 * (ch[i] - low) / span);
  }
  return tex;
}

Eigen::Vector2d texel_coordinates(const PlaneLayer& layer, double x, double y) {
  return {(x - layer.x_min) / layer.texel_size, (y - layer.y_min) / layer.texel_size};
}

RenderedView render_view(const SyntheticSceneSpec& spec, const std::vector<torch::Tensor>& textures,
                         const PoseSE3& camera_to_world) {
  const auto& K = spec.intrinsics;
  const int h = K.height;
  const int w = K.width;
  RenderedView view{torch::empty({3, h, w}, torch::kFloat32), torch::empty({1, h, w}, torch::kFloat32),
                    torch::full({h, w}, -1, torch::kInt64)};
  auto img = view.image.accessor<float, 3>();
  auto dep = view.depth.accessor<float, 3>();
  auto ids = view.layer_id.accessor<int64_t, 2>();

  const Eigen::Matrix3d R = camera_to_world.rotation();
  const Eigen::Vector3d origin = camera_to_world.translation();
  for (int v = 0; v < h; ++v) {
    for (int u = 0; u < w; ++u) {
      const Eigen::Vector3d ray((u - K.cx) / K.fx, (v - K.cy) / K.fy, 1.0);
      const Eigen::Vector3d dir = R * ray;
      double best = std::numeric_limits<double>::infinity();
      int best_layer = -1;
      Eigen::Vector3d hit;
      for (size_t l = 0; l < spec.layers.size(); ++l) {
        const auto& layer = spec.layers[l];
        if (std::abs(dir.z()) < 1e-12) continue;
        const double t = (layer.depth - origin.z()) / dir.z();
        if (!(t > 0.0) || t >= best) continue;
        const Eigen::Vector3d p = origin + t * dir;
        if (p.x() < layer.x_min || p.x() > layer.x_max || p.y() < layer.y_min || p.y() > layer.y_max) continue;
        best = t;
        best_layer = static_cast<int>(l);
        hit = p;
      }
      if (best_layer < 0) {
        throw ConfigError("pixel (" + std::to_string(u) + ", " + std::to_string(v) + ") sees no plane");
      }
      const auto& tex = textures[best_layer];
      const auto tc = texel_coordinates(spec.layers[best_layer], hit.x(), hit.y());
      const int rows = static_cast<int>(tex.size(1));
      const int cols = static_cast<int>(tex.size(2));
      for (int c = 0; c < 3; ++c)
        img[c][v][u] = static_cast<float>(sample_bilinear(tex[c].data_ptr<double>(), rows, cols, tc.x(), tc.y()));
      dep[0][v][u] = static_cast<float>(best);  // ray has unit z, so t is the camera z-depth
      ids[v][u] = best_layer;
    }
  }
  return view;
}

PoseSE3 SyntheticScene::relative_pose(size_t from, size_t to) const {
  return spec.trajectory.at(to).inverse().compose(spec.trajectory.at(from));
}

SyntheticScene generate_synthetic_scene(const SyntheticSceneSpec& spec) {
  spec.intrinsics.validate();
  if (spec.layers.empty()) throw ConfigError("synthetic scene needs at least one plane");
  if (spec.trajectory.empty()) throw ConfigError("synthetic scene needs at least one camera pose");
  for (const auto& layer : spec.layers)
    if (!(layer.depth >= 0.5 && layer.depth <= 50.0))
      throw ConfigError("plane depth " + std::to_string(layer.depth) + " outside [0.5, 50]");

  SyntheticScene scene;
  scene.spec = spec;
  for (const auto& layer : spec.layers) scene.textures.push_back(make_texture(layer));
  for (const auto& pose : spec.trajectory) {
    auto view = render_view(spec, scene.textures, pose);
    scene.frames.push_back(view.image);
    scene.depths.push_back(view.depth);
    scene.layer_ids.push_back(view.layer_id);
    if (spec.render_stereo) {
      const auto right = pose.compose(PoseSE3::translation_only(spec.stereo_baseline, 0.0, 0.0));
      scene.stereo_frames.push_back(render_view(spec, scene.textures, right).image);
    }
  }
  for (size_t i = 0; i + 1 < scene.size(); ++i) {
    const double fwd = visible_fraction(scene.depths[i], spec.intrinsics, scene.relative_pose(i, i + 1));
    const double bwd = visible_fraction(scene.depths[i + 1], spec.intrinsics, scene.relative_pose(i + 1, i));
    if (std::min(fwd, bwd) < spec.min_visible_fraction) {
      throw ConfigError("frames " + std::to_string(i) + " and " + std::to_string(i + 1) + " share only " +
                        std::to_string(std::min(fwd, bwd)) + " of their view; reduce the camera motion");
    }
  }
  return scene;
}

SyntheticSceneSpec two_plane_spec(const TwoPlanePreset& p, uint64_t seed) {
  std::mt19937_64 rng(seed * 0x9e3779b97f4a7c15ULL + 17);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SyntheticSceneSpec spec;
  spec.intrinsics = CameraIntrinsics::from_normalized(0.58, 1.92, p.width, p.height);
  const double fx = spec.intrinsics.fx;

  PlaneLayer far;
  far.depth = p.far_depth;
  far.x_min = -1.4 * p.far_depth;
  far.x_max = 1.4 * p.far_depth;
  far.y_min = -0.5 * p.far_depth;
  far.y_max = 0.5 * p.far_depth;
  far.texture_seed = rng();
  far.texel_size = 1.5 * p.far_depth / fx;
  far.tint = Eigen::Vector3d(0.55 + 0.1 * unit(rng), 0.75 + 0.1 * unit(rng), 1.0);

  PlaneLayer near;
  near.depth = p.near_depth;
  const double center = (unit(rng) - 0.5) * 0.6 * p.near_depth;
  const double half_width = (0.15 + 0.08 * unit(rng)) * p.near_depth;
  near.x_min = center - half_width;
  near.x_max = center + half_width;
  near.y_min = -(0.05 + 0.12 * unit(rng)) * p.near_depth;
  near.y_max = 1.0 * p.near_depth;
  near.texture_seed = rng();
  near.texel_size = 1.5 * p.near_depth / fx;
  near.tint = Eigen::Vector3d(1.0, 0.7 + 0.1 * unit(rng), 0.45 + 0.1 * unit(rng));

  spec.layers = {far, near};
  const double x0 = -p.step_x * (p.frames - 1) / 2.0;
  for (int i = 0; i < p.frames; ++i)
    spec.trajectory.push_back(PoseSE3::translation_only(x0 + p.step_x * i, 0.0, p.step_z * i));
  return spec;
}

SyntheticSceneSpec preset_spec(const std::string& name, uint64_t seed, const TwoPlanePreset& sizes) {
  if (name == "two-planes") return two_plane_spec(sizes, seed);
  if (name == "single-plane") {
    auto spec = two_plane_spec(sizes, seed);
    spec.layers.resize(1);
    return spec;
  }
  throw ConfigError("unknown synthetic preset '" + name + "' (expected two-planes or single-plane)");
}

std::vector<SyntheticScene> two_plane_family(const TwoPlanePreset& preset, size_t count, uint64_t seed,
                                             bool render_stereo) {
  std::vector<SyntheticScene> scenes;
  scenes.reserve(count);
  for (size_t i = 0; i < count; ++i) {
    auto spec = two_plane_spec(preset, seed + i);
    spec.render_stereo = render_stereo;
    scenes.push_back(generate_synthetic_scene(spec));
  }
  return scenes;
}

void save_synthetic_scene(const SyntheticScene& scene, const fs::path& dir) {
  fs::create_directories(dir / "frames");
  fs::create_directories(dir / "depth");
  const auto& K = scene.spec.intrinsics;
  json meta;
  meta["format"] = "sdepth-synthetic-scene";
  meta["version"] = kMetadataVersion;
  meta["width"] = K.width;
  meta["height"] = K.height;
  meta["intrinsics"] = {{"fx", K.fx}, {"fy", K.fy}, {"cx", K.cx}, {"cy", K.cy}};
  meta["pose_convention"] = "camera_to_world";
  meta["depth_png_scale"] = kDepthPngScale;
  meta["stereo_baseline"] = scene.spec.stereo_baseline;
  meta["layers"] = json::array();
  for (const auto& l : scene.spec.layers) {
    meta["layers"].push_back({{"depth", l.depth},
                              {"extent", {l.x_min, l.x_max, l.y_min, l.y_max}},
                              {"texture_seed", l.texture_seed},
                              {"texel_size", l.texel_size},
                              {"blur_sigma", l.blur_sigma},
                              {"tint", {l.tint.x(), l.tint.y(), l.tint.z()}}});
  }
  meta["frames"] = json::array();
  for (size_t i = 0; i < scene.size(); ++i) {
    const auto name = frame_name(i);
    write_rgb(dir / "frames" / name, scene.frames[i]);
    write_png16(dir / "depth" / name, (scene.depths[i][0] * kDepthPngScale).round());
    json f = {{"index", i},
              {"image", "frames/" + name},
              {"depth", "depth/" + name},
              {"pose", pose_to_json(scene.spec.trajectory[i])}};
    if (!scene.stereo_frames.empty()) {
      write_rgb(dir / "stereo" / name, scene.stereo_frames[i]);
      f["stereo_image"] = "stereo/" + name;
    }
    meta["frames"].push_back(f);
  }
  std::ofstream out(dir / "metadata.json");
  out << meta.dump(2) << "\n";
  if (!out) throw DataError("failed to write " + (dir / "metadata.json").string());
}

LoadedSyntheticScene load_synthetic_scene(const fs::path& dir) {
  const auto meta_path = dir / "metadata.json";
  std::ifstream in(meta_path);
  if (!in) throw DataError("synthetic scene metadata not found: " + meta_path.string());
  json meta;
  try {
    in >> meta;
  } catch (const json::exception& e) {
    throw DataError("malformed " + meta_path.string() + ": " + e.what());
  }
  try {
    if (meta.at("format") != "sdepth-synthetic-scene") throw DataError("unexpected format in " + meta_path.string());
    if (meta.at("version").get<int>() != kMetadataVersion)
      throw DataError("unsupported synthetic scene version in " + meta_path.string());
    LoadedSyntheticScene scene;
    const auto& k = meta.at("intrinsics");
    scene.intrinsics = {k.at("fx").get<double>(), k.at("fy").get<double>(), k.at("cx").get<double>(),
                        k.at("cy").get<double>(), meta.at("width").get<int>(), meta.at("height").get<int>()};
    scene.intrinsics.validate();
    scene.stereo_baseline = meta.value("stereo_baseline", kStereoBaseline);
    const double scale = meta.at("depth_png_scale").get<double>();
    for (const auto& f : meta.at("frames")) {
      scene.frames.push_back(read_rgb(dir / f.at("image").get<std::string>()));
      scene.depths.push_back((read_png16(dir / f.at("depth").get<std::string>()).to(torch::kFloat32) / scale).unsqueeze(0));
      scene.trajectory.push_back(pose_from_json(f.at("pose")));
      if (f.contains("stereo_image")) scene.stereo_frames.push_back(read_rgb(dir / f.at("stereo_image").get<std::string>()));
    }
    return scene;
  } catch (const json::exception& e) {
    throw DataError("malformed " + meta_path.string() + ": " + e.what());
  }
}

LoadedSyntheticScene to_loaded(const SyntheticScene& scene) {
  LoadedSyntheticScene out;
  out.intrinsics = scene.spec.intrinsics;
  out.frames = scene.frames;
  out.depths = scene.depths;
  out.stereo_frames = scene.stereo_frames;
  out.trajectory = scene.spec.trajectory;
  out.stereo_baseline = scene.spec.stereo_baseline;
  return out;
}

SyntheticDataset::SyntheticDataset(std::vector<LoadedSyntheticScene> scenes, TrainingMode mode)
    : scenes_(std::move(scenes)), mode_(mode) {
  if (scenes_.empty()) throw DataError("synthetic dataset has no scenes");
  for (size_t s = 0; s < scenes_.size(); ++s) {
    const auto& sc = scenes_[s];
    if (!(sc.intrinsics == scenes_.front().intrinsics)) throw DataError("synthetic scenes differ in intrinsics");
    if (uses_stereo(mode) && sc.stereo_frames.size() != sc.frames.size())
      throw DataError("mode " + to_string(mode) + " needs stereo frames; regenerate the scene with stereo");
    const size_t first = uses_temporal(mode) ? 1 : 0;
    const size_t end = uses_temporal(mode) ? (sc.frames.size() >= 2 ? sc.frames.size() - 1 : 0) : sc.frames.size();
    for (size_t i = first; i < end; ++i) index_.emplace_back(s, i);
  }
}

SyntheticDataset SyntheticDataset::from_scenes(const std::vector<SyntheticScene>& scenes, TrainingMode mode) {
  std::vector<LoadedSyntheticScene> loaded;
  for (const auto& s : scenes) loaded.push_back(to_loaded(s));
  return SyntheticDataset(std::move(loaded), mode);
}

SampleTriplet SyntheticDataset::get(size_t index) const {
  const auto [s, i] = index_.at(index);
  const auto& sc = scenes_[s];
  SampleTriplet t;
  t.target = sc.frames[i];
  t.intrinsics = sc.intrinsics;
  if (uses_temporal(mode_)) {
    t.sources = {sc.frames[i - 1], sc.frames[i + 1]};
    t.kinds = {SourceKind::Previous, SourceKind::Next};
  }
  if (uses_stereo(mode_)) {
    t.sources.push_back(sc.stereo_frames[i]);
    t.kinds.push_back(SourceKind::Stereo);
    t.stereo_baseline_pose = stereo_pose('l', false, sc.stereo_baseline);
  }
  return t;
}

CameraIntrinsics SyntheticDataset::intrinsics() const { return scenes_.front().intrinsics; }

torch::Tensor SyntheticDataset::target_depth(size_t index) const {
  const auto [s, i] = index_.at(index);
  return scenes_[s].depths[i];
}

}  // namespace sdepth
