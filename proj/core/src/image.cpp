#include "scenegen/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

#include "scenegen/errors.hpp"

namespace scenegen {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

void check_rgb(const torch::Tensor& t, const char* who) {
  if (!t.defined() || t.dim() != 3 || t.size(0) != 3 || t.size(1) < 1 ||
      t.size(2) < 1) {
    throw InvalidArgument(std::string(who) + ": expected [3, H, W] tensor");
  }
}

}  // namespace

Image::Image(int height, int width, std::array<float, 3> fill) {
  if (height < 1 || width < 1) {
    throw InvalidArgument("Image: non-positive size");
  }
  tensor = torch::empty({3, height, width}, torch::kFloat32);
  for (int c = 0; c < 3; ++c) tensor[c].fill_(fill[c]);
}

Image load_png(const std::filesystem::path& path) {
  FilePtr fp(std::fopen(path.string().c_str(), "rb"));
  if (!fp) throw LoadError("cannot open " + path.string());

  png_byte header[8];
  if (std::fread(header, 1, 8, fp.get()) != 8 ||
      png_sig_cmp(header, 0, 8) != 0) {
    throw LoadError("not a PNG file: " + path.string());
  }

  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_read_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw LoadError("corrupt PNG: " + path.string());
  }

  png_init_io(png, fp.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  // Fold everything down to 8-bit RGB.
  png_set_strip_16(png);
  png_set_palette_to_rgb(png);
  png_set_expand_gray_1_2_4_to_8(png);
  png_set_gray_to_rgb(png);
  png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  const size_t rowbytes = png_get_rowbytes(png, info);
  std::vector<png_byte> data(rowbytes * height);
  std::vector<png_bytep> rows(height);
  for (int y = 0; y < height; ++y) rows[y] = data.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  if (rowbytes < static_cast<size_t>(width) * 3) {
    throw LoadError("unexpected PNG row layout: " + path.string());
  }

  Image out(height, width);
  auto acc = out.tensor.accessor<float, 3>();
  for (int y = 0; y < height; ++y) {
    const png_bytep row = rows[y];
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        acc[c][y][x] = static_cast<float>(row[x * 3 + c]) / 255.0f;
      }
    }
  }
  return out;
}

void save_png(const std::filesystem::path& path, const Image& image) {
  check_rgb(image.tensor, "save_png");
  FilePtr fp(std::fopen(path.string().c_str(), "wb"));
  if (!fp) throw Error("cannot write " + path.string());

  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw Error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    throw Error("png_create_info_struct failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error("PNG write failed: " + path.string());
  }

  const int height = image.height();
  const int width = image.width();
  png_init_io(png, fp.get());
  png_set_IHDR(png, info, width, height, 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);

  auto cpu = image.tensor.to(torch::kFloat32).contiguous();
  auto acc = cpu.accessor<float, 3>();
  std::vector<png_byte> row(static_cast<size_t>(width) * 3);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(acc[c][y][x], 0.0f, 1.0f);
        row[x * 3 + c] = static_cast<png_byte>(std::lround(v * 255.0f));
      }
    }
    png_write_row(png, row.data());
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

Image resize_bilinear(const Image& image, int out_h, int out_w) {
  check_rgb(image.tensor, "resize_bilinear");
  if (out_h < 1 || out_w < 1) {
    throw InvalidArgument("resize_bilinear: non-positive target size");
  }
  namespace F = torch::nn::functional;
  auto resized = F::interpolate(
      image.tensor.unsqueeze(0),
      F::InterpolateFuncOptions()
          .size(std::vector<int64_t>{out_h, out_w})
          .mode(torch::kBilinear)
          .align_corners(false));
  return Image(resized.squeeze(0));
}

namespace {

// Paint every pixel whose center lies within `radius` of the segment.
void paint_capsule(Image& image, double x0, double y0, double x1, double y1,
                   double radius, std::array<float, 3> rgb) {
  const int h = image.height();
  const int w = image.width();
  const int min_x = std::max(0, (int)std::floor(std::min(x0, x1) - radius));
  const int max_x = std::min(w - 1, (int)std::ceil(std::max(x0, x1) + radius));
  const int min_y = std::max(0, (int)std::floor(std::min(y0, y1) - radius));
  const int max_y = std::min(h - 1, (int)std::ceil(std::max(y0, y1) + radius));
  if (min_x > max_x || min_y > max_y) return;

  const double dx = x1 - x0;
  const double dy = y1 - y0;
  const double len2 = dx * dx + dy * dy;
  const double r2 = radius * radius;
  auto acc = image.tensor.accessor<float, 3>();
  for (int y = min_y; y <= max_y; ++y) {
    for (int x = min_x; x <= max_x; ++x) {
      const double px = x + 0.5 - x0;
      const double py = y + 0.5 - y0;
      double t = len2 > 0.0 ? (px * dx + py * dy) / len2 : 0.0;
      t = std::clamp(t, 0.0, 1.0);
      const double ex = px - t * dx;
      const double ey = py - t * dy;
      if (ex * ex + ey * ey <= r2) {
        for (int c = 0; c < 3; ++c) acc[c][y][x] = rgb[c];
      }
    }
  }
}

}  // namespace

void draw_segment(Image& image, double x0, double y0, double x1, double y1,
                  double thickness, std::array<float, 3> rgb) {
  check_rgb(image.tensor, "draw_segment");
  if (thickness <= 0.0) throw InvalidArgument("draw_segment: thickness <= 0");
  paint_capsule(image, x0, y0, x1, y1, thickness / 2.0, rgb);
}

void draw_disk(Image& image, double cx, double cy, double radius,
               std::array<float, 3> rgb) {
  check_rgb(image.tensor, "draw_disk");
  if (radius <= 0.0) throw InvalidArgument("draw_disk: radius <= 0");
  paint_capsule(image, cx, cy, cx, cy, radius, rgb);
}

FigureStyle palette_style(int index) {
  static const std::array<std::array<float, 3>, 8> torsos = {{
      {0.85f, 0.25f, 0.25f},
      {0.25f, 0.60f, 0.30f},
      {0.25f, 0.35f, 0.85f},
      {0.85f, 0.65f, 0.20f},
      {0.60f, 0.25f, 0.70f},
      {0.20f, 0.70f, 0.70f},
      {0.80f, 0.40f, 0.60f},
      {0.55f, 0.55f, 0.25f},
  }};
  static const std::array<std::array<float, 3>, 8> limbs = {{
      {0.30f, 0.45f, 0.90f},
      {0.90f, 0.45f, 0.25f},
      {0.35f, 0.75f, 0.35f},
      {0.50f, 0.30f, 0.80f},
      {0.85f, 0.75f, 0.25f},
      {0.80f, 0.30f, 0.35f},
      {0.30f, 0.65f, 0.85f},
      {0.70f, 0.50f, 0.30f},
  }};
  FigureStyle style;
  const int i = ((index % 8) + 8) % 8;
  style.torso = torsos[i];
  style.limbs = limbs[i];
  style.head = {0.95f, 0.82f, 0.66f};
  return style;
}

const std::vector<std::pair<Joint, Joint>>& skeleton_bones() {
  static const std::vector<std::pair<Joint, Joint>> bones = {
      {Joint::kNeck, Joint::kNose},
      {Joint::kNeck, Joint::kRShoulder},
      {Joint::kNeck, Joint::kLShoulder},
      {Joint::kRShoulder, Joint::kRElbow},
      {Joint::kRElbow, Joint::kRWrist},
      {Joint::kLShoulder, Joint::kLElbow},
      {Joint::kLElbow, Joint::kLWrist},
      {Joint::kNeck, Joint::kRHip},
      {Joint::kNeck, Joint::kLHip},
      {Joint::kRHip, Joint::kRKnee},
      {Joint::kRKnee, Joint::kRAnkle},
      {Joint::kLHip, Joint::kLKnee},
      {Joint::kLKnee, Joint::kLAnkle},
      {Joint::kNose, Joint::kREye},
      {Joint::kNose, Joint::kLEye},
      {Joint::kREye, Joint::kREar},
      {Joint::kLEye, Joint::kLEar},
  };
  return bones;
}

void render_figure(Image& image, const PoseSkeleton& skeleton,
                   const FigureStyle& style) {
  check_rgb(image.tensor, "render_figure");
  PoseSkeleton s = rescale_to_frame(skeleton, {image.width(), image.height()});

  auto torso_bone = [](Joint a, Joint b) {
    auto is_torso = [](Joint j) {
      return j == Joint::kNeck || j == Joint::kRShoulder ||
             j == Joint::kLShoulder || j == Joint::kRHip || j == Joint::kLHip;
    };
    return is_torso(a) && is_torso(b);
  };

  for (const auto& [a, b] : skeleton_bones()) {
    const Keypoint& ka = s.at(a);
    const Keypoint& kb = s.at(b);
    if (!ka.visible || !kb.visible) continue;
    const auto color = torso_bone(a, b) ? style.torso : style.limbs;
    draw_segment(image, ka.x, ka.y, kb.x, kb.y, style.thickness, color);
  }

  // Head disk sized from the visible face, falling back to neck distance.
  const Keypoint& nose = s.at(Joint::kNose);
  if (nose.visible) {
    double radius = 0.0;
    for (Joint j : {Joint::kREye, Joint::kLEye, Joint::kREar, Joint::kLEar}) {
      const Keypoint& k = s.at(j);
      if (!k.visible) continue;
      radius = std::max(radius, std::hypot(k.x - nose.x, k.y - nose.y));
    }
    if (radius == 0.0 && s.at(Joint::kNeck).visible) {
      const Keypoint& neck = s.at(Joint::kNeck);
      radius = 0.6 * std::hypot(neck.x - nose.x, neck.y - nose.y);
    }
    if (radius > 0.0) draw_disk(image, nose.x, nose.y, radius, style.head);
    for (Joint j : {Joint::kREye, Joint::kLEye}) {
      const Keypoint& k = s.at(j);
      if (k.visible) draw_disk(image, k.x, k.y, 1.5, {0.1f, 0.1f, 0.1f});
    }
  }
}

torch::Tensor to_unit_range(const torch::Tensor& pm1) {
  return (pm1 + 1.0) / 2.0;
}

torch::Tensor to_pm1_range(const torch::Tensor& unit) {
  return unit * 2.0 - 1.0;
}

}  // namespace scenegen
