#include "h2iad/ddm.hpp"

#include "h2iad/error.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>
#include <vector>

namespace h2iad {

Eigen::MatrixXf DistanceMapSequence::frame(int t) const {
  Eigen::MatrixXf m(joints_, joints_);
  for (int i = 0; i < joints_; ++i)
    for (int j = 0; j < joints_; ++j) m(i, j) = at(t, i, j);
  return m;
}

DistanceMapSequence dynamic_distance_maps(const InteractionPair& pair) {
  pair.validate();
  const int T = pair.frames();
  const int D = pair.joints();
  const auto& x = pair.person_x.coords();
  const auto& y = pair.person_y.coords();
  PoseMatrix out(T, D * D);
  for (int t = 0; t < T; ++t)
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) {
        double sq = 0.0;
        for (int k = 0; k < 3; ++k) {
          const double d = static_cast<double>(x(t, 3 * i + k)) - y(t, 3 * j + k);
          sq += d * d;
        }
        out(t, i * D + j) = static_cast<float>(-std::sqrt(sq));
      }
  return DistanceMapSequence(std::move(out), D);
}

double displacement_statistic(std::span<const InteractionPair> samples) {
  if (samples.empty()) throw DataError("displacement statistic needs at least one sample");
  double total = 0.0;
  for (const auto& pair : samples) {
    pair.validate();
    const int T = pair.frames();
    const int D = pair.joints();
    double widest = 0.0;
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        for (int t = 0; t < T; ++t) {
          const double d = (pair.person_x.joint(t, i).cast<double>() -
                            pair.person_y.joint(t, j).cast<double>())
                               .norm();
          lo = std::min(lo, d);
          hi = std::max(hi, d);
        }
        widest = std::max(widest, hi - lo);
      }
    total += widest;
  }
  return total / static_cast<double>(samples.size());
}

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

void write_gray_png(const std::filesystem::path& path, int width, int height,
                    const std::vector<std::uint8_t>& pixels) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.string().c_str(), "wb"));
  if (!file) throw DataError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng initialization failed");
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw DataError("libpng failed writing '" + path.string() + "'");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8,
               PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (int r = 0; r < height; ++r)
    png_write_row(png, pixels.data() + static_cast<std::size_t>(r) * width);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace

void write_distance_map_pngs(const DistanceMapSequence& maps, const std::filesystem::path& dir,
                             const std::string& prefix, int cell) {
  if (cell < 1) throw DataError("png cell size must be positive");
  std::filesystem::create_directories(dir);
  const float most_negative = maps.flattened().minCoeff();
  const int D = maps.joints();
  const int side = D * cell;
  std::vector<std::uint8_t> pixels(static_cast<std::size_t>(side) * side);
  for (int t = 0; t < maps.frames(); ++t) {
    for (int i = 0; i < D; ++i)
      for (int j = 0; j < D; ++j) {
        const double v = most_negative < 0.0f ? maps.at(t, i, j) / most_negative : 0.0;
        const auto g = static_cast<std::uint8_t>(std::lround(255.0 * std::clamp(v, 0.0, 1.0)));
        for (int a = 0; a < cell; ++a)
          for (int b = 0; b < cell; ++b)
            pixels[static_cast<std::size_t>(i * cell + a) * side + (j * cell + b)] = g;
      }
    write_gray_png(dir / (prefix + "_" + std::to_string(t) + ".png"), side, side, pixels);
  }
}

}  // namespace h2iad
