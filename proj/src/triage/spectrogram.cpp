#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>

#include "replica/error.hpp"
#include "replica/melspec.hpp"
#include "replica/triage.hpp"

namespace replica::triage {

namespace {

// Dark-to-bright ramp; index 0 is the floor colour.
constexpr std::array<std::array<double, 3>, 5> kStops{{{0, 0, 4},
                                                       {81, 18, 124},
                                                       {183, 55, 121},
                                                       {252, 137, 97},
                                                       {252, 253, 191}}};

std::array<std::uint8_t, 3> colour(std::uint8_t level) {
  const double x = level / 255.0 * (kStops.size() - 1);
  const std::size_t i = std::min<std::size_t>(static_cast<std::size_t>(x), kStops.size() - 2);
  const double t = x - static_cast<double>(i);
  std::array<std::uint8_t, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) {
    out[c] = static_cast<std::uint8_t>(
        std::lround(kStops[i][c] + t * (kStops[i + 1][c] - kStops[i][c])));
  }
  return out;
}

}  // namespace

std::uint8_t SpectrogramImage::level(std::size_t row, std::size_t col) const {
  const double db = this->db[row * width + col];
  const double t = (db - kSpectrogramFloorDb) / -kSpectrogramFloorDb;
  return static_cast<std::uint8_t>(std::lround(std::clamp(t, 0.0, 1.0) * 255.0));
}

double spectrogram_row_hz(std::size_t row, std::size_t height) {
  const std::size_t bin = height - 1 - row;
  return static_cast<double>(bin) * kSampleRate / static_cast<double>(kSpectrogramFft);
}

SpectrogramImage render_spectrogram(const AudioClip& clip) {
  static const Stft stft(StftConfig{kSpectrogramFft, kSpectrogramHop, kSpectrogramFft, true});
  const ComplexSpectrogram spec = stft(clip.samples);

  SpectrogramImage img;
  img.width = spec.frames;
  img.height = spec.bins;
  img.db.assign(img.width * img.height, static_cast<float>(kSpectrogramFloorDb));
  double peak = 0.0;
  for (const auto& z : spec.data) peak = std::max(peak, std::abs(z));
  if (peak > 0.0) {
    for (std::size_t f = 0; f < spec.frames; ++f) {
      for (std::size_t k = 0; k < spec.bins; ++k) {
        const double mag = std::abs(spec.at(f, k));
        const double db = mag > 0.0 ? 20.0 * std::log10(mag / peak) : kSpectrogramFloorDb;
        const std::size_t row = spec.bins - 1 - k;
        img.db[row * img.width + f] = static_cast<float>(std::max(db, kSpectrogramFloorDb));
      }
    }
  }
  img.rgb.resize(img.width * img.height * 3);
  for (std::size_t r = 0; r < img.height; ++r) {
    for (std::size_t c = 0; c < img.width; ++c) {
      const auto rgb = colour(img.level(r, c));
      std::copy(rgb.begin(), rgb.end(), img.rgb.begin() + static_cast<std::ptrdiff_t>(3 * (r * img.width + c)));
    }
  }
  return img;
}

std::string encode_png(const SpectrogramImage& image) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (png == nullptr) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  if (info == nullptr) {
    png_destroy_write_struct(&png, nullptr);
    throw std::runtime_error("png_create_info_struct failed");
  }
  std::string out;
  std::vector<png_bytep> rows(image.height);
  for (std::size_t r = 0; r < image.height; ++r) {
    rows[r] = const_cast<png_bytep>(image.rgb.data() + r * image.width * 3);
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("PNG encoding failed");
  }
  png_set_write_fn(
      png, &out,
      [](png_structp p, png_bytep data, png_size_t len) {
        static_cast<std::string*>(png_get_io_ptr(p))->append(reinterpret_cast<char*>(data), len);
      },
      nullptr);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_set_rows(png, info, rows.data());
  png_write_png(png, info, PNG_TRANSFORM_IDENTITY, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

}  // namespace replica::triage
