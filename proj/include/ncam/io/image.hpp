#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace ncam {

/// Interleaved image, rows top to bottom.
template <class P>
struct Image {
  int width = 0;
  int height = 0;
  int channels = 3;
  std::vector<P> data;

  Image() = default;
  Image(int w, int h, int c = 3, P fill = P{}) : width(w), height(h), channels(c) {
    if (w < 0 || h < 0 || c < 1) throw std::invalid_argument("Image: bad dimensions");
    data.assign(static_cast<std::size_t>(w) * h * c, fill);
  }

  std::size_t pixels() const { return static_cast<std::size_t>(width) * height; }

  P& at(int x, int y, int c) { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }
  const P& at(int x, int y, int c) const { return data[(static_cast<std::size_t>(y) * width + x) * channels + c]; }

  bool same_shape(const Image& o) const { return width == o.width && height == o.height && channels == o.channels; }

  bool operator==(const Image&) const = default;
};

using ImageF = Image<float>;
using Image8 = Image<std::uint8_t>;

/// Per-pixel (u, v) displacement in pixels.
struct FlowField {
  int width = 0;
  int height = 0;
  std::vector<float> uv;  // interleaved, rows top to bottom

  FlowField() = default;
  FlowField(int w, int h, float u = 0.f, float v = 0.f) : width(w), height(h) {
    uv.resize(static_cast<std::size_t>(w) * h * 2);
    for (std::size_t k = 0; k < uv.size(); k += 2) {
      uv[k] = u;
      uv[k + 1] = v;
    }
  }

  float u(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2]; }
  float v(int x, int y) const { return uv[(static_cast<std::size_t>(y) * width + x) * 2 + 1]; }

  bool operator==(const FlowField&) const = default;
};

/// round(c * 255), half rounded up, after clipping to [0, 1].
inline std::uint8_t quantize(double c) {
  const double clipped = std::fmin(1.0, std::fmax(0.0, c));
  return static_cast<std::uint8_t>(std::floor(clipped * 255.0 + 0.5));
}

inline Image8 quantize(const ImageF& img) {
  Image8 out(img.width, img.height, img.channels);
  for (std::size_t k = 0; k < img.data.size(); ++k) out.data[k] = quantize(img.data[k]);
  return out;
}

inline ImageF to_real(const Image8& img) {
  ImageF out(img.width, img.height, img.channels);
  for (std::size_t k = 0; k < img.data.size(); ++k) out.data[k] = static_cast<float>(img.data[k]) / 255.0f;
  return out;
}

}  // namespace ncam
