#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include "schn/tensor.hpp"

namespace schn {

// Planar (CHW) floating-point image. Values live in [0,1] at I/O boundaries
// but are not clamped while inside a processing pipeline.
struct ImageBuffer {
  int height = 0;
  int width = 0;
  int channels = 3;
  std::vector<float> values;

  ImageBuffer() = default;
  ImageBuffer(int h, int w, int c = 3, float fill = 0.0f)
      : height(h), width(w), channels(c), values(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t plane_size() const { return static_cast<std::size_t>(height) * width; }
  std::size_t size() const { return values.size(); }
  bool empty() const { return values.empty(); }

  float& at(int c, int y, int x) { return values[(c * plane_size()) + static_cast<std::size_t>(y) * width + x]; }
  float at(int c, int y, int x) const { return values[(c * plane_size()) + static_cast<std::size_t>(y) * width + x]; }

  std::span<float> plane(int c) { return {values.data() + c * plane_size(), plane_size()}; }
  std::span<const float> plane(int c) const { return {values.data() + c * plane_size(), plane_size()}; }

  friend bool operator==(const ImageBuffer&, const ImageBuffer&) = default;
};

// 8-bit RGB PNG; values map to v/255.
ImageBuffer read_png(const std::filesystem::path& path);
// Clamps to [0,1], rounds to 8 bits. Encoding is deterministic.
void write_png(const ImageBuffer& image, const std::filesystem::path& path);

ImageBuffer clamp01(ImageBuffer image);
// Clamp and round to the 8-bit grid, i.e. what a write/read round trip yields.
ImageBuffer quantize8(const ImageBuffer& image);

// Crops to the largest size divisible by factor (top-left anchored).
ImageBuffer mod_crop(const ImageBuffer& image, int factor);
ImageBuffer crop(const ImageBuffer& image, int top, int left, int height, int width);

// PNG files directly inside dir, sorted by file name.
std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir);

template <typename T>
Tensor<T> images_to_tensor(std::span<const ImageBuffer> images);

template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t, std::int64_t index = 0);

}  // namespace schn
