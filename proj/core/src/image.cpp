#include "schn/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>

#include "schn/errors.hpp"

namespace schn {

ImageBuffer read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + image.message);
  }
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + msg);
  }
  ImageBuffer out(static_cast<int>(image.height), static_cast<int>(image.width), 3);
  const std::size_t plane = out.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) out.values[c * plane + p] = pixels[p * 3 + c] / 255.0f;
  }
  return out;
}

namespace {
std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}
}  // namespace

void write_png(const ImageBuffer& img, const std::filesystem::path& path) {
  if (img.channels != 3) throw ConfigError("write_png expects a 3-channel image");
  std::vector<std::uint8_t> pixels(img.plane_size() * 3);
  const std::size_t plane = img.plane_size();
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < 3; ++c) pixels[p * 3 + c] = to_byte(img.values[c * plane + p]);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&image, path.c_str(), 0, pixels.data(), 0, nullptr)) {
    throw std::runtime_error("cannot write PNG " + path.string() + ": " + image.message);
  }
}

ImageBuffer clamp01(ImageBuffer image) {
  for (auto& v : image.values) v = std::clamp(v, 0.0f, 1.0f);
  return image;
}

ImageBuffer quantize8(const ImageBuffer& image) {
  ImageBuffer out = image;
  for (auto& v : out.values) v = to_byte(v) / 255.0f;
  return out;
}

ImageBuffer crop(const ImageBuffer& image, int top, int left, int height, int width) {
  if (top < 0 || left < 0 || height < 1 || width < 1 || top + height > image.height ||
      left + width > image.width) {
    throw ConfigError("crop window outside image");
  }
  ImageBuffer out(height, width, image.channels);
  for (int c = 0; c < image.channels; ++c)
    for (int y = 0; y < height; ++y)
      for (int x = 0; x < width; ++x) out.at(c, y, x) = image.at(c, top + y, left + x);
  return out;
}

ImageBuffer mod_crop(const ImageBuffer& image, int factor) {
  if (factor < 1) throw ConfigError("mod_crop factor must be >= 1");
  const int h = image.height - image.height % factor;
  const int w = image.width - image.width % factor;
  if (h == image.height && w == image.width) return image;
  return crop(image, 0, 0, h, w);
}

std::vector<std::filesystem::path> list_pngs(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) {
    throw ConfigError("not a directory: " + dir.string());
  }
  std::vector<std::filesystem::path> out;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
    if (ext == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

template <typename T>
Tensor<T> images_to_tensor(std::span<const ImageBuffer> images) {
  if (images.empty()) throw ConfigError("images_to_tensor on empty batch");
  const auto& first = images.front();
  std::vector<T> data;
  data.reserve(images.size() * first.size());
  for (const auto& img : images) {
    if (img.height != first.height || img.width != first.width ||
        img.channels != first.channels) {
      throw ConfigError("images in a batch must share dimensions");
    }
    data.insert(data.end(), img.values.begin(), img.values.end());
  }
  return Tensor<T>::from_vector({static_cast<std::int64_t>(images.size()), first.channels,
                                 first.height, first.width},
                                std::move(data));
}

template <typename T>
ImageBuffer tensor_to_image(const Tensor<T>& t, std::int64_t index) {
  if (t.rank() != 4 || index < 0 || index >= t.dim(0)) {
    throw ConfigError("tensor_to_image: bad tensor/index for shape " + to_string(t.shape()));
  }
  ImageBuffer out(static_cast<int>(t.dim(2)), static_cast<int>(t.dim(3)),
                  static_cast<int>(t.dim(1)));
  const auto n = out.size();
  const auto* src = t.data().data() + index * static_cast<std::int64_t>(n);
  for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<float>(src[i]);
  return out;
}

template Tensor<float> images_to_tensor<float>(std::span<const ImageBuffer>);
template Tensor<double> images_to_tensor<double>(std::span<const ImageBuffer>);
template ImageBuffer tensor_to_image<float>(const Tensor<float>&, std::int64_t);
template ImageBuffer tensor_to_image<double>(const Tensor<double>&, std::int64_t);

}  // namespace schn
