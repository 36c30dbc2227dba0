#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "ernet/tensor.hpp"

namespace ernet {

/// RGB image as an (h, w, 3) float tensor with values in [0, 1].
using Image = Tensor<float>;

Image make_image(Extent height, Extent width, float fill = 0.0f);

/// Decodes PPM (P6/P5) always, PNG/JPEG when built with the codecs.
/// Grayscale sources are replicated to three channels.
Image read_image(const std::filesystem::path& path);

/// 8-bit quantisation: round(v · 255) after clamping to [0, 1].
std::vector<std::uint8_t> image_to_bytes(const Image& img);
Image image_from_bytes(Extent height, Extent width, std::span<const std::uint8_t> rgb);

/// Binary P6. The file bytes are fully determined by the image.
void write_ppm(const std::filesystem::path& path, const Image& img);
std::vector<std::uint8_t> encode_ppm(const Image& img);

bool png_supported();
bool jpeg_supported();
void write_png(const std::filesystem::path& path, const Image& img);

enum class ResizeAlignment {
  half_pixel,  // outer image edges aligned; output pixel centres map to (i + 0.5)·s − 0.5
  corners,     // first/last pixel centres aligned; output i maps to i·(in − 1)/(out − 1)
};

/// Bilinear resize of an (h, w, c) tensor; samples outside the grid clamp
/// to the border.
Tensor<float> resize_bilinear(const Tensor<float>& img, Extent out_h, Extent out_w,
                              ResizeAlignment align = ResizeAlignment::half_pixel);

/// Stacks (h, w, 3) images into a (batch, h, w, 3) tensor.
Tensor<float> stack_images(const std::vector<Image>& images);

}  // namespace ernet
