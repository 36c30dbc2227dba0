#include "ernet/image.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <memory>
#include <string>

#ifdef ERNET_HAVE_PNG
#include <png.h>
#endif
#ifdef ERNET_HAVE_JPEG
#include <jpeglib.h>
#endif

namespace ernet {

Image make_image(Extent height, Extent width, float fill) { return Image({height, width, 3}, fill); }

std::vector<std::uint8_t> image_to_bytes(const Image& img) {
  std::vector<std::uint8_t> out(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) {
    const float v = std::clamp(img[i], 0.0f, 1.0f);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
  }
  return out;
}

Image image_from_bytes(Extent height, Extent width, std::span<const std::uint8_t> rgb) {
  Image img = make_image(height, width);
  if (rgb.size() != img.size()) throw FormatError("pixel buffer does not match image size");
  for (std::size_t i = 0; i < rgb.size(); ++i) img[i] = static_cast<float>(rgb[i]) / 255.0f;
  return img;
}

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("encode_ppm expects an (h, w, 3) image");
  const std::string header =
      "P6\n" + std::to_string(img.dim(1)) + " " + std::to_string(img.dim(0)) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  const auto px = image_to_bytes(img);
  out.insert(out.end(), px.begin(), px.end());
  return out;
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  const auto bytes = encode_ppm(img);
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path.string() + " for writing");
  os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!os) throw IoError("failed writing " + path.string());
}

namespace {

std::vector<std::uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(is), std::istreambuf_iterator<char>()};
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  std::size_t pos = 2;
  auto next_token = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    long v = 0;
    bool any = false;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos++] - '0');
      any = true;
    }
    if (!any) throw FormatError("malformed PNM header in " + where);
    return v;
  };
  const bool gray = bytes[1] == '5';
  const long w = next_token(), h = next_token(), maxval = next_token();
  if (w < 1 || h < 1 || maxval != 255) throw FormatError("unsupported PNM geometry or depth in " + where);
  ++pos;  // single whitespace before raster
  const std::size_t channels = gray ? 1 : 3;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (bytes.size() < pos + need) throw FormatError("truncated PNM raster in " + where);
  Image img = make_image(h, w);
  for (std::size_t i = 0; i < static_cast<std::size_t>(w * h); ++i)
    for (std::size_t c = 0; c < 3; ++c)
      img[i * 3 + c] = static_cast<float>(bytes[pos + i * channels + (gray ? 0 : c)]) / 255.0f;
  return img;
}

#ifdef ERNET_HAVE_PNG
Image decode_png(const std::filesystem::path& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str()))
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  image.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&image);
    throw FormatError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return image_from_bytes(image.height, image.width, buf);
}
#endif

#ifdef ERNET_HAVE_JPEG
Image decode_jpeg(const std::vector<std::uint8_t>& bytes, const std::string& where) {
  jpeg_decompress_struct cinfo{};
  jpeg_error_mgr jerr{};
  cinfo.err = jpeg_std_error(&jerr);
  jerr.error_exit = [](j_common_ptr info) {
    char msg[JMSG_LENGTH_MAX];
    (*info->err->format_message)(info, msg);
    throw FormatError(std::string("JPEG decode failed: ") + msg);
  };
  struct Guard {
    jpeg_decompress_struct* c;
    ~Guard() { jpeg_destroy_decompress(c); }
  };
  jpeg_create_decompress(&cinfo);
  Guard guard{&cinfo};
  jpeg_mem_src(&cinfo, bytes.data(), static_cast<unsigned long>(bytes.size()));
  if (jpeg_read_header(&cinfo, TRUE) != JPEG_HEADER_OK) throw FormatError("bad JPEG header in " + where);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  const Extent w = cinfo.output_width, h = cinfo.output_height;
  std::vector<std::uint8_t> buf(static_cast<std::size_t>(w * h * 3));
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = buf.data() + static_cast<std::size_t>(cinfo.output_scanline) * w * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  return image_from_bytes(h, w, buf);
}
#endif

}  // namespace

bool png_supported() {
#ifdef ERNET_HAVE_PNG
  return true;
#else
  return false;
#endif
}

bool jpeg_supported() {
#ifdef ERNET_HAVE_JPEG
  return true;
#else
  return false;
#endif
}

void write_png(const std::filesystem::path& path, const Image& img) {
#ifdef ERNET_HAVE_PNG
  if (img.rank() != 3 || img.dim(2) != 3) throw ShapeError("write_png expects an (h, w, 3) image");
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.dim(1));
  image.height = static_cast<png_uint_32>(img.dim(0));
  image.format = PNG_FORMAT_RGB;
  const auto px = image_to_bytes(img);
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, px.data(), 0, nullptr))
    throw IoError("cannot write PNG " + path.string());
#else
  (void)path;
  (void)img;
  throw IoError("PNG support not compiled in");
#endif
}

Image read_image(const std::filesystem::path& path) {
  const auto bytes = slurp(path);
  const std::string where = path.string();
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '6' || bytes[1] == '5')) return decode_pnm(bytes, where);
  if (bytes.size() >= 8 && bytes[0] == 0x89 && bytes[1] == 'P' && bytes[2] == 'N' && bytes[3] == 'G') {
#ifdef ERNET_HAVE_PNG
    return decode_png(path);
#else
    throw FormatError("PNG decoding not available for " + where);
#endif
  }
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8) {
#ifdef ERNET_HAVE_JPEG
    return decode_jpeg(bytes, where);
#else
    throw FormatError("JPEG decoding not available for " + where);
#endif
  }
  throw FormatError("unrecognised image format: " + where);
}

Tensor<float> resize_bilinear(const Tensor<float>& img, Extent out_h, Extent out_w, ResizeAlignment align) {
  if (img.rank() != 3) throw ShapeError("resize_bilinear expects an (h, w, c) tensor");
  if (out_h < 1 || out_w < 1) throw ArgumentError("resize_bilinear: output extents must be >= 1");
  const Extent h = img.dim(0), w = img.dim(1), c = img.dim(2);
  Tensor<float> out({out_h, out_w, c});

  auto source = [align](Extent i, Extent in, Extent out_n) {
    if (align == ResizeAlignment::corners) {
      return out_n == 1 ? 0.0 : static_cast<double>(i) * static_cast<double>(in - 1) / static_cast<double>(out_n - 1);
    }
    const double s = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out_n) - 0.5;
    return std::clamp(s, 0.0, static_cast<double>(in - 1));
  };

  for (Extent y = 0; y < out_h; ++y) {
    const double sy = source(y, h, out_h);
    const Extent y0 = std::min<Extent>(static_cast<Extent>(std::floor(sy)), h - 1);
    const Extent y1 = std::min<Extent>(y0 + 1, h - 1);
    const double fy = sy - static_cast<double>(y0);
    for (Extent x = 0; x < out_w; ++x) {
      const double sx = source(x, w, out_w);
      const Extent x0 = std::min<Extent>(static_cast<Extent>(std::floor(sx)), w - 1);
      const Extent x1 = std::min<Extent>(x0 + 1, w - 1);
      const double fx = sx - static_cast<double>(x0);
      const float* p00 = img.raw() + (y0 * w + x0) * c;
      const float* p01 = img.raw() + (y0 * w + x1) * c;
      const float* p10 = img.raw() + (y1 * w + x0) * c;
      const float* p11 = img.raw() + (y1 * w + x1) * c;
      float* dst = out.raw() + (y * out_w + x) * c;
      for (Extent ch = 0; ch < c; ++ch) {
        const double top = p00[ch] + (p01[ch] - p00[ch]) * fx;
        const double bottom = p10[ch] + (p11[ch] - p10[ch]) * fx;
        dst[ch] = static_cast<float>(top + (bottom - top) * fy);
      }
    }
  }
  return out;
}

Tensor<float> stack_images(const std::vector<Image>& images) {
  if (images.empty()) throw ArgumentError("stack_images: no images");
  const Shape s = images.front().shape();
  Tensor<float> out({static_cast<Extent>(images.size()), s[0], s[1], s[2]});
  float* dst = out.raw();
  for (const auto& im : images) {
    if (im.shape() != s) throw ShapeError("stack_images: images differ in shape");
    std::copy(im.raw(), im.raw() + im.size(), dst);
    dst += im.size();
  }
  return out;
}

}  // namespace ernet
