#include <png.h>

#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <memory>
#include <string>
#include <vector>

#include "musreg/io.hpp"

namespace musreg {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

FilePtr open_file(const fs::path& path, const char* mode) {
  FilePtr f(std::fopen(path.string().c_str(), mode));
  if (!f) {
    throw IoError(std::string("cannot open '") + path.string() + "' for " +
                  (mode[0] == 'r' ? "reading" : "writing"));
  }
  return f;
}

struct PngState {
  png_structp png = nullptr;
  png_infop info = nullptr;
  bool writing = false;
  std::string error;
  std::vector<png_byte> bytes;
  std::vector<png_bytep> rows;

  ~PngState() {
    if (!png) return;
    if (writing) {
      png_destroy_write_struct(&png, info ? &info : nullptr);
    } else {
      png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
    }
  }
};

void on_png_error(png_structp png, png_const_charp message) {
  auto* state = static_cast<PngState*>(png_get_error_ptr(png));
  state->error = message ? message : "libpng error";
  png_longjmp(png, 1);
}

void on_png_warning(png_structp, png_const_charp) {}

struct DecodedPng {
  int width = 0;
  int height = 0;
  int channels = 1;
  int bit_depth = 8;
  Vec2 spacing{1.0, 1.0};
  std::vector<std::uint16_t> samples;  // interleaved, raw bit-depth values
};

DecodedPng decode_png(const fs::path& path) {
  FilePtr file = open_file(path, "rb");
  png_byte signature[8] = {};
  if (std::fread(signature, 1, 8, file.get()) != 8 || png_sig_cmp(signature, 0, 8) != 0) {
    throw FormatError("'" + path.string() + "' is not a PNG file");
  }

  auto state = std::make_unique<PngState>();
  state->png = png_create_read_struct(PNG_LIBPNG_VER_STRING, state.get(), on_png_error,
                                      on_png_warning);
  if (!state->png) throw FormatError("libpng initialisation failed");
  state->info = png_create_info_struct(state->png);
  if (!state->info) throw FormatError("libpng initialisation failed");

  if (setjmp(png_jmpbuf(state->png))) {
    throw FormatError("'" + path.string() + "': " + state->error);
  }

  png_init_io(state->png, file.get());
  png_set_sig_bytes(state->png, 8);
  png_read_info(state->png, state->info);

  png_uint_32 width = 0;
  png_uint_32 height = 0;
  int bit_depth = 0;
  int color_type = 0;
  int interlace = 0;
  png_get_IHDR(state->png, state->info, &width, &height, &bit_depth, &color_type, &interlace,
               nullptr, nullptr);

  DecodedPng out;
  if (color_type == PNG_COLOR_TYPE_GRAY) {
    if (bit_depth != 8 && bit_depth != 16) {
      throw FormatError("'" + path.string() + "': unsupported grayscale bit depth " +
                        std::to_string(bit_depth));
    }
    out.channels = 1;
  } else if (color_type == PNG_COLOR_TYPE_RGB) {
    if (bit_depth != 8) {
      throw FormatError("'" + path.string() + "': unsupported RGB bit depth " +
                        std::to_string(bit_depth));
    }
    out.channels = 3;
  } else {
    throw FormatError("'" + path.string() + "': unsupported PNG color type " +
                      std::to_string(color_type));
  }
  out.width = static_cast<int>(width);
  out.height = static_cast<int>(height);
  out.bit_depth = bit_depth;

  png_uint_32 ppm_x = 0;
  png_uint_32 ppm_y = 0;
  int unit = 0;
  if (png_get_pHYs(state->png, state->info, &ppm_x, &ppm_y, &unit) && unit == PNG_RESOLUTION_METER &&
      ppm_x > 0 && ppm_y > 0) {
    out.spacing = {1000.0 / ppm_x, 1000.0 / ppm_y};
  }

  if (interlace != PNG_INTERLACE_NONE) png_set_interlace_handling(state->png);
  png_read_update_info(state->png, state->info);

  const std::size_t row_bytes = png_get_rowbytes(state->png, state->info);
  state->bytes.resize(row_bytes * height);
  state->rows.resize(height);
  for (png_uint_32 r = 0; r < height; ++r) state->rows[r] = state->bytes.data() + r * row_bytes;
  png_read_image(state->png, state->rows.data());
  png_read_end(state->png, nullptr);

  const std::size_t count = static_cast<std::size_t>(width) * height * out.channels;
  out.samples.resize(count);
  if (bit_depth == 8) {
    for (std::size_t i = 0; i < count; ++i) out.samples[i] = state->bytes[i];
  } else {
    for (std::size_t i = 0; i < count; ++i) {
      out.samples[i] =
          static_cast<std::uint16_t>((state->bytes[2 * i] << 8) | state->bytes[2 * i + 1]);
    }
  }
  return out;
}

void encode_png(const fs::path& path, int width, int height, int channels, int bit_depth,
                Vec2 spacing, const std::vector<std::uint16_t>& samples) {
  if (width <= 0 || height <= 0) throw ValidationError("cannot write an empty PNG");
  FilePtr file = open_file(path, "wb");

  auto state = std::make_unique<PngState>();
  state->writing = true;
  state->png = png_create_write_struct(PNG_LIBPNG_VER_STRING, state.get(), on_png_error,
                                       on_png_warning);
  if (!state->png) throw IoError("libpng initialisation failed");
  state->info = png_create_info_struct(state->png);
  if (!state->info) throw IoError("libpng initialisation failed");

  const std::size_t row_bytes =
      static_cast<std::size_t>(width) * channels * (bit_depth == 16 ? 2 : 1);
  state->bytes.resize(row_bytes * height);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (bit_depth == 16) {
      state->bytes[2 * i] = static_cast<png_byte>(samples[i] >> 8);
      state->bytes[2 * i + 1] = static_cast<png_byte>(samples[i] & 0xff);
    } else {
      state->bytes[i] = static_cast<png_byte>(samples[i]);
    }
  }
  state->rows.resize(height);
  for (int r = 0; r < height; ++r) state->rows[r] = state->bytes.data() + r * row_bytes;

  if (setjmp(png_jmpbuf(state->png))) {
    throw IoError("'" + path.string() + "': " + state->error);
  }

  png_init_io(state->png, file.get());
  png_set_IHDR(state->png, state->info, static_cast<png_uint_32>(width),
               static_cast<png_uint_32>(height), bit_depth,
               channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_pHYs(state->png, state->info,
               static_cast<png_uint_32>(std::lround(1000.0 / spacing.x)),
               static_cast<png_uint_32>(std::lround(1000.0 / spacing.y)), PNG_RESOLUTION_METER);
  png_write_info(state->png, state->info);
  png_write_image(state->png, state->rows.data());
  png_write_end(state->png, nullptr);
}

std::uint16_t quantize(double v, int max_value) {
  if (!(v > 0.0)) return 0;
  if (v >= 1.0) return static_cast<std::uint16_t>(max_value);
  return static_cast<std::uint16_t>(std::lround(v * max_value));
}

}  // namespace

Image2D load_image(const fs::path& path) {
  const DecodedPng png = decode_png(path);
  Image2D image(png.width, png.height, png.channels, png.spacing);
  const double scale = png.bit_depth == 16 ? 65535.0 : 255.0;
  auto values = image.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = png.samples[i] / scale;
  return image;
}

LabelMap2D load_labels(const fs::path& path) {
  const DecodedPng png = decode_png(path);
  if (png.channels != 1 || png.bit_depth != 8) {
    throw FormatError("'" + path.string() + "': label maps must be 8-bit grayscale");
  }
  LabelMap2D labels(png.width, png.height, png.spacing);
  auto values = labels.values();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto label = label_from_palette(static_cast<std::uint8_t>(png.samples[i]));
    if (!label) {
      throw ValidationError("'" + path.string() + "': pixel value " +
                            std::to_string(png.samples[i]) + " is not a declared label code");
    }
    values[i] = *label;
  }
  return labels;
}

Mask2D load_mask(const fs::path& path) {
  const DecodedPng png = decode_png(path);
  if (png.channels != 1) {
    throw FormatError("'" + path.string() + "': masks must be grayscale");
  }
  Mask2D mask(png.width, png.height, png.spacing);
  auto values = mask.values();
  for (std::size_t i = 0; i < values.size(); ++i) values[i] = png.samples[i] != 0 ? 1 : 0;
  return mask;
}

void save_image(const Image2D& image, const fs::path& path, int bit_depth) {
  if (bit_depth != 8 && bit_depth != 16) throw ValidationError("bit depth must be 8 or 16");
  if (image.channels() == 3) bit_depth = 8;
  const int max_value = bit_depth == 16 ? 65535 : 255;
  std::vector<std::uint16_t> samples;
  samples.reserve(image.values().size());
  for (double v : image.values()) samples.push_back(quantize(v, max_value));
  encode_png(path, image.width(), image.height(), image.channels(), bit_depth, image.spacing(),
             samples);
}

void save_labels(const LabelMap2D& labels, const fs::path& path) {
  std::vector<std::uint16_t> samples;
  samples.reserve(labels.size());
  for (Label l : labels.values()) samples.push_back(label_palette_value(l));
  encode_png(path, labels.width(), labels.height(), 1, 8, labels.spacing(), samples);
}

void save_mask(const Mask2D& mask, const fs::path& path) {
  std::vector<std::uint16_t> samples;
  samples.reserve(mask.size());
  for (auto v : mask.values()) samples.push_back(v ? 255 : 0);
  encode_png(path, mask.width(), mask.height(), 1, 8, mask.spacing(), samples);
}

}  // namespace musreg
