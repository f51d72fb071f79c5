#pragma once

#include <filesystem>

#include "stalltrace/image.hpp"

namespace stalltrace {

/// Interleaved 8-bit image: `pixels` is H x (W * channels).
struct RawImage {
  int channels = 1;
  ImageU8 pixels;

  [[nodiscard]] int width() const { return static_cast<int>(pixels.cols()) / channels; }
  [[nodiscard]] int height() const { return static_cast<int>(pixels.rows()); }
};

class ImageIoError : public Error {
 public:
  using Error::Error;
};

/// Reads binary PGM (P5), PPM (P6) or 8-bit PNG; dispatches on file content.
RawImage read_image(const std::filesystem::path& path);

/// Writes P5/P6 for .pgm/.ppm extensions and PNG for .png.
void write_image(const std::filesystem::path& path, const RawImage& img);
void write_gray(const std::filesystem::path& path, const ImageU8& gray);

}  // namespace stalltrace
