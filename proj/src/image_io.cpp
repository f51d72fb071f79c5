#include "stalltrace/image_io.hpp"

#include <cctype>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <vector>

#include <png.h>

namespace stalltrace {
namespace {

bool has_png_signature(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  unsigned char sig[8] = {};
  in.read(reinterpret_cast<char*>(sig), 8);
  return in.gcount() == 8 && png_sig_cmp(sig, 0, 8) == 0;
}

// Skips whitespace and '#' comments in a netpbm header.
int read_pnm_int(std::istream& in, const std::filesystem::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int v = -1;
  if (!(in >> v) || v < 0) throw ImageIoError("malformed netpbm header in " + path.string());
  return v;
}

RawImage read_pnm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageIoError("cannot open " + path.string());
  char magic[2] = {};
  in.read(magic, 2);
  if (magic[0] != 'P' || (magic[1] != '5' && magic[1] != '6')) {
    throw ImageIoError("unsupported image format in " + path.string() + " (expected P5/P6 or PNG)");
  }
  const int channels = magic[1] == '5' ? 1 : 3;
  const int w = read_pnm_int(in, path);
  const int h = read_pnm_int(in, path);
  const int maxval = read_pnm_int(in, path);
  if (maxval != 255) throw ImageIoError("only 8-bit netpbm supported: " + path.string());
  in.get();  // single whitespace before raster
  RawImage img{channels, ImageU8(h, w * channels)};
  in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.pixels.size())) {
    throw ImageIoError("truncated raster in " + path.string());
  }
  return img;
}

struct PngReadGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngReadGuard() { png_destroy_read_struct(&png, info ? &info : nullptr, nullptr); }
};

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};

RawImage read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw ImageIoError("cannot open " + path.string());
  PngReadGuard g;
  g.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!g.png) throw ImageIoError("libpng init failed");
  g.info = png_create_info_struct(g.png);
  if (!g.info) throw ImageIoError("libpng init failed");
  if (setjmp(png_jmpbuf(g.png))) throw ImageIoError("undecodable PNG " + path.string());
  png_init_io(g.png, fp.get());
  png_read_info(g.png, g.info);
  png_set_strip_16(g.png);
  png_set_strip_alpha(g.png);
  png_set_palette_to_rgb(g.png);
  png_set_expand_gray_1_2_4_to_8(g.png);
  png_read_update_info(g.png, g.info);
  const int w = static_cast<int>(png_get_image_width(g.png, g.info));
  const int h = static_cast<int>(png_get_image_height(g.png, g.info));
  const int channels = png_get_channels(g.png, g.info);
  if (channels != 1 && channels != 3) throw ImageIoError("unsupported PNG channel count in " + path.string());
  RawImage img{channels, ImageU8(h, w * channels)};
  std::vector<png_bytep> rows(static_cast<std::size_t>(h));
  for (int y = 0; y < h; ++y) rows[static_cast<std::size_t>(y)] = img.pixels.row(y).data();
  png_read_image(g.png, rows.data());
  png_read_end(g.png, nullptr);
  return img;
}

struct PngWriteGuard {
  png_structp png = nullptr;
  png_infop info = nullptr;
  ~PngWriteGuard() { png_destroy_write_struct(&png, info ? &info : nullptr); }
};

void write_png(const std::filesystem::path& path, const RawImage& img) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "wb"));
  if (!fp) throw ImageIoError("cannot write " + path.string());
  PngWriteGuard g;
  g.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  g.info = png_create_info_struct(g.png);
  if (!g.png || !g.info) throw ImageIoError("libpng init failed");
  if (setjmp(png_jmpbuf(g.png))) throw ImageIoError("PNG encode failed for " + path.string());
  png_init_io(g.png, fp.get());
  png_set_IHDR(g.png, g.info, static_cast<png_uint_32>(img.width()), static_cast<png_uint_32>(img.height()), 8,
               img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(g.png, g.info);
  for (int y = 0; y < img.height(); ++y) {
    png_write_row(g.png, const_cast<png_bytep>(img.pixels.row(y).data()));
  }
  png_write_end(g.png, nullptr);
}

}  // namespace

RawImage read_image(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ImageIoError("missing image file " + path.string());
  return has_png_signature(path) ? read_png(path) : read_pnm(path);
}

void write_image(const std::filesystem::path& path, const RawImage& img) {
  if (img.channels != 1 && img.channels != 3) throw ImageIoError("write_image: channels must be 1 or 3");
  if (path.extension() == ".png") {
    write_png(path, img);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageIoError("cannot write " + path.string());
  out << (img.channels == 1 ? "P5\n" : "P6\n") << img.width() << ' ' << img.height() << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

void write_gray(const std::filesystem::path& path, const ImageU8& gray) { write_image(path, RawImage{1, gray}); }

}  // namespace stalltrace
