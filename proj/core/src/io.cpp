// SPDX-License-Identifier: Apache-2.0

#include "scenemem/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <sstream>

#include <png.h>

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

namespace scenemem {

namespace {

template <typename T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw FormatError("unexpected end of stream");
  return v;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  return out;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  return in;
}

uint8_t to_byte(float v) {
  return static_cast<uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

void png_write_to_string(png_structp png, png_bytep data, png_size_t length) {
  auto* buf = static_cast<std::string*>(png_get_io_ptr(png));
  buf->append(reinterpret_cast<const char*>(data), length);
}

void png_flush_noop(png_structp) {}

std::string encode_png_rows(int width, int height, int color_type, int bit_depth,
                            const std::vector<std::vector<uint8_t>>& rows) {
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  if (!png) throw std::runtime_error("png_create_write_struct failed");
  png_infop info = png_create_info_struct(png);
  std::string out;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw std::runtime_error("libpng: encoding failed");
  }
  png_set_write_fn(png, &out, png_write_to_string, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), bit_depth,
               color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  for (const auto& row : rows) {
    png_write_row(png, const_cast<png_bytep>(row.data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
  auto out = open_out(path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

std::vector<uint8_t> read_png_raw(const std::filesystem::path& path, png_uint_32 format, int& w, int& h) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.string().c_str())) {
    throw FormatError("cannot read PNG " + path.string() + ": " + img.message);
  }
  img.format = format;
  std::vector<uint8_t> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    png_image_free(&img);
    throw FormatError("cannot decode PNG " + path.string() + ": " + img.message);
  }
  w = static_cast<int>(img.width);
  h = static_cast<int>(img.height);
  return buf;
}

}  // namespace

void write_spcl(std::ostream& out, const PointCloud& cloud) {
  cloud.validate();
  out.write("SPCL", 4);
  put<uint32_t>(out, kSpclVersion);
  put<uint64_t>(out, cloud.size());
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Color& c = cloud.colors[i];
    const float rec[6] = {static_cast<float>(p.x()), static_cast<float>(p.y()), static_cast<float>(p.z()),
                          c.x(), c.y(), c.z()};
    out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
  }
}

PointCloud read_spcl(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "SPCL", 4) != 0) throw FormatError("SPCL: bad magic");
  const auto version = get<uint32_t>(in);
  if (version != kSpclVersion) throw FormatError("SPCL: unsupported version " + std::to_string(version));
  const auto count = get<uint64_t>(in);
  PointCloud cloud;
  // Guard against absurd counts from a corrupt header before reserving.
  if (count > (uint64_t{1} << 34)) throw FormatError("SPCL: implausible point count");
  cloud.reserve(count);
  for (uint64_t i = 0; i < count; ++i) {
    float rec[6];
    in.read(reinterpret_cast<char*>(rec), sizeof(rec));
    if (!in) throw FormatError("SPCL: truncated point data");
    cloud.push_back(Vec3(rec[0], rec[1], rec[2]), Color(rec[3], rec[4], rec[5]));
  }
  return cloud;
}

void write_spcl(const std::filesystem::path& path, const PointCloud& cloud) {
  auto out = open_out(path);
  write_spcl(out, cloud);
}

PointCloud read_spcl(const std::filesystem::path& path) {
  auto in = open_in(path);
  return read_spcl(in);
}

std::string encode_spcl(const PointCloud& cloud) {
  std::ostringstream out(std::ios::binary);
  write_spcl(out, cloud);
  return out.str();
}

void write_ply(const std::filesystem::path& path, const PointCloud& cloud) {
  cloud.validate();
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
  out << "ply\nformat ascii 1.0\nelement vertex " << cloud.size()
      << "\nproperty float x\nproperty float y\nproperty float z\n"
         "property uchar red\nproperty uchar green\nproperty uchar blue\nend_header\n";
  out.precision(9);
  for (std::size_t i = 0; i < cloud.size(); ++i) {
    const Vec3& p = cloud.positions[i];
    const Color& c = cloud.colors[i];
    out << static_cast<float>(p.x()) << ' ' << static_cast<float>(p.y()) << ' ' << static_cast<float>(p.z())
        << ' ' << int(to_byte(c.x())) << ' ' << int(to_byte(c.y())) << ' ' << int(to_byte(c.z())) << '\n';
  }
}

PointCloud read_ply(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open for reading: " + path.string());
  std::string line;
  std::getline(in, line);
  if (line != "ply") throw FormatError("PLY: missing magic");
  std::size_t count = 0;
  std::vector<std::string> props;
  bool ascii = false;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    if (word == "format") {
      std::string kind;
      ls >> kind;
      ascii = kind == "ascii";
    } else if (word == "element") {
      std::string name;
      ls >> name;
      if (name == "vertex") ls >> count;
    } else if (word == "property") {
      std::string type, name;
      ls >> type >> name;
      props.push_back(name);
    } else if (word == "end_header") {
      break;
    }
  }
  if (!ascii) throw FormatError("PLY: only ascii format is supported");
  auto find = [&](const std::string& n) -> int {
    auto it = std::find(props.begin(), props.end(), n);
    return it == props.end() ? -1 : static_cast<int>(it - props.begin());
  };
  const int ix = find("x"), iy = find("y"), iz = find("z");
  const int ir = find("red"), ig = find("green"), ib = find("blue");
  if (ix < 0 || iy < 0 || iz < 0) throw FormatError("PLY: missing x/y/z properties");
  PointCloud cloud;
  cloud.reserve(count);
  std::vector<double> vals(props.size());
  for (std::size_t i = 0; i < count; ++i) {
    for (double& v : vals) {
      if (!(in >> v)) throw FormatError("PLY: truncated vertex data");
    }
    Color c(0.0f, 0.0f, 0.0f);
    if (ir >= 0 && ig >= 0 && ib >= 0) {
      c = Color(static_cast<float>(vals[ir] / 255.0), static_cast<float>(vals[ig] / 255.0),
                static_cast<float>(vals[ib] / 255.0));
    }
    cloud.push_back(Vec3(vals[ix], vals[iy], vals[iz]), c);
  }
  return cloud;
}

std::string encode_png(const Image& image) {
  if (image.channels != 1 && image.channels != 3) {
    throw std::invalid_argument("encode_png: expected 1 or 3 channels");
  }
  std::vector<std::vector<uint8_t>> rows(image.height, std::vector<uint8_t>(image.width * image.channels));
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      for (int c = 0; c < image.channels; ++c) {
        rows[y][x * image.channels + c] = to_byte(image.at(x, y, c));
      }
    }
  }
  return encode_png_rows(image.width, image.height,
                         image.channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY, 8, rows);
}

void write_png(const std::filesystem::path& path, const Image& image) { write_bytes(path, encode_png(image)); }

Image read_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_RGB, w, h);
  Image img(w, h, 3);
  for (std::size_t i = 0; i < buf.size(); ++i) img.data[i] = buf[i] / 255.0f;
  return img;
}

void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  const int stride = (mask.width + 7) / 8;
  std::vector<std::vector<uint8_t>> rows(mask.height, std::vector<uint8_t>(stride, 0));
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(x, y)) rows[y][x / 8] |= static_cast<uint8_t>(0x80u >> (x % 8));
    }
  }
  write_bytes(path, encode_png_rows(mask.width, mask.height, PNG_COLOR_TYPE_GRAY, 1, rows));
}

Mask read_mask_png(const std::filesystem::path& path) {
  int w = 0, h = 0;
  const auto buf = read_png_raw(path, PNG_FORMAT_GRAY, w, h);
  Mask m(w, h);
  for (std::size_t i = 0; i < buf.size(); ++i) m.data[i] = buf[i] >= 128 ? 1 : 0;
  return m;
}

void write_npy(const std::filesystem::path& path, const std::vector<std::size_t>& shape,
               const std::vector<float>& values) {
  std::size_t n = 1;
  for (std::size_t s : shape) n *= s;
  if (n != values.size()) throw std::invalid_argument("write_npy: shape does not match value count");
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    header += std::to_string(shape[i]);
    if (shape.size() == 1 || i + 1 < shape.size()) header += ",";
    if (i + 1 < shape.size()) header += " ";
  }
  header += "), }";
  const std::size_t preamble = 10;
  std::size_t total = preamble + header.size() + 1;
  header.append((64 - total % 64) % 64, ' ');
  header += '\n';
  auto out = open_out(path);
  out.write("\x93NUMPY", 6);
  put<uint8_t>(out, 1);
  put<uint8_t>(out, 0);
  put<uint16_t>(out, static_cast<uint16_t>(header.size()));
  out.write(header.data(), static_cast<std::streamsize>(header.size()));
  out.write(reinterpret_cast<const char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
}

void write_npy(const std::filesystem::path& path, const Image& image) {
  write_npy(path,
            {static_cast<std::size_t>(image.height), static_cast<std::size_t>(image.width),
             static_cast<std::size_t>(image.channels)},
            image.data);
}

NpyArray read_npy(const std::filesystem::path& path) {
  auto in = open_in(path);
  char magic[6];
  in.read(magic, 6);
  if (!in || std::memcmp(magic, "\x93NUMPY", 6) != 0) throw FormatError("NPY: bad magic");
  const auto major = get<uint8_t>(in);
  get<uint8_t>(in);
  if (major != 1) throw FormatError("NPY: unsupported version");
  const auto hlen = get<uint16_t>(in);
  std::string header(hlen, '\0');
  in.read(header.data(), hlen);
  if (!in) throw FormatError("NPY: truncated header");
  const bool f4 = header.find("'<f4'") != std::string::npos;
  const bool u1 = header.find("'|u1'") != std::string::npos;
  if (!f4 && !u1) throw FormatError("NPY: unsupported dtype");
  if (header.find("'fortran_order': False") == std::string::npos) throw FormatError("NPY: fortran order");
  const auto lp = header.find('('), rp = header.find(')');
  if (lp == std::string::npos || rp == std::string::npos) throw FormatError("NPY: missing shape");
  NpyArray arr;
  std::istringstream ss(header.substr(lp + 1, rp - lp - 1));
  std::string tok;
  std::size_t n = 1;
  while (std::getline(ss, tok, ',')) {
    if (tok.find_first_not_of(' ') == std::string::npos) continue;
    arr.shape.push_back(std::stoull(tok));
    n *= arr.shape.back();
  }
  arr.values.resize(n);
  if (f4) {
    in.read(reinterpret_cast<char*>(arr.values.data()), static_cast<std::streamsize>(n * sizeof(float)));
  } else {
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    for (std::size_t i = 0; i < n; ++i) arr.values[i] = raw[i];
  }
  if (!in) throw FormatError("NPY: truncated data");
  return arr;
}

}  // namespace scenemem
