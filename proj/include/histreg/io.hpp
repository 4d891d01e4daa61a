#ifndef HISTREG_IO_HPP
#define HISTREG_IO_HPP

#include <png.h>

#include <algorithm>
#include <bit>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <variant>
#include <vector>

#include "histreg/core.hpp"
#include "histreg/preprocess.hpp"

namespace histreg {

// ---------------------------------------------------------------------------
// Raw file access

inline std::vector<std::uint8_t> read_file_bytes(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw IoError("cannot open file: " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad())
    throw IoError("read failed: " + path);
  return bytes;
}

inline std::string read_file_text(const std::string& path)
{
  const auto bytes = read_file_bytes(path);
  return std::string(bytes.begin(), bytes.end());
}

/// Write to a sibling temporary and rename over the target.
inline void atomic_write(const std::string& path, std::string_view contents)
{
  namespace fs = std::filesystem;
  const fs::path target(path);
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out)
      throw IoError("cannot open for writing: " + tmp.string());
    out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    out.flush();
    if (!out)
      throw IoError("write failed: " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  if (ec)
  {
    fs::remove(tmp, ec);
    throw IoError("cannot rename into place: " + path);
  }
}

inline void atomic_write(const std::string& path, const std::vector<std::uint8_t>& bytes)
{
  atomic_write(path, std::string_view(reinterpret_cast<const char*>(bytes.data()), bytes.size()));
}

// ---------------------------------------------------------------------------
// Number formatting / parsing

/// Shortest form that round-trips a double exactly (17 significant digits).
inline std::string format_exact(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string format_fixed6(double v)
{
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

inline std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos)
    return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

inline double parse_double(std::string_view text, const std::string& what)
{
  const std::string s = trim(text);
  double v = 0.0;
  const char* first = s.data();
  const char* last = s.data() + s.size();
  if (!s.empty() && *first == '+')
    ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (s.empty() || ec != std::errc() || ptr != last || !std::isfinite(v))
    throw FormatError("non-numeric value in " + what + ": '" + s + "'");
  return v;
}

inline std::vector<std::string> split(std::string_view s, char sep)
{
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true)
  {
    const auto pos = s.find(sep, start);
    out.emplace_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
    if (pos == std::string_view::npos)
      break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string> split_lines(const std::string& text)
{
  std::vector<std::string> lines;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line))
  {
    if (!line.empty() && line.back() == '\r')
      line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// ---------------------------------------------------------------------------
// Images

namespace detail {

inline InputImage decode_pnm(const std::vector<std::uint8_t>& bytes, const std::string& path)
{
  std::size_t pos = 2;
  auto skip_space = [&] {
    while (pos < bytes.size())
    {
      if (bytes[pos] == '#')
        while (pos < bytes.size() && bytes[pos] != '\n')
          ++pos;
      else if (std::isspace(bytes[pos]))
        ++pos;
      else
        break;
    }
  };
  auto read_uint = [&]() -> long {
    skip_space();
    if (pos >= bytes.size() || !std::isdigit(bytes[pos]))
      throw FormatError("corrupt image header: " + path);
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos]))
    {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 30))
        throw FormatError("corrupt image header: " + path);
      ++pos;
    }
    return v;
  };
  const bool color = bytes[1] == '6';
  const long w = read_uint(), h = read_uint(), maxval = read_uint();
  if (pos >= bytes.size() || !std::isspace(bytes[pos]))
    throw FormatError("corrupt image header: " + path);
  ++pos;
  if (w < 1 || h < 1 || maxval < 1)
    throw FormatError("corrupt image header: " + path);
  if (maxval > 255)
    throw FormatError("unsupported bit depth (more than 8 bits per channel): " + path);
  const std::size_t channels = color ? 3 : 1;
  const std::size_t need = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * channels;
  if (bytes.size() - pos < need)
    throw FormatError("corrupt image (truncated pixel data): " + path);

  auto rescale = [&](std::uint8_t v) -> std::uint8_t {
    if (maxval == 255)
      return v;
    return static_cast<std::uint8_t>(std::lround(std::min<long>(v, maxval) * 255.0 / maxval));
  };
  if (color)
  {
    RgbImage img(static_cast<int>(w), static_cast<int>(h));
    for (std::size_t i = 0; i < need; ++i)
      img.data()[i] = rescale(bytes[pos + i]);
    return img;
  }
  ScalarImage img(static_cast<int>(w), static_cast<int>(h));
  for (std::size_t i = 0; i < need; ++i)
    img.data()[i] = rescale(bytes[pos + i]) / 255.0;
  return img;
}

inline InputImage decode_png(const std::vector<std::uint8_t>& bytes, const std::string& path)
{
  // IHDR: signature(8) length(4) type(4) width(4) height(4) depth(1) color(1)
  if (bytes.size() < 33 || std::memcmp(bytes.data() + 12, "IHDR", 4) != 0)
    throw FormatError("corrupt image header: " + path);
  const int depth = bytes[24];
  const int color_type = bytes[25];
  if (depth > 8)
    throw FormatError("unsupported bit depth (more than 8 bits per channel): " + path);

  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size()))
    throw FormatError("corrupt image: " + path + " (" + image.message + ")");
  const bool gray = (color_type & PNG_COLOR_MASK_COLOR) == 0;
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  std::vector<std::uint8_t> buf(PNG_IMAGE_SIZE(image));
  // Alpha is composited onto white, the slide background.
  png_color white{255, 255, 255};
  if (!png_image_finish_read(&image, &white, buf.data(), 0, nullptr))
  {
    png_image_free(&image);
    throw FormatError("corrupt image: " + path + " (" + image.message + ")");
  }
  const int w = static_cast<int>(image.width), h = static_cast<int>(image.height);
  if (gray)
  {
    ScalarImage img(w, h);
    for (std::size_t i = 0; i < img.size(); ++i)
      img.data()[i] = buf[i] / 255.0;
    return img;
  }
  return RgbImage(w, h, std::move(buf));
}

inline std::uint8_t quantize(double v)
{
  const double c = std::clamp(v, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

} // namespace detail

/**
 * Decode PNG or binary PGM/PPM. Single-channel sources become a ScalarImage
 * in [0,1]; color sources become an RgbImage.
 */
inline InputImage read_image(const std::string& path)
{
  const auto bytes = read_file_bytes(path);
  static constexpr std::uint8_t png_sig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0)
    return detail::decode_png(bytes, path);
  if (bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6'))
    return detail::decode_pnm(bytes, path);
  if (bytes.size() < 2)
    throw FormatError("corrupt image: " + path);
  throw FormatError("unsupported image format (expected PNG, binary PGM or PPM): " + path);
}

inline ScalarImage read_scalar_image(const std::string& path)
{
  InputImage img = read_image(path);
  if (auto* s = std::get_if<ScalarImage>(&img))
    return std::move(*s);
  throw FormatError("expected a single-channel image: " + path);
}

/// Round to the nearest 8-bit level, as stored by write_image.
inline ScalarImage quantize_8bit(const ScalarImage& img)
{
  ScalarImage out(img.width(), img.height());
  for (std::size_t i = 0; i < img.size(); ++i)
    out.data()[i] = detail::quantize(img.data()[i]) / 255.0;
  return out;
}

inline std::vector<std::uint8_t> encode_pgm(const ScalarImage& img)
{
  const std::string header = "P5\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  for (double v : img.data())
    out.push_back(detail::quantize(v));
  return out;
}

inline std::vector<std::uint8_t> encode_ppm(const RgbImage& img)
{
  const std::string header = "P6\n" + std::to_string(img.width()) + " " + std::to_string(img.height()) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data().begin(), img.data().end());
  return out;
}

inline std::vector<std::uint8_t> encode_png(const std::uint8_t* pixels, int w, int h, bool gray)
{
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&image, nullptr, &size, 0, pixels, 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&image, out.data(), &size, 0, pixels, 0, nullptr))
    throw IoError(std::string("png encode failed: ") + image.message);
  out.resize(size);
  return out;
}

inline bool has_extension(const std::string& path, std::string_view ext)
{
  std::string e = std::filesystem::path(path).extension().string();
  for (char& c : e)
    c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return e == ext;
}

/// PNG when the path ends in .png, binary PGM otherwise; values quantized to 8 bits.
inline void write_image(const std::string& path, const ScalarImage& img)
{
  if (has_extension(path, ".png"))
  {
    std::vector<std::uint8_t> px(img.size());
    for (std::size_t i = 0; i < img.size(); ++i)
      px[i] = detail::quantize(img.data()[i]);
    atomic_write(path, encode_png(px.data(), img.width(), img.height(), true));
  }
  else
    atomic_write(path, encode_pgm(img));
}

inline void write_image(const std::string& path, const RgbImage& img)
{
  if (has_extension(path, ".png"))
    atomic_write(path, encode_png(img.data().data(), img.width(), img.height(), false));
  else
    atomic_write(path, encode_ppm(img));
}

inline void write_mask(const std::string& path, const Mask& mask)
{
  ScalarImage img(mask.width(), mask.height());
  for (std::size_t i = 0; i < mask.size(); ++i)
    img.data()[i] = mask.data()[i] ? 1.0 : 0.0;
  write_image(path, img);
}

inline Mask read_mask(const std::string& path)
{
  const ScalarImage img = read_scalar_image(path);
  Mask m(img.width(), img.height(), 0);
  for (std::size_t i = 0; i < img.size(); ++i)
    m.data()[i] = img.data()[i] >= 0.5 ? 1 : 0;
  return m;
}

// ---------------------------------------------------------------------------
// Displacement fields: "DF2D", u32 width, u32 height, float32 dx[], float32 dy[], all little-endian.

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v)
{
  for (int i = 0; i < 4; ++i)
    out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline std::uint32_t get_u32(const std::uint8_t* p)
{
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

} // namespace detail

/// Round every component to float32, the precision of the field file format.
inline DisplacementField to_float32(const DisplacementField& f)
{
  DisplacementField out = f;
  for (double& v : out.dx().data())
    v = static_cast<float>(v);
  for (double& v : out.dy().data())
    v = static_cast<float>(v);
  return out;
}

inline std::vector<std::uint8_t> encode_field(const DisplacementField& field)
{
  std::vector<std::uint8_t> out{'D', 'F', '2', 'D'};
  detail::put_u32(out, static_cast<std::uint32_t>(field.width()));
  detail::put_u32(out, static_cast<std::uint32_t>(field.height()));
  out.reserve(12 + 8 * field.dx().size());
  for (const Raster<double>* comp : {&field.dx(), &field.dy()})
    for (double v : comp->data())
      detail::put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
  return out;
}

inline DisplacementField decode_field(const std::vector<std::uint8_t>& bytes, const std::string& what)
{
  if (bytes.size() < 12)
    throw FormatError("field file too short: " + what);
  if (std::memcmp(bytes.data(), "DF2D", 4) != 0)
    throw FormatError("field file magic mismatch: " + what);
  const std::uint32_t w = detail::get_u32(bytes.data() + 4);
  const std::uint32_t h = detail::get_u32(bytes.data() + 8);
  if (w < 1 || h < 1 || w > (1u << 20) || h > (1u << 20))
    throw FormatError("field file has invalid dimensions: " + what);
  const std::size_t n = static_cast<std::size_t>(w) * h;
  if (bytes.size() != 12 + 8 * n)
    throw FormatError("field file payload size mismatch: " + what);
  Raster<double> dx(static_cast<int>(w), static_cast<int>(h)), dy(static_cast<int>(w), static_cast<int>(h));
  const std::uint8_t* p = bytes.data() + 12;
  for (std::size_t i = 0; i < n; ++i, p += 4)
    dx.data()[i] = std::bit_cast<float>(detail::get_u32(p));
  for (std::size_t i = 0; i < n; ++i, p += 4)
    dy.data()[i] = std::bit_cast<float>(detail::get_u32(p));
  try
  {
    return DisplacementField(std::move(dx), std::move(dy));
  }
  catch (const InvalidArgument& e)
  {
    throw FormatError(std::string(e.what()) + ": " + what);
  }
}

inline void write_field(const std::string& path, const DisplacementField& field)
{
  atomic_write(path, encode_field(field));
}

inline DisplacementField read_field(const std::string& path) { return decode_field(read_file_bytes(path), path); }

// ---------------------------------------------------------------------------
// Landmarks: header ",X,Y", rows "index,x,y".

inline LandmarkSet parse_landmarks(const std::string& text, const std::string& what)
{
  const auto lines = split_lines(text);
  if (lines.empty() || lines.front() != ",X,Y")
    throw FormatError("bad header in landmark file (expected ',X,Y'): " + what);
  LandmarkSet set;
  for (std::size_t i = 1; i < lines.size(); ++i)
  {
    if (trim(lines[i]).empty())
      continue;
    const auto fields = split(lines[i], ',');
    if (fields.size() != 3)
      throw FormatError("landmark row " + std::to_string(i) + " does not have 3 fields: " + what);
    parse_double(fields[0], what);
    set.points.push_back({parse_double(fields[1], what), parse_double(fields[2], what)});
  }
  return set;
}

inline std::string format_landmarks(const LandmarkSet& set)
{
  std::string out = ",X,Y\n";
  for (std::size_t i = 0; i < set.size(); ++i)
    out += std::to_string(i) + "," + format_fixed6(set.points[i].x) + "," + format_fixed6(set.points[i].y) + "\n";
  return out;
}

inline LandmarkSet read_landmarks(const std::string& path) { return parse_landmarks(read_file_text(path), path); }

inline void write_landmarks(const std::string& path, const LandmarkSet& set)
{
  atomic_write(path, format_landmarks(set));
}

// ---------------------------------------------------------------------------
// Affine: "a11 a12 a21 a22 tx ty cx cy"

inline std::string format_affine(const AffineTransform2D& a)
{
  std::string out;
  for (double v : {a.a11, a.a12, a.a21, a.a22, a.tx, a.ty, a.cx, a.cy})
  {
    if (!out.empty())
      out += ' ';
    out += format_exact(v);
  }
  return out + "\n";
}

inline AffineTransform2D parse_affine(const std::string& text, const std::string& what)
{
  std::istringstream in(text);
  std::vector<double> v;
  std::string tok;
  while (in >> tok)
    v.push_back(parse_double(tok, what));
  if (v.size() != 8)
    throw FormatError("affine file needs exactly 8 numbers, found " + std::to_string(v.size()) + ": " + what);
  AffineTransform2D a{v[0], v[1], v[2], v[3], v[4], v[5], v[6], v[7]};
  try
  {
    a.validate();
  }
  catch (const InvalidArgument& e)
  {
    throw FormatError(std::string(e.what()) + ": " + what);
  }
  return a;
}

inline void write_affine(const std::string& path, const AffineTransform2D& a) { atomic_write(path, format_affine(a)); }

inline AffineTransform2D read_affine(const std::string& path) { return parse_affine(read_file_text(path), path); }

// ---------------------------------------------------------------------------
// key=value sidecars

using KeyValues = std::vector<std::pair<std::string, std::string>>;

inline std::string format_key_values(const KeyValues& kv)
{
  std::string out;
  for (const auto& [k, v] : kv)
    out += k + "=" + v + "\n";
  return out;
}

inline void write_key_values(const std::string& path, const KeyValues& kv)
{
  atomic_write(path, format_key_values(kv));
}

inline std::map<std::string, std::string> read_key_values(const std::string& path)
{
  std::map<std::string, std::string> out;
  for (const auto& line : split_lines(read_file_text(path)))
  {
    if (trim(line).empty() || line.front() == '#')
      continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw FormatError("malformed key=value line in " + path + ": " + line);
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

} // namespace histreg

#endif // HISTREG_IO_HPP
