#include "canopy/geotiff.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "canopy/errors.hpp"

namespace canopy {

void AffineTransform::world_to_pixel(double x, double y, double& col, double& row) const {
  double det = a * e - b * d;
  if (std::abs(det) < 1e-300) throw NumericError("singular raster transform");
  double dx = x - c;
  double dy = y - f;
  col = (e * dx - b * dy) / det;
  row = (-d * dx + a * dy) / det;
}

namespace {

constexpr std::uint16_t kTagImageWidth = 256;
constexpr std::uint16_t kTagImageLength = 257;
constexpr std::uint16_t kTagBitsPerSample = 258;
constexpr std::uint16_t kTagCompression = 259;
constexpr std::uint16_t kTagPhotometric = 262;
constexpr std::uint16_t kTagStripOffsets = 273;
constexpr std::uint16_t kTagSamplesPerPixel = 277;
constexpr std::uint16_t kTagRowsPerStrip = 278;
constexpr std::uint16_t kTagStripByteCounts = 279;
constexpr std::uint16_t kTagPlanarConfig = 284;
constexpr std::uint16_t kTagTileWidth = 322;
constexpr std::uint16_t kTagTileLength = 323;
constexpr std::uint16_t kTagTileOffsets = 324;
constexpr std::uint16_t kTagTileByteCounts = 325;
constexpr std::uint16_t kTagModelPixelScale = 33550;
constexpr std::uint16_t kTagModelTiepoint = 33922;
constexpr std::uint16_t kTagModelTransformation = 34264;
constexpr std::uint16_t kTagGeoKeyDirectory = 34735;

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;  // BYTE, ASCII, SBYTE, UNDEFINED
    case 3: case 8: return 2;                  // SHORT, SSHORT
    case 4: case 9: case 11: return 4;         // LONG, SLONG, FLOAT
    case 5: case 10: case 12: return 8;        // RATIONAL, SRATIONAL, DOUBLE
    default: return 0;
  }
}

struct TiffBuffer {
  std::vector<std::uint8_t> bytes;
  bool big_endian = false;

  std::uint16_t u16(std::size_t off) const {
    check(off, 2);
    return big_endian ? (bytes[off] << 8) | bytes[off + 1]
                      : bytes[off] | (bytes[off + 1] << 8);
  }
  std::uint32_t u32(std::size_t off) const {
    check(off, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i)
      v |= static_cast<std::uint32_t>(bytes[off + (big_endian ? 3 - i : i)]) << (8 * i);
    return v;
  }
  double f64(std::size_t off) const {
    check(off, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= static_cast<std::uint64_t>(bytes[off + (big_endian ? 7 - i : i)]) << (8 * i);
    double d;
    std::memcpy(&d, &v, 8);
    return d;
  }
  void check(std::size_t off, std::size_t n) const {
    if (off + n > bytes.size()) throw FormatError("truncated TIFF");
  }
};

struct IfdEntry {
  std::uint16_t tag = 0;
  std::uint16_t type = 0;
  std::uint32_t count = 0;
  std::size_t value_off = 0;  // absolute offset of the value bytes
};

// Reads the entry's values widened to double (handles SHORT/LONG/DOUBLE).
std::vector<double> read_values(const TiffBuffer& buf, const IfdEntry& e) {
  std::vector<double> out;
  out.reserve(e.count);
  std::size_t sz = type_size(e.type);
  for (std::uint32_t i = 0; i < e.count; ++i) {
    std::size_t off = e.value_off + i * sz;
    switch (e.type) {
      case 3: out.push_back(buf.u16(off)); break;
      case 4: out.push_back(buf.u32(off)); break;
      case 12: out.push_back(buf.f64(off)); break;
      default: throw FormatError("unsupported TIFF field type " + std::to_string(e.type));
    }
  }
  return out;
}

}  // namespace

GeoRaster read_geotiff(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open raster: " + path);
  TiffBuffer buf;
  buf.bytes.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  if (buf.bytes.size() < 8) throw FormatError(path + ": not a TIFF");
  if (buf.bytes[0] == 'I' && buf.bytes[1] == 'I')
    buf.big_endian = false;
  else if (buf.bytes[0] == 'M' && buf.bytes[1] == 'M')
    buf.big_endian = true;
  else
    throw FormatError(path + ": not a TIFF");
  if (buf.u16(2) != 42) throw FormatError(path + ": not a baseline TIFF");

  std::size_t ifd_off = buf.u32(4);
  std::uint16_t n_entries = buf.u16(ifd_off);
  std::vector<IfdEntry> entries;
  for (std::uint16_t i = 0; i < n_entries; ++i) {
    std::size_t eo = ifd_off + 2 + i * 12;
    IfdEntry e;
    e.tag = buf.u16(eo);
    e.type = buf.u16(eo + 2);
    e.count = buf.u32(eo + 4);
    std::size_t total = type_size(e.type) * e.count;
    e.value_off = total <= 4 ? eo + 8 : buf.u32(eo + 8);
    entries.push_back(e);
  }
  auto find = [&](std::uint16_t tag) -> const IfdEntry* {
    for (const IfdEntry& e : entries)
      if (e.tag == tag) return &e;
    return nullptr;
  };
  auto require_scalar = [&](std::uint16_t tag, const char* name) -> std::uint32_t {
    const IfdEntry* e = find(tag);
    if (!e) throw FormatError(path + ": missing TIFF tag " + name);
    return static_cast<std::uint32_t>(read_values(buf, *e)[0]);
  };

  GeoRaster r;
  r.width = static_cast<int>(require_scalar(kTagImageWidth, "ImageWidth"));
  r.height = static_cast<int>(require_scalar(kTagImageLength, "ImageLength"));
  r.bands = 1;
  if (const IfdEntry* e = find(kTagSamplesPerPixel))
    r.bands = static_cast<int>(read_values(buf, *e)[0]);
  if (const IfdEntry* e = find(kTagCompression)) {
    if (read_values(buf, *e)[0] != 1.0)
      throw FormatError(path + ": compressed TIFFs are not supported");
  }
  if (const IfdEntry* e = find(kTagBitsPerSample)) {
    for (double b : read_values(buf, *e))
      if (b != 8.0) throw FormatError(path + ": only 8-bit samples supported");
  }
  if (const IfdEntry* e = find(kTagPlanarConfig)) {
    if (read_values(buf, *e)[0] != 1.0)
      throw FormatError(path + ": only chunky planar layout supported");
  }

  r.data.assign(static_cast<std::size_t>(r.width) * r.height * r.bands, 0);

  if (const IfdEntry* tile_off = find(kTagTileOffsets)) {
    int tw = static_cast<int>(require_scalar(kTagTileWidth, "TileWidth"));
    int th = static_cast<int>(require_scalar(kTagTileLength, "TileLength"));
    std::vector<double> offs = read_values(buf, *tile_off);
    int tiles_across = (r.width + tw - 1) / tw;
    for (std::size_t t = 0; t < offs.size(); ++t) {
      int trow = static_cast<int>(t) / tiles_across;
      int tcol = static_cast<int>(t) % tiles_across;
      std::size_t src = static_cast<std::size_t>(offs[t]);
      for (int y = 0; y < th; ++y) {
        int row = trow * th + y;
        if (row >= r.height) break;
        for (int x = 0; x < tw; ++x) {
          int col = tcol * tw + x;
          std::size_t po = src + (static_cast<std::size_t>(y) * tw + x) * r.bands;
          if (col >= r.width) continue;
          buf.check(po, r.bands);
          for (int b = 0; b < r.bands; ++b)
            r.at(row, col, b) = buf.bytes[po + b];
        }
      }
    }
  } else {
    const IfdEntry* strip_off = find(kTagStripOffsets);
    if (!strip_off) throw FormatError(path + ": no strip or tile offsets");
    std::uint32_t rows_per_strip = r.height;
    if (const IfdEntry* e = find(kTagRowsPerStrip))
      rows_per_strip = static_cast<std::uint32_t>(read_values(buf, *e)[0]);
    std::vector<double> offs = read_values(buf, *strip_off);
    std::size_t row_bytes = static_cast<std::size_t>(r.width) * r.bands;
    for (std::size_t s = 0; s < offs.size(); ++s) {
      std::size_t first_row = s * rows_per_strip;
      std::size_t n_rows = std::min<std::size_t>(rows_per_strip, r.height - first_row);
      std::size_t src = static_cast<std::size_t>(offs[s]);
      buf.check(src, n_rows * row_bytes);
      std::memcpy(&r.data[first_row * row_bytes], &buf.bytes[src], n_rows * row_bytes);
    }
  }

  // Georeferencing.
  if (const IfdEntry* e = find(kTagModelTransformation)) {
    std::vector<double> m = read_values(buf, *e);
    if (m.size() >= 8) {
      r.transform.a = m[0];
      r.transform.b = m[1];
      r.transform.c = m[3];
      r.transform.d = m[4];
      r.transform.e = m[5];
      r.transform.f = m[7];
    }
  } else if (const IfdEntry* scale = find(kTagModelPixelScale)) {
    std::vector<double> s = read_values(buf, *scale);
    const IfdEntry* tp = find(kTagModelTiepoint);
    if (!tp) throw FormatError(path + ": ModelPixelScale without ModelTiepoint");
    std::vector<double> t = read_values(buf, *tp);
    if (s.size() < 2 || t.size() < 6) throw FormatError(path + ": bad geo tags");
    r.transform.a = s[0];
    r.transform.b = 0.0;
    r.transform.d = 0.0;
    r.transform.e = -s[1];
    r.transform.c = t[3] - s[0] * t[0];
    r.transform.f = t[4] + s[1] * t[1];
  }
  if (const IfdEntry* e = find(kTagGeoKeyDirectory)) {
    std::vector<double> keys = read_values(buf, *e);
    for (std::size_t i = 4; i + 3 < keys.size(); i += 4) {
      int key_id = static_cast<int>(keys[i]);
      int location = static_cast<int>(keys[i + 1]);
      int value = static_cast<int>(keys[i + 3]);
      if ((key_id == 3072 || key_id == 2048) && location == 0 && value > 0 && value < 65535) {
        r.crs_id = "EPSG:" + std::to_string(value);
        if (key_id == 3072) break;  // projected CRS wins over geographic
      }
    }
  }
  return r;
}

namespace {

struct TiffWriter {
  std::vector<std::uint8_t> bytes;

  void u16(std::uint16_t v) {
    bytes.push_back(v & 0xff);
    bytes.push_back(v >> 8);
  }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
  void f64(double d) {
    std::uint64_t v;
    std::memcpy(&v, &d, 8);
    for (int i = 0; i < 8; ++i) bytes.push_back((v >> (8 * i)) & 0xff);
  }
};

}  // namespace

void write_geotiff(const GeoRaster& raster, const std::string& path) {
  if (raster.width <= 0 || raster.height <= 0 || raster.bands <= 0)
    throw ConfigError("empty raster");
  if (raster.data.size() !=
      static_cast<std::size_t>(raster.width) * raster.height * raster.bands)
    throw ConfigError("raster data size mismatch");

  TiffWriter w;
  w.bytes.reserve(raster.data.size() + 1024);
  w.u16(0x4949);  // "II"
  w.u16(42);
  std::size_t ifd_ptr_pos = w.bytes.size();
  w.u32(0);  // patched below

  std::size_t data_off = w.bytes.size();
  w.bytes.insert(w.bytes.end(), raster.data.begin(), raster.data.end());
  if (w.bytes.size() % 2) w.bytes.push_back(0);  // keep offsets word-aligned

  // Out-of-line values.
  std::size_t bits_off = w.bytes.size();
  for (int b = 0; b < raster.bands; ++b) w.u16(8);

  std::size_t scale_off = w.bytes.size();
  // Requires an axis-aligned transform; rotated grids are out of scope here.
  w.f64(raster.transform.a);
  w.f64(-raster.transform.e);
  w.f64(0.0);

  std::size_t tiepoint_off = w.bytes.size();
  w.f64(0.0);
  w.f64(0.0);
  w.f64(0.0);
  w.f64(raster.transform.c);
  w.f64(raster.transform.f);
  w.f64(0.0);

  std::uint16_t epsg = 32617;
  if (raster.crs_id.rfind("EPSG:", 0) == 0)
    epsg = static_cast<std::uint16_t>(std::stoi(raster.crs_id.substr(5)));
  std::size_t geokeys_off = w.bytes.size();
  // Version 1.1.0, 3 keys: model type projected, raster type pixel-is-area,
  // projected CRS code.
  const std::uint16_t geokeys[] = {1, 1, 0,    3,    1024, 0, 1, 1,
                                   1025, 0, 1, 1,    3072, 0, 1, epsg};
  for (std::uint16_t v : geokeys) w.u16(v);

  struct Entry {
    std::uint16_t tag, type;
    std::uint32_t count, value;
  };
  std::vector<Entry> entries = {
      {kTagImageWidth, 4, 1, static_cast<std::uint32_t>(raster.width)},
      {kTagImageLength, 4, 1, static_cast<std::uint32_t>(raster.height)},
      {kTagBitsPerSample, 3, static_cast<std::uint32_t>(raster.bands),
       raster.bands <= 2 ? 8u : static_cast<std::uint32_t>(bits_off)},
      {kTagCompression, 3, 1, 1},
      {kTagPhotometric, 3, 1, raster.bands >= 3 ? 2u : 1u},
      {kTagStripOffsets, 4, 1, static_cast<std::uint32_t>(data_off)},
      {kTagSamplesPerPixel, 3, 1, static_cast<std::uint32_t>(raster.bands)},
      {kTagRowsPerStrip, 4, 1, static_cast<std::uint32_t>(raster.height)},
      {kTagStripByteCounts, 4, 1, static_cast<std::uint32_t>(raster.data.size())},
      {kTagPlanarConfig, 3, 1, 1},
      {kTagModelPixelScale, 12, 3, static_cast<std::uint32_t>(scale_off)},
      {kTagModelTiepoint, 12, 6, static_cast<std::uint32_t>(tiepoint_off)},
      {kTagGeoKeyDirectory, 3, 16, static_cast<std::uint32_t>(geokeys_off)},
  };

  std::size_t ifd_off = w.bytes.size();
  w.u16(static_cast<std::uint16_t>(entries.size()));
  for (const Entry& e : entries) {
    w.u16(e.tag);
    w.u16(e.type);
    w.u32(e.count);
    // Inline SHORT scalars sit in the low bytes of the value word.
    if (e.type == 3 && e.count == 1) {
      w.u16(static_cast<std::uint16_t>(e.value));
      w.u16(0);
    } else if (e.tag == kTagBitsPerSample && raster.bands <= 2) {
      for (std::uint32_t i = 0; i < 2; ++i)
        w.u16(i < e.count ? 8 : 0);
    } else {
      w.u32(e.value);
    }
  }
  w.u32(0);  // no next IFD

  // Patch the IFD pointer.
  for (int i = 0; i < 4; ++i)
    w.bytes[ifd_ptr_pos + i] = (static_cast<std::uint32_t>(ifd_off) >> (8 * i)) & 0xff;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open raster for writing: " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) throw IoError("write failed: " + path);
}

}  // namespace canopy
