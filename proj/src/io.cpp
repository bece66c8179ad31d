#include "skullkit/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <regex>
#include <sstream>

#include <json.hpp>

#include "skullkit/error.hpp"

namespace skullkit {

static_assert(std::endian::native == std::endian::little, "NPY I/O assumes a little-endian host");

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& bytes) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

SliceFormat format_from_path(const fs::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), ::tolower);
  if (ext == ".npy") return SliceFormat::npy_f32;
  if (ext == ".pgm") return SliceFormat::pgm16;
  throw FormatError("unrecognized slice extension '" + ext + "'");
}

// --- NPY ---------------------------------------------------------------------

std::size_t NpyArray::size() const {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

NpyArray parse_npy(const std::string& bytes) {
  static const char kMagic[] = "\x93NUMPY";
  if (bytes.size() < 10 || bytes.compare(0, 6, kMagic, 6) != 0)
    throw FormatError("not an NPY file");
  const auto major = static_cast<unsigned char>(bytes[6]);
  std::size_t header_len = 0, offset = 0;
  if (major == 1) {
    header_len = static_cast<unsigned char>(bytes[8]) | (static_cast<unsigned char>(bytes[9]) << 8);
    offset = 10;
  } else if (major == 2 || major == 3) {
    if (bytes.size() < 12) throw FormatError("truncated NPY header");
    std::uint32_t len = 0;
    std::memcpy(&len, bytes.data() + 8, 4);
    header_len = len;
    offset = 12;
  } else {
    throw FormatError("unsupported NPY version " + std::to_string(major));
  }
  if (bytes.size() < offset + header_len) throw FormatError("truncated NPY header");
  const std::string header = bytes.substr(offset, header_len);

  std::smatch m;
  NpyArray arr;
  if (!std::regex_search(header, m, std::regex(R"('descr'\s*:\s*'([^']+)')")))
    throw FormatError("NPY header lacks descr");
  arr.descr = m[1];
  if (arr.descr != "<f4" && arr.descr != "<f8")
    throw FormatError("unsupported NPY dtype '" + arr.descr + "' (need <f4 or <f8)");
  if (!std::regex_search(header, m, std::regex(R"('fortran_order'\s*:\s*(True|False))")))
    throw FormatError("NPY header lacks fortran_order");
  if (m[1] == "True") throw FormatError("Fortran-ordered NPY arrays are not supported");
  if (!std::regex_search(header, m, std::regex(R"('shape'\s*:\s*\(([^)]*)\))")))
    throw FormatError("NPY header lacks shape");
  const std::string dims = m[1];
  static const std::regex digits(R"(\d+)");
  for (std::sregex_iterator it(dims.begin(), dims.end(), digits), end; it != end; ++it)
    arr.shape.push_back(std::stoull(it->str()));

  const std::size_t count = arr.size();
  const std::size_t width = arr.descr == "<f4" ? 4 : 8;
  const std::size_t data_off = offset + header_len;
  if (bytes.size() != data_off + count * width)
    throw FormatError("NPY payload size does not match header shape");
  arr.data.resize(count);
  const char* p = bytes.data() + data_off;
  if (width == 4) {
    for (std::size_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, p + 4 * i, 4);
      arr.data[i] = v;
    }
  } else {
    std::memcpy(arr.data.data(), p, count * 8);
  }
  return arr;
}

NpyArray read_npy(const fs::path& path) {
  try {
    return parse_npy(read_file(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::string encode_npy_f32(const float* data, const std::vector<std::size_t>& shape) {
  std::string dims;
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) dims += ", ";
    dims += std::to_string(shape[i]);
  }
  if (shape.size() == 1) dims += ",";
  std::string header = "{'descr': '<f4', 'fortran_order': False, 'shape': (" + dims + "), }";
  const std::size_t unpadded = 10 + header.size() + 1;
  header.append((64 - unpadded % 64) % 64, ' ');
  header.push_back('\n');

  std::size_t count = 1;
  for (auto d : shape) count *= d;
  std::string out("\x93NUMPY\x01\x00", 8);
  out.push_back(static_cast<char>(header.size() & 0xff));
  out.push_back(static_cast<char>((header.size() >> 8) & 0xff));
  out += header;
  out.append(reinterpret_cast<const char*>(data), count * sizeof(float));
  return out;
}

void write_npy_f32(const fs::path& path, const float* data, const std::vector<std::size_t>& shape) {
  write_file(path, encode_npy_f32(data, shape));
}

// --- PGM ---------------------------------------------------------------------

namespace {

CtSlice load_pgm16(const fs::path& path, std::string id, Provenance prov) {
  const std::string bytes = read_file(path);
  std::size_t pos = 0;
  long hu_offset = 0;
  auto next_token = [&]() {
    std::string tok;
    while (pos < bytes.size()) {
      const char c = bytes[pos];
      if (c == '#') {
        const auto eol = bytes.find('\n', pos);
        const std::string comment = bytes.substr(pos, eol == std::string::npos ? eol : eol - pos);
        std::smatch m;
        if (std::regex_search(comment, m, std::regex(R"(hu_offset\s*=\s*(-?\d+))")))
          hu_offset = std::stol(m[1]);
        pos = eol == std::string::npos ? bytes.size() : eol + 1;
      } else if (std::isspace(static_cast<unsigned char>(c))) {
        if (!tok.empty()) break;
        ++pos;
      } else {
        tok.push_back(c);
        ++pos;
      }
    }
    return tok;
  };
  if (next_token() != "P5") throw FormatError(path.string() + ": not a binary PGM (P5)");
  long w = 0, h = 0, maxval = 0;
  try {
    w = std::stol(next_token());
    h = std::stol(next_token());
    maxval = std::stol(next_token());
  } catch (const std::logic_error&) {
    throw FormatError(path.string() + ": malformed PGM header");
  }
  ++pos;  // single whitespace byte before raster
  if (maxval < 256 || maxval > 65535)
    throw FormatError(path.string() + ": expected a 16-bit PGM (maxval > 255)");
  if (w != kSliceSide || h != kSliceSide)
    throw DimensionError(path.string() + ": expected 128x128, got " + std::to_string(w) + "x" +
                         std::to_string(h));
  if (bytes.size() != pos + static_cast<std::size_t>(w * h * 2))
    throw FormatError(path.string() + ": PGM raster size mismatch");
  PixelGrid px(h, w);
  for (long i = 0; i < w * h; ++i) {
    const auto hi = static_cast<unsigned char>(bytes[pos + 2 * i]);
    const auto lo = static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    px.data()[i] = static_cast<float>(static_cast<long>((hi << 8) | lo) - hu_offset);
  }
  return CtSlice(std::move(px), std::move(id), prov);
}

void save_pgm16(const CtSlice& slice, const fs::path& path, std::optional<int> hu_offset) {
  const PixelGrid& px = slice.pixels();
  int offset = 0;
  if (hu_offset) {
    offset = *hu_offset;
  } else {
    offset = std::max(0, static_cast<int>(-std::lround(px.minCoeff())));
  }
  std::string out = "P5\n# hu_offset=" + std::to_string(offset) + "\n128 128\n65535\n";
  out.reserve(out.size() + kSlicePixels * 2);
  for (Eigen::Index i = 0; i < kSlicePixels; ++i) {
    const long raw = std::lround(px.data()[i]) + offset;
    if (raw < 0 || raw > 65535)
      throw FormatError("pgm16: value " + std::to_string(px.data()[i]) +
                        " HU not representable with offset " + std::to_string(offset));
    out.push_back(static_cast<char>((raw >> 8) & 0xff));
    out.push_back(static_cast<char>(raw & 0xff));
  }
  write_file(path, out);
}

}  // namespace

CtSlice load_slice(const fs::path& path, SliceFormat format, std::string id, Provenance prov) {
  if (id.empty()) id = path.stem().string();
  if (format == SliceFormat::pgm16) return load_pgm16(path, std::move(id), prov);
  const NpyArray arr = read_npy(path);
  if (arr.shape.size() != 2 || arr.shape[0] != kSliceSide || arr.shape[1] != kSliceSide)
    throw DimensionError(path.string() + ": expected shape (128, 128)");
  PixelGrid px(kSliceSide, kSliceSide);
  for (Eigen::Index i = 0; i < kSlicePixels; ++i) px.data()[i] = static_cast<float>(arr.data[i]);
  if (!px.allFinite()) throw FormatError(path.string() + ": non-finite pixel value");
  return CtSlice(std::move(px), std::move(id), prov);
}

CtSlice load_slice(const fs::path& path) { return load_slice(path, format_from_path(path)); }

void save_slice(const CtSlice& slice, const fs::path& path, SliceFormat format,
                std::optional<int> hu_offset) {
  if (format == SliceFormat::pgm16) return save_pgm16(slice, path, hu_offset);
  write_npy_f32(path, slice.pixels().data(), {kSliceSide, kSliceSide});
}

void save_slice(const CtSlice& slice, const fs::path& path) {
  save_slice(slice, path, format_from_path(path));
}

Volume load_volume(const fs::path& path, double slice_spacing_mm, double mm_per_px) {
  const NpyArray arr = read_npy(path);
  if (arr.shape.size() != 3) throw DimensionError(path.string() + ": expected a 3-D (D,H,W) stack");
  Volume v;
  v.slice_spacing_mm = slice_spacing_mm;
  v.in_plane_resolution_mm_per_px = mm_per_px;
  v.id = path.stem().string();
  const auto d = arr.shape[0], h = arr.shape[1], w = arr.shape[2];
  for (std::size_t k = 0; k < d; ++k) {
    PixelGrid g(static_cast<Eigen::Index>(h), static_cast<Eigen::Index>(w));
    for (std::size_t i = 0; i < h * w; ++i) g.data()[i] = static_cast<float>(arr.data[k * h * w + i]);
    if (!g.allFinite()) throw FormatError(path.string() + ": non-finite voxel");
    v.slices.push_back(std::move(g));
  }
  v.validate();
  return v;
}

void save_volume(const Volume& volume, const fs::path& path) {
  volume.validate();
  const auto h = static_cast<std::size_t>(volume.slices.front().rows());
  const auto w = static_cast<std::size_t>(volume.slices.front().cols());
  std::vector<float> buf;
  buf.reserve(volume.slices.size() * h * w);
  for (const auto& s : volume.slices) buf.insert(buf.end(), s.data(), s.data() + s.size());
  write_npy_f32(path, buf.data(), {volume.slices.size(), h, w});
}

// --- manifests ---------------------------------------------------------------

std::vector<ManifestRecord> load_manifest(const fs::path& path) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
  if (j.is_object() && j.contains("records")) j = j["records"];
  if (!j.is_array()) throw FormatError(path.string() + ": manifest must be an array of records");
  const fs::path base = path.parent_path();
  std::vector<ManifestRecord> out;
  for (const auto& r : j) {
    try {
      ManifestRecord rec;
      rec.id = r.at("id").get<std::string>();
      rec.path = r.at("path").get<std::string>();
      if (rec.path.is_relative()) rec.path = base / rec.path;
      rec.provenance = provenance_from_string(r.value("provenance", std::string("real")));
      out.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path.string() + ": bad manifest record: " + e.what());
    }
  }
  return out;
}

void save_manifest(const std::vector<ManifestRecord>& records, const fs::path& path) {
  const fs::path base = path.has_parent_path() ? path.parent_path() : fs::path(".");
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : records) {
    fs::path p = r.path;
    if (p.is_absolute() || p.has_parent_path()) {
      std::error_code ec;
      auto rel = fs::relative(p, base, ec);
      if (!ec && !rel.empty()) p = rel;
    }
    arr.push_back({{"id", r.id}, {"path", p.generic_string()},
                   {"provenance", std::string(to_string(r.provenance))}});
  }
  write_file(path, arr.dump(2) + "\n");
}

std::vector<CtSlice> load_dataset(const std::vector<ManifestRecord>& records) {
  std::vector<CtSlice> out;
  out.reserve(records.size());
  for (const auto& r : records)
    out.push_back(load_slice(r.path, format_from_path(r.path), r.id, r.provenance));
  return out;
}

std::vector<ManifestRecord> resolve_dataset(const fs::path& path, Provenance fallback) {
  if (fs::is_regular_file(path)) return load_manifest(path);
  if (!fs::is_directory(path)) throw IoError("no such dataset '" + path.string() + "'");
  if (fs::is_regular_file(path / "manifest.json")) return load_manifest(path / "manifest.json");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(path)) {
    const auto ext = e.path().extension().string();
    if (e.is_regular_file() && (ext == ".npy" || ext == ".pgm")) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<ManifestRecord> out;
  for (const auto& f : files) out.push_back({f.stem().string(), f, fallback});
  return out;
}

std::vector<ManifestRecord> write_dataset(const std::vector<CtSlice>& slices, const fs::path& dir,
                                          const std::string& manifest_name) {
  fs::create_directories(dir);
  std::vector<ManifestRecord> records;
  records.reserve(slices.size());
  for (const auto& s : slices) {
    const fs::path p = dir / (s.id() + ".npy");
    save_slice(s, p, SliceFormat::npy_f32);
    records.push_back({s.id(), p, s.provenance()});
  }
  save_manifest(records, dir / manifest_name);
  return records;
}

// --- matrices ----------------------------------------------------------------

Eigen::MatrixXd read_matrix_npy(const fs::path& path) {
  const NpyArray arr = read_npy(path);
  if (arr.shape.size() != 2) throw DimensionError(path.string() + ": expected a 2-D array");
  const auto rows = static_cast<Eigen::Index>(arr.shape[0]);
  const auto cols = static_cast<Eigen::Index>(arr.shape[1]);
  Eigen::MatrixXd m = Eigen::Map<const Grid<double>>(arr.data.data(), rows, cols);
  if (!m.allFinite()) throw FormatError(path.string() + ": non-finite value");
  return m;
}

void write_matrix_npy(const Eigen::MatrixXd& m, const fs::path& path) {
  const Grid<float> rm = m.cast<float>();
  write_npy_f32(path, rm.data(),
                {static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
}

}  // namespace skullkit
