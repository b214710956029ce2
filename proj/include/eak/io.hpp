#pragma once

// Volume and parcellation I/O.
//
// raw-json: a UTF-8 JSON header
//   {"dims":[nx,ny,nz,nt], "voxel_size_mm":[sx,sy,sz], "tr_seconds":tr,
//    "affine":[16 row-major reals], "data_file":"name.f32"}
// next to a payload of nx*ny*nz*nt little-endian float32, x fastest, t slowest.
//
// nifti1: read-only subset. Single-file .nii, uncompressed, little-endian,
// datatypes uint8 / int16 / float32, scl_slope/scl_inter applied when slope != 0.

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eak/error.hpp"
#include "eak/volume.hpp"

namespace eak {

static_assert(std::endian::native == std::endian::little, "payload I/O assumes a little-endian host");

enum class VolumeFormat { nifti1, raw_json };

inline VolumeFormat guess_format(const std::filesystem::path& p) {
  return p.extension() == ".nii" ? VolumeFormat::nifti1 : VolumeFormat::raw_json;
}

namespace detail {

inline std::vector<char> read_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) fail(ErrorKind::Config, "cannot open " + p.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

template <typename T>
T read_le(const std::vector<char>& buf, std::size_t offset) {
  T v;
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

inline nlohmann::json read_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  if (!in) fail(ErrorKind::Config, "cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::SchemaError, p.string() + ": " + e.what());
  }
}

}  // namespace detail

inline void save_raw_json(const Volume4D& vol, const std::filesystem::path& header_path) {
  auto payload = header_path;
  payload.replace_extension(".f32");
  nlohmann::json h;
  h["dims"] = {vol.dims().nx, vol.dims().ny, vol.dims().nz, vol.nt()};
  h["voxel_size_mm"] = vol.voxel_size_mm();
  h["tr_seconds"] = vol.tr_seconds();
  h["affine"] = vol.affine().row_major();
  h["data_file"] = payload.filename().string();
  {
    std::ofstream out(header_path);
    if (!out) fail(ErrorKind::Config, "cannot write " + header_path.string());
    out << h.dump(2) << '\n';
  }
  std::ofstream out(payload, std::ios::binary);
  if (!out) fail(ErrorKind::Config, "cannot write " + payload.string());
  const auto d = vol.data();
  out.write(reinterpret_cast<const char*>(d.data()), static_cast<std::streamsize>(d.size_bytes()));
}

inline Volume4D load_raw_json(const std::filesystem::path& header_path) {
  const auto h = detail::read_json(header_path);
  try {
    const auto dims = h.at("dims").get<std::vector<std::int64_t>>();
    if (dims.size() != 4) fail(ErrorKind::CorruptHeader, "dims must have 4 entries");
    for (auto d : dims)
      if (d < 1) fail(ErrorKind::CorruptHeader, "dims must be >= 1");
    const auto vs = h.at("voxel_size_mm").get<std::array<double, 3>>();
    const double tr = h.at("tr_seconds").get<double>();
    const auto aff = h.at("affine").get<std::vector<double>>();
    if (aff.size() != 16) fail(ErrorKind::CorruptHeader, "affine must have 16 entries");
    std::array<double, 16> a{};
    std::copy(aff.begin(), aff.end(), a.begin());
    const auto payload = header_path.parent_path() / h.at("data_file").get<std::string>();
    const auto bytes = detail::read_bytes(payload);
    const std::size_t n = static_cast<std::size_t>(dims[0] * dims[1] * dims[2] * dims[3]);
    if (bytes.size() != n * sizeof(float))
      fail(ErrorKind::DimensionMismatch, "payload has " + std::to_string(bytes.size()) + " bytes, header implies " +
                                             std::to_string(n * sizeof(float)));
    std::vector<float> data(n);
    std::memcpy(data.data(), bytes.data(), bytes.size());
    return Volume4D({dims[0], dims[1], dims[2]}, dims[3], std::move(data), vs, tr, Affine(a));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::CorruptHeader, header_path.string() + ": " + e.what());
  }
}

inline Volume4D load_nifti1(const std::filesystem::path& path) {
  const auto buf = detail::read_bytes(path);
  if (buf.size() < 352) fail(ErrorKind::CorruptHeader, "file shorter than a NIfTI-1 header");
  if (detail::read_le<std::int32_t>(buf, 0) != 348)
    fail(ErrorKind::CorruptHeader, "sizeof_hdr != 348 (big-endian or not NIfTI-1)");
  if (std::memcmp(buf.data() + 344, "n+1\0", 4) != 0) fail(ErrorKind::CorruptHeader, "magic is not \"n+1\"");

  std::array<std::int16_t, 8> dim{};
  for (int i = 0; i < 8; ++i) dim[static_cast<std::size_t>(i)] = detail::read_le<std::int16_t>(buf, 40 + 2 * i);
  if (dim[0] < 1 || dim[0] > 7) fail(ErrorKind::CorruptHeader, "dim[0] out of range");
  std::array<std::int64_t, 4> d{1, 1, 1, 1};
  for (int i = 1; i <= std::min<int>(dim[0], 4); ++i) {
    if (dim[static_cast<std::size_t>(i)] < 1) fail(ErrorKind::CorruptHeader, "non-positive dimension");
    d[static_cast<std::size_t>(i - 1)] = dim[static_cast<std::size_t>(i)];
  }
  for (int i = 5; i <= dim[0]; ++i)
    if (dim[static_cast<std::size_t>(i)] > 1) fail(ErrorKind::DimensionMismatch, "more than 4 dimensions");

  const auto datatype = detail::read_le<std::int16_t>(buf, 70);
  std::size_t bytes_per = 0;
  switch (datatype) {
    case 2: bytes_per = 1; break;   // uint8
    case 4: bytes_per = 2; break;   // int16
    case 16: bytes_per = 4; break;  // float32
    default: fail(ErrorKind::UnsupportedDatatype, "datatype code " + std::to_string(datatype));
  }

  std::array<float, 8> pixdim{};
  for (int i = 0; i < 8; ++i) pixdim[static_cast<std::size_t>(i)] = detail::read_le<float>(buf, 76 + 4 * i);
  const float vox_offset = detail::read_le<float>(buf, 108);
  float slope = detail::read_le<float>(buf, 112);
  float inter = detail::read_le<float>(buf, 116);
  const auto xyzt_units = static_cast<std::uint8_t>(buf[123]);
  const auto qform_code = detail::read_le<std::int16_t>(buf, 252);
  const auto sform_code = detail::read_le<std::int16_t>(buf, 254);

  if (!(vox_offset >= 352)) fail(ErrorKind::CorruptHeader, "vox_offset < 352");
  const std::size_t n = static_cast<std::size_t>(d[0] * d[1] * d[2] * d[3]);
  const auto offset = static_cast<std::size_t>(vox_offset);
  if (buf.size() < offset + n * bytes_per) fail(ErrorKind::DimensionMismatch, "data section truncated");
  if (!std::isfinite(slope) || slope == 0) {
    slope = 1;
    inter = 0;
  }
  if (!std::isfinite(inter)) inter = 0;

  std::vector<float> data(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t at = offset + i * bytes_per;
    double raw = 0;
    switch (datatype) {
      case 2: raw = static_cast<std::uint8_t>(buf[at]); break;
      case 4: raw = detail::read_le<std::int16_t>(buf, at); break;
      default: raw = detail::read_le<float>(buf, at); break;
    }
    data[i] = static_cast<float>(raw * slope + inter);
  }

  std::array<double, 3> vs{};
  for (int i = 0; i < 3; ++i) {
    const double p = std::abs(pixdim[static_cast<std::size_t>(i + 1)]);
    vs[static_cast<std::size_t>(i)] = p > 0 ? p : 1.0;
  }
  double tr = pixdim[4];
  if ((xyzt_units & 0x38) == 16) tr /= 1000.0;  // msec
  if ((xyzt_units & 0x38) == 24) tr /= 1e6;     // usec
  if (!(tr > 0)) tr = 1.0;

  Affine affine = Affine::scaled(vs[0], vs[1], vs[2]);
  if (sform_code > 0) {
    std::array<double, 16> a{};
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 4; ++c)
        a[static_cast<std::size_t>(4 * r + c)] = detail::read_le<float>(buf, static_cast<std::size_t>(280 + 16 * r + 4 * c));
    a[15] = 1;
    affine = Affine(a);
  } else if (qform_code > 0) {
    const double b = detail::read_le<float>(buf, 256), c = detail::read_le<float>(buf, 260),
                 dq = detail::read_le<float>(buf, 264);
    const double a = std::sqrt(std::max(0.0, 1.0 - (b * b + c * c + dq * dq)));
    const double qfac = pixdim[0] < 0 ? -1.0 : 1.0;
    const double R[3][3] = {{a * a + b * b - c * c - dq * dq, 2 * (b * c - a * dq), 2 * (b * dq + a * c)},
                            {2 * (b * c + a * dq), a * a + c * c - b * b - dq * dq, 2 * (c * dq - a * b)},
                            {2 * (b * dq - a * c), 2 * (c * dq + a * b), a * a + dq * dq - c * c - b * b}};
    const double scale[3] = {vs[0], vs[1], vs[2] * qfac};
    std::array<double, 16> m{};
    for (int r = 0; r < 3; ++r) {
      for (int col = 0; col < 3; ++col) m[static_cast<std::size_t>(4 * r + col)] = R[r][col] * scale[col];
      m[static_cast<std::size_t>(4 * r + 3)] = detail::read_le<float>(buf, static_cast<std::size_t>(268 + 4 * r));
    }
    m[15] = 1;
    affine = Affine(m);
  }
  return Volume4D({d[0], d[1], d[2]}, d[3], std::move(data), vs, tr, affine);
}

inline Volume4D load_volume(const std::filesystem::path& path, VolumeFormat format) {
  return format == VolumeFormat::nifti1 ? load_nifti1(path) : load_raw_json(path);
}

inline Volume4D load_volume(const std::filesystem::path& path) { return load_volume(path, guess_format(path)); }

/// Sidecar lines are "label,name"; blank lines and lines starting with '#' are skipped.
inline std::map<std::int32_t, std::string> read_label_names(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::Config, "cannot open " + path.string());
  std::map<std::int32_t, std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) fail(ErrorKind::SchemaError, "label sidecar line without comma: " + line);
    try {
      names[std::stoi(line.substr(0, comma))] = line.substr(comma + 1);
    } catch (const std::exception&) {
      fail(ErrorKind::SchemaError, "bad label in sidecar: " + line);
    }
  }
  return names;
}

inline void write_label_names(const Parcellation& parc, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::Config, "cannot write " + path.string());
  for (const auto& [l, name] : parc.names()) out << l << ',' << name << '\n';
}

inline Parcellation parcellation_from_volume(const Volume4D& img, std::map<std::int32_t, std::string> names = {}) {
  if (img.nt() != 1) fail(ErrorKind::DimensionMismatch, "parcellation image must be spatial-only");
  std::vector<std::int32_t> labels(static_cast<std::size_t>(img.voxels()));
  const auto d = img.data();
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const float v = d[i];
    if (v != std::round(v) || v < 0 || v > 2147483520.0f)
      fail(ErrorKind::NonIntegerLabels, "voxel value " + std::to_string(v) + " is not a label");
    labels[i] = static_cast<std::int32_t>(v);
  }
  return Parcellation(img.dims(), std::move(labels), std::move(names));
}

inline Parcellation load_parcellation(const std::filesystem::path& path,
                                      const std::filesystem::path& names_path = {}) {
  auto names = names_path.empty() ? std::map<std::int32_t, std::string>{} : read_label_names(names_path);
  return parcellation_from_volume(load_volume(path), std::move(names));
}

inline void save_parcellation(const Parcellation& parc, const std::filesystem::path& header_path,
                              const std::array<double, 3>& voxel_size_mm = {3, 3, 3},
                              const Affine& affine = Affine()) {
  std::vector<float> data(parc.labels().begin(), parc.labels().end());
  save_raw_json(Volume4D(parc.dims(), 1, std::move(data), voxel_size_mm, 1.0, affine), header_path);
  auto names = header_path;
  names.replace_extension(".labels.csv");
  write_label_names(parc, names);
}

}  // namespace eak
