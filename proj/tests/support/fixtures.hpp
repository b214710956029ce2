#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "eak/volume.hpp"

namespace eak::testkit {

inline std::filesystem::path temp_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("eak_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

/// Minimal single-file NIfTI-1 writer, test-only.
template <typename T>
void write_nifti(const std::filesystem::path& path, std::array<std::int16_t, 4> dims, std::int16_t datatype,
                 const std::vector<T>& data, float slope = 0, float inter = 0, float tr = 2.0f,
                 const char* magic = "n+1") {
  std::vector<char> hdr(352, 0);
  auto put = [&hdr](std::size_t off, auto v) { std::memcpy(hdr.data() + off, &v, sizeof(v)); };
  put(0, std::int32_t{348});
  const std::int16_t ndim = dims[3] > 1 ? 4 : 3;
  put(40, ndim);
  for (int i = 0; i < 4; ++i) put(42 + 2 * static_cast<std::size_t>(i), dims[static_cast<std::size_t>(i)]);
  for (int i = 4; i < 7; ++i) put(42 + 2 * static_cast<std::size_t>(i), std::int16_t{1});
  put(70, datatype);
  put(72, static_cast<std::int16_t>(sizeof(T) * 8));
  put(76, 1.0f);
  put(80, 3.0f);
  put(84, 3.0f);
  put(88, 3.0f);
  put(92, tr);
  put(108, 352.0f);
  put(112, slope);
  put(116, inter);
  hdr[123] = 10;  // mm + sec
  put(254, std::int16_t{1});
  const float srow[3][4] = {{3, 0, 0, -90}, {0, 3, 0, -126}, {0, 0, 3, -72}};
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 4; ++c) put(280 + 16 * static_cast<std::size_t>(r) + 4 * static_cast<std::size_t>(c), srow[r][c]);
  std::memcpy(hdr.data() + 344, magic, 4);
  std::ofstream out(path, std::ios::binary);
  out.write(hdr.data(), static_cast<std::streamsize>(hdr.size()));
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(T)));
}

}  // namespace eak::testkit
