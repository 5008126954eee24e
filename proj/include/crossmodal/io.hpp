#pragma once

#include <zlib.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "crossmodal/pointcloud.hpp"
#include "crossmodal/render.hpp"

namespace crossmodal {

namespace detail {

inline void write_be32(std::string& out, uint32_t v) {
  out.push_back(static_cast<char>((v >> 24) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>(v & 0xff));
}

inline void png_chunk(std::string& out, const char type[4],
                      const std::string& data) {
  write_be32(out, static_cast<uint32_t>(data.size()));
  std::string body(type, 4);
  body += data;
  out += body;
  uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(body.data()),
                    static_cast<uInt>(body.size()));
  write_be32(out, static_cast<uint32_t>(crc));
}

}  // namespace detail

// 8-bit grayscale PNG.
inline void write_png_gray(const std::string& path, const Image& img) {
  std::string raw;
  raw.reserve(static_cast<size_t>(img.height * (img.width + 1)));
  for (int y = 0; y < img.height; ++y) {
    raw.push_back('\0');  // filter type: none
    for (int x = 0; x < img.width; ++x) {
      float v = std::clamp(img.at(x, y), 0.0f, 1.0f);
      raw.push_back(static_cast<char>(std::lround(v * 255.0f)));
    }
  }
  uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
  std::string comp(comp_len, '\0');
  int rc = compress(reinterpret_cast<Bytef*>(comp.data()), &comp_len,
                    reinterpret_cast<const Bytef*>(raw.data()),
                    static_cast<uLong>(raw.size()));
  CM_CHECK(rc == Z_OK, "zlib compression failed writing " << path);
  comp.resize(comp_len);

  std::string out("\x89PNG\r\n\x1a\n", 8);
  std::string ihdr;
  detail::write_be32(ihdr, static_cast<uint32_t>(img.width));
  detail::write_be32(ihdr, static_cast<uint32_t>(img.height));
  ihdr += '\x08';  // bit depth
  ihdr += '\x00';  // grayscale
  ihdr += std::string(3, '\0');
  detail::png_chunk(out, "IHDR", ihdr);
  detail::png_chunk(out, "IDAT", comp);
  detail::png_chunk(out, "IEND", "");

  std::ofstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open " << path);
  f.write(out.data(), static_cast<std::streamsize>(out.size()));
  CM_CHECK(f.good(), "write failed: " << path);
}

// Flat binary float32 dump: uint32 width, uint32 height, then pixels.
inline void write_image_f32(const std::string& path, const Image& img) {
  std::ofstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open " << path);
  uint32_t w = static_cast<uint32_t>(img.width), h = static_cast<uint32_t>(img.height);
  f.write(reinterpret_cast<const char*>(&w), 4);
  f.write(reinterpret_cast<const char*>(&h), 4);
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size() * 4));
  CM_CHECK(f.good(), "write failed: " << path);
}

inline Image read_image_f32(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open image: " << path);
  uint32_t w = 0, h = 0;
  f.read(reinterpret_cast<char*>(&w), 4);
  f.read(reinterpret_cast<char*>(&h), 4);
  Image img;
  img.width = static_cast<int>(w);
  img.height = static_cast<int>(h);
  img.pixels.resize(static_cast<size_t>(w) * h);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size() * 4));
  CM_CHECK(f.good(), "truncated image file: " << path);
  return img;
}

// Point cloud file: magic "PCF1", uint32 n, then n x 3 float32, little-endian.
inline void write_cloud(const std::string& path, const PointCloud& cloud) {
  std::ofstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open " << path);
  f.write("PCF1", 4);
  uint32_t n = static_cast<uint32_t>(cloud.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  for (const auto& p : cloud.points) {
    float xyz[3] = {static_cast<float>(p.x), static_cast<float>(p.y),
                    static_cast<float>(p.z)};
    f.write(reinterpret_cast<const char*>(xyz), 12);
  }
  CM_CHECK(f.good(), "write failed: " << path);
}

inline PointCloud read_cloud(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open cloud: " << path);
  char magic[4];
  f.read(magic, 4);
  CM_CHECK(f.good() && std::memcmp(magic, "PCF1", 4) == 0,
           "bad cloud magic in " << path);
  uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  PointCloud cloud;
  cloud.points.resize(n);
  for (auto& p : cloud.points) {
    float xyz[3];
    f.read(reinterpret_cast<char*>(xyz), 12);
    p = {xyz[0], xyz[1], xyz[2]};
  }
  CM_CHECK(f.good(), "truncated cloud file: " << path);
  return cloud;
}

inline void write_cloud_csv(const std::string& path, const PointCloud& cloud) {
  std::ofstream f(path);
  CM_CHECK(f.good(), "cannot open " << path);
  f << "x,y,z\n";
  for (const auto& p : cloud.points)
    f << p.x << "," << p.y << "," << p.z << "\n";
}

// Per-point part labels: magic "SEG1", uint32 n, n x uint8.
inline void write_labels(const std::string& path,
                         const std::vector<uint8_t>& labels) {
  std::ofstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open " << path);
  f.write("SEG1", 4);
  uint32_t n = static_cast<uint32_t>(labels.size());
  f.write(reinterpret_cast<const char*>(&n), 4);
  f.write(reinterpret_cast<const char*>(labels.data()),
          static_cast<std::streamsize>(labels.size()));
  CM_CHECK(f.good(), "write failed: " << path);
}

inline std::vector<uint8_t> read_labels(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open labels: " << path);
  char magic[4];
  f.read(magic, 4);
  CM_CHECK(f.good() && std::memcmp(magic, "SEG1", 4) == 0,
           "bad label magic in " << path);
  uint32_t n = 0;
  f.read(reinterpret_cast<char*>(&n), 4);
  std::vector<uint8_t> labels(n);
  f.read(reinterpret_cast<char*>(labels.data()), n);
  CM_CHECK(f.good(), "truncated label file: " << path);
  return labels;
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open: " << path);
  std::ostringstream oss;
  oss << f.rdbuf();
  return oss.str();
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  CM_CHECK(f.good(), "cannot open for writing: " << path);
  f << text;
  CM_CHECK(f.good(), "write failed: " << path);
}

}  // namespace crossmodal
