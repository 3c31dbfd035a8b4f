#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "rarma/grid.hpp"

namespace rarma {

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// CSV matrix format: a "rows,cols" header line, then row-major values with
/// 17 significant digits (lossless double round-trip).
inline void write_matrix_csv(const std::string& path, const Grid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << grid.rows() << "," << grid.cols() << "\n";
  char buf[40];
  for (Eigen::Index n = 0; n < grid.rows(); ++n) {
    for (Eigen::Index m = 0; m < grid.cols(); ++m) {
      std::snprintf(buf, sizeof(buf), "%.17g", grid(n, m));
      out << buf << (m + 1 < grid.cols() ? "," : "\n");
    }
  }
  if (!out) throw IoError("write failed: " + path);
}

inline Grid read_matrix_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string header;
  if (!std::getline(in, header)) throw IoError("empty matrix file: " + path);
  Eigen::Index rows = 0, cols = 0;
  {
    std::istringstream hs(header);
    char comma = 0;
    if (!(hs >> rows >> comma >> cols) || comma != ',' || rows < 1 || cols < 1)
      throw IoError("bad matrix header (want rows,cols): " + path);
  }
  Grid grid(rows, cols);
  Eigen::Index count = 0;
  std::string token;
  while (count < rows * cols) {
    int c = in.peek();
    if (c == EOF) break;
    if (c == ',' || std::isspace(c)) {
      in.get();
      continue;
    }
    if (!(in >> token)) break;
    // strip trailing separators picked up by >>
    while (!token.empty() && (token.back() == ',' || std::isspace(static_cast<unsigned char>(token.back()))))
      token.pop_back();
    std::size_t parsed = 0;
    double v = 0.0;
    try {
      v = std::stod(token, &parsed);
    } catch (const std::exception&) {
      throw IoError("bad numeric value '" + token + "' in " + path);
    }
    if (parsed != token.size()) {
      // allow "a,b" fused tokens by splitting on commas
      std::istringstream ts(token);
      std::string piece;
      while (std::getline(ts, piece, ',')) {
        if (piece.empty()) continue;
        if (count >= rows * cols) throw IoError("too many values in " + path);
        try {
          grid(count / cols, count % cols) = std::stod(piece);
        } catch (const std::exception&) {
          throw IoError("bad numeric value '" + piece + "' in " + path);
        }
        ++count;
      }
      continue;
    }
    grid(count / cols, count % cols) = v;
    ++count;
  }
  if (count != rows * cols)
    throw IoError("matrix value count mismatch in " + path + ": expected " +
                  std::to_string(rows * cols) + ", got " + std::to_string(count));
  return grid;
}

struct PgmImage {
  Eigen::ArrayXXi pixels;
  int maxval = 255;
};

namespace detail {

inline int pgm_next_int(std::istream& in, const std::string& path) {
  // skip whitespace and '#' comments
  for (;;) {
    int c = in.peek();
    if (c == EOF) throw IoError("truncated PGM: " + path);
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      continue;
    }
    if (std::isspace(c)) {
      in.get();
      continue;
    }
    break;
  }
  int v = 0;
  if (!(in >> v)) throw IoError("bad PGM token: " + path);
  return v;
}

}  // namespace detail

/// P2 (ASCII) and P5 (binary) PGM, 8- or 16-bit. 16-bit P5 rasters are
/// big-endian per the format.
inline PgmImage read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open: " + path);
  std::string magic;
  in >> magic;
  if (magic != "P2" && magic != "P5") throw IoError("not a PGM (P2/P5) file: " + path);
  const int cols = detail::pgm_next_int(in, path);
  const int rows = detail::pgm_next_int(in, path);
  const int maxval = detail::pgm_next_int(in, path);
  if (rows < 1 || cols < 1 || maxval < 1 || maxval > 65535)
    throw IoError("bad PGM dimensions or maxval: " + path);

  PgmImage img;
  img.maxval = maxval;
  img.pixels.resize(rows, cols);

  if (magic == "P2") {
    for (Eigen::Index n = 0; n < rows; ++n)
      for (Eigen::Index m = 0; m < cols; ++m) img.pixels(n, m) = detail::pgm_next_int(in, path);
  } else {
    in.get();  // single whitespace after maxval
    const bool wide = maxval > 255;
    const std::size_t need = static_cast<std::size_t>(rows) * cols * (wide ? 2 : 1);
    std::string raster(need, '\0');
    in.read(raster.data(), static_cast<std::streamsize>(need));
    if (static_cast<std::size_t>(in.gcount()) != need) throw IoError("truncated PGM raster: " + path);
    std::size_t pos = 0;
    for (Eigen::Index n = 0; n < rows; ++n)
      for (Eigen::Index m = 0; m < cols; ++m) {
        const auto hi = static_cast<std::uint8_t>(raster[pos++]);
        if (wide) {
          const auto lo = static_cast<std::uint8_t>(raster[pos++]);
          img.pixels(n, m) = (static_cast<int>(hi) << 8) | lo;
        } else {
          img.pixels(n, m) = hi;
        }
      }
  }
  return img;
}

/// Ingestion convention for PGM pixels: v -> (v+1)/(maxval+1) in (0, 1],
/// which keeps the log link away from zero.
inline ImageGrid pgm_to_amplitudes(const PgmImage& img) {
  Grid g(img.pixels.rows(), img.pixels.cols());
  const double denom = img.maxval + 1.0;
  for (Eigen::Index n = 0; n < g.rows(); ++n)
    for (Eigen::Index m = 0; m < g.cols(); ++m) g(n, m) = (img.pixels(n, m) + 1.0) / denom;
  return ImageGrid(std::move(g));
}

/// Bilevel mask as binary P5 (0 / 255).
inline void write_pgm_mask(const std::string& path, const Mask& mask) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "P5\n" << mask.cols() << " " << mask.rows() << "\n255\n";
  for (Eigen::Index n = 0; n < mask.rows(); ++n)
    for (Eigen::Index m = 0; m < mask.cols(); ++m)
      out.put(mask(n, m) ? static_cast<char>(255) : static_cast<char>(0));
  if (!out) throw IoError("write failed: " + path);
}

/// 8-bit preview of an amplitude grid, linearly scaled to its maximum.
inline void write_pgm_preview(const std::string& path, const Grid& grid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  double peak = 0.0;
  for (Eigen::Index n = 0; n < grid.rows(); ++n)
    for (Eigen::Index m = 0; m < grid.cols(); ++m)
      if (std::isfinite(grid(n, m))) peak = std::max(peak, grid(n, m));
  if (peak <= 0.0) peak = 1.0;
  out << "P5\n" << grid.cols() << " " << grid.rows() << "\n255\n";
  for (Eigen::Index n = 0; n < grid.rows(); ++n)
    for (Eigen::Index m = 0; m < grid.cols(); ++m) {
      const double v = grid(n, m);
      const int px = std::isfinite(v) ? static_cast<int>(255.0 * std::max(0.0, v) / peak + 0.5) : 0;
      out.put(static_cast<char>(std::min(px, 255)));
    }
  if (!out) throw IoError("write failed: " + path);
}

inline bool has_suffix(const std::string& s, const std::string& suffix) {
  return s.size() >= suffix.size() && s.compare(s.size() - suffix.size(), suffix.size(), suffix) == 0;
}

/// Load amplitudes from CSV or PGM (by extension). PGM pixels go through the
/// (v+1)/(maxval+1) normalization; CSV values are used as-is with nonpositive
/// entries lifted to `floor`.
inline Ingested load_amplitudes(const std::string& path, double floor = 1e-10) {
  if (has_suffix(path, ".pgm") || has_suffix(path, ".PGM"))
    return Ingested{pgm_to_amplitudes(read_pgm(path)), 0};
  return ingest(read_matrix_csv(path), floor);
}

}  // namespace rarma
