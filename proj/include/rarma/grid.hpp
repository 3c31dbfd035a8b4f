#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <utility>

namespace rarma {

// Grids index as (n, m) = (row, col), zero-based. The math is one-based;
// the mapping is fixed here once: stored (n, m) corresponds to (n+1, m+1).
using Grid = Eigen::ArrayXXd;
using Mask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// Rectangular field of strictly positive, finite amplitudes.
class ImageGrid {
 public:
  ImageGrid() = default;

  explicit ImageGrid(Grid values) : values_(std::move(values)) {
    if (values_.rows() < 1 || values_.cols() < 1)
      throw std::invalid_argument("ImageGrid: grid must be nonempty");
    if (!values_.isFinite().all() || (values_ <= 0.0).any())
      throw std::domain_error("ImageGrid: amplitudes must be finite and > 0");
  }

  Eigen::Index rows() const { return values_.rows(); }
  Eigen::Index cols() const { return values_.cols(); }
  const Grid& values() const { return values_; }
  double operator()(Eigen::Index n, Eigen::Index m) const { return values_(n, m); }

 private:
  Grid values_;
};

struct Ingested {
  ImageGrid grid;
  long clamped = 0;  // pixels raised to the floor
};

/// Build a valid grid from raw data, lifting nonpositive pixels to `floor`
/// (the log link cannot take zeros). The number of lifted pixels is reported.
inline Ingested ingest(Grid raw, double floor = 1e-10) {
  if (floor <= 0.0) throw std::invalid_argument("ingest: floor must be > 0");
  if (!raw.isFinite().all()) throw std::domain_error("ingest: nonfinite pixel value");
  const long clamped = static_cast<long>((raw <= 0.0).count());
  if (clamped > 0) raw = raw.max(floor);
  return {ImageGrid(std::move(raw)), clamped};
}

}  // namespace rarma
