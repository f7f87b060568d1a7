#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>

#include <Eigen/Core>

namespace rpcag {

using Index = Eigen::Index;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Geometry of a vectorized image column. Pixel (r, c) lives at row
// r + c * height of its column (column-major, as in MATLAB's X(:)).
struct ImageShape {
  Index height = 0;
  Index width = 0;

  Index pixels() const noexcept { return height * width; }
  Index offset(Index r, Index c) const noexcept { return r + c * height; }
  friend bool operator==(const ImageShape&, const ImageShape&) = default;
};

// p x n data matrix: rows are features, columns are samples. Entries are
// finite and both dimensions are at least one.
class DataMatrix {
 public:
  explicit DataMatrix(Matrix values, std::optional<ImageShape> image = std::nullopt);

  const Matrix& values() const noexcept { return values_; }
  Index features() const noexcept { return values_.rows(); }
  Index samples() const noexcept { return values_.cols(); }
  const std::optional<ImageShape>& image_shape() const noexcept { return image_; }

  DataMatrix with_image_shape(ImageShape shape) const;

 private:
  Matrix values_;
  std::optional<ImageShape> image_;
};

// Per-entry observation flags; true means the feature was observed.
class ObservationMask {
 public:
  using Bits = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic>;

  explicit ObservationMask(Bits bits) : bits_(std::move(bits)) {}
  static ObservationMask all_observed(Index rows, Index cols);

  const Bits& bits() const noexcept { return bits_; }
  Index rows() const noexcept { return bits_.rows(); }
  Index cols() const noexcept { return bits_.cols(); }
  bool observed(Index i, Index j) const { return bits_(i, j); }
  Index missing_count() const { return bits_.size() - bits_.count(); }

  friend bool operator==(const ObservationMask& a, const ObservationMask& b) {
    return a.rows() == b.rows() && a.cols() == b.cols() && (a.bits_ == b.bits_).all();
  }

 private:
  Bits bits_;
};

enum class MatrixFormat { csv, raw_f64 };

// ".csv" selects csv; everything else is raw-f64.
MatrixFormat format_for_path(const std::filesystem::path& path);

DataMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format);
inline DataMatrix load_matrix(const std::filesystem::path& path) {
  return load_matrix(path, format_for_path(path));
}

// csv uses 17 significant digits so doubles round-trip.
void save_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format);
inline void save_matrix(const std::filesystem::path& path, const Matrix& m) {
  save_matrix(path, m, format_for_path(path));
}

ObservationMask load_mask(const std::filesystem::path& path);
void save_mask(const std::filesystem::path& path, const ObservationMask& mask);

// Text parsing entry point used by load_matrix for csv.
Matrix parse_csv(std::string_view text);

// Zero mean, unit sample standard deviation per feature row. Rows with zero
// variance are only centered.
DataMatrix standardize(const DataMatrix& x);

enum class CorruptionKind { block_occlusion, missing_uniform };

struct CorruptedData {
  DataMatrix data;
  ObservationMask mask;
};

// missing-uniform zeroes ceil(fraction * p) entries per column chosen
// uniformly without replacement. block-occlusion zeroes one square block of
// side floor(sqrt(fraction * p)) per column at a uniform random position and
// requires the matrix to carry an ImageShape.
CorruptedData apply_corruption(const DataMatrix& x, CorruptionKind kind, double fraction,
                               std::uint64_t seed);

}  // namespace rpcag
