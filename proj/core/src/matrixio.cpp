#include "rpcag/matrixio.hpp"

#include <algorithm>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "rpcag/errors.hpp"
#include "rpcag/random.hpp"

namespace rpcag {

namespace {

constexpr std::size_t kHeaderBytes = 16;

std::uint64_t load_le_u64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

void store_le_u64(unsigned char* p, std::uint64_t v) {
  for (int b = 0; b < 8; ++b) p[b] = static_cast<unsigned char>(v >> (8 * b));
}

std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to " + path.string());
}

// Returns (p, n) after checking the payload size against the header.
std::pair<Index, Index> read_header(const std::vector<unsigned char>& bytes,
                                    std::size_t element_size, const std::string& what) {
  if (bytes.size() < kHeaderBytes) throw FormatError(what + ": file shorter than header");
  const std::uint64_t p = load_le_u64(bytes.data());
  const std::uint64_t n = load_le_u64(bytes.data() + 8);
  const std::size_t payload = bytes.size() - kHeaderBytes;
  if (p == 0 || n == 0) throw FormatError(what + ": header declares an empty matrix");
  if (p > payload || n > payload || p * n * element_size != payload) {
    std::ostringstream msg;
    msg << what << ": header declares " << p << "x" << n << " but payload has " << payload
        << " bytes";
    throw FormatError(msg.str());
  }
  return {static_cast<Index>(p), static_cast<Index>(n)};
}

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

void check_finite(const Matrix& m) {
  for (Index j = 0; j < m.cols(); ++j)
    for (Index i = 0; i < m.rows(); ++i)
      if (!std::isfinite(m(i, j))) {
        std::ostringstream msg;
        msg << "non-finite entry at (" << i << ", " << j << ")";
        throw DataError(msg.str());
      }
}

}  // namespace

DataMatrix::DataMatrix(Matrix values, std::optional<ImageShape> image)
    : values_(std::move(values)), image_(image) {
  if (values_.rows() < 1 || values_.cols() < 1) throw DataError("data matrix must be non-empty");
  check_finite(values_);
  if (image_ && image_->pixels() != values_.rows())
    throw DataError("image shape does not match the feature count");
}

DataMatrix DataMatrix::with_image_shape(ImageShape shape) const {
  return DataMatrix(values_, shape);
}

ObservationMask ObservationMask::all_observed(Index rows, Index cols) {
  return ObservationMask(Bits::Constant(rows, cols, true));
}

MatrixFormat format_for_path(const std::filesystem::path& path) {
  auto ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) {
    return static_cast<char>(std::tolower(c));
  });
  return ext == ".csv" ? MatrixFormat::csv : MatrixFormat::raw_f64;
}

Matrix parse_csv(std::string_view text) {
  std::vector<std::vector<double>> rows;
  std::size_t line_no = 0;
  while (!text.empty()) {
    const auto eol = text.find('\n');
    std::string_view line = trim(text.substr(0, eol));
    text = eol == std::string_view::npos ? std::string_view{} : text.substr(eol + 1);
    ++line_no;
    if (line.empty()) continue;

    std::vector<double> row;
    while (true) {
      const auto comma = line.find(',');
      std::string_view token = trim(line.substr(0, comma));
      double value = 0.0;
      auto [ptr, ec] = std::from_chars(token.data(), token.data() + token.size(), value);
      if (token.empty() || ec != std::errc{} || ptr != token.data() + token.size())
        throw ParseError("line " + std::to_string(line_no) + ": invalid number '" +
                         std::string(token) + "'");
      row.push_back(value);
      if (comma == std::string_view::npos) break;
      line = line.substr(comma + 1);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(rows.front().size()) + " columns, found " +
                       std::to_string(row.size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ParseError("no data rows");

  Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) m(i, j) = rows[i][j];
  return m;
}

DataMatrix load_matrix(const std::filesystem::path& path, MatrixFormat format) {
  const auto bytes = read_file(path);
  if (format == MatrixFormat::csv) {
    std::string_view text(reinterpret_cast<const char*>(bytes.data()), bytes.size());
    return DataMatrix(parse_csv(text));
  }

  const auto [p, n] = read_header(bytes, sizeof(double), path.string());
  Matrix m(p, n);
  const unsigned char* payload = bytes.data() + kHeaderBytes;
  for (Index k = 0; k < p * n; ++k)
    m.data()[k] = std::bit_cast<double>(load_le_u64(payload + 8 * k));
  return DataMatrix(std::move(m));
}

void save_matrix(const std::filesystem::path& path, const Matrix& m, MatrixFormat format) {
  if (format == MatrixFormat::csv) {
    std::ostringstream os;
    os.precision(17);
    for (Index i = 0; i < m.rows(); ++i) {
      for (Index j = 0; j < m.cols(); ++j) {
        if (j) os << ',';
        os << m(i, j);
      }
      os << '\n';
    }
    const std::string s = os.str();
    write_file(path, std::vector<unsigned char>(s.begin(), s.end()));
    return;
  }

  std::vector<unsigned char> bytes(kHeaderBytes + 8 * static_cast<std::size_t>(m.size()));
  store_le_u64(bytes.data(), static_cast<std::uint64_t>(m.rows()));
  store_le_u64(bytes.data() + 8, static_cast<std::uint64_t>(m.cols()));
  // Eigen's default storage is column-major, matching the on-disk order.
  for (Index k = 0; k < m.size(); ++k)
    store_le_u64(bytes.data() + kHeaderBytes + 8 * k, std::bit_cast<std::uint64_t>(m.data()[k]));
  write_file(path, bytes);
}

ObservationMask load_mask(const std::filesystem::path& path) {
  const auto bytes = read_file(path);
  const auto [p, n] = read_header(bytes, 1, path.string());
  ObservationMask::Bits bits(p, n);
  const unsigned char* payload = bytes.data() + kHeaderBytes;
  for (Index k = 0; k < p * n; ++k) {
    if (payload[k] > 1) throw FormatError(path.string() + ": mask bytes must be 0 or 1");
    bits.data()[k] = payload[k] == 1;
  }
  return ObservationMask(std::move(bits));
}

void save_mask(const std::filesystem::path& path, const ObservationMask& mask) {
  const auto& bits = mask.bits();
  std::vector<unsigned char> bytes(kHeaderBytes + static_cast<std::size_t>(bits.size()));
  store_le_u64(bytes.data(), static_cast<std::uint64_t>(bits.rows()));
  store_le_u64(bytes.data() + 8, static_cast<std::uint64_t>(bits.cols()));
  for (Index k = 0; k < bits.size(); ++k) bytes[kHeaderBytes + k] = bits.data()[k] ? 1 : 0;
  write_file(path, bytes);
}

DataMatrix standardize(const DataMatrix& x) {
  const Index n = x.samples();
  if (n < 2) throw DataError("standardize needs at least two samples");
  Matrix out = x.values();
  for (Index i = 0; i < out.rows(); ++i) {
    auto row = out.row(i);
    const double mean = row.mean();
    row.array() -= mean;
    const double var = row.squaredNorm() / static_cast<double>(n - 1);
    const double sd = std::sqrt(var);
    if (sd > 0.0) row /= sd;
  }
  return DataMatrix(std::move(out), x.image_shape());
}

CorruptedData apply_corruption(const DataMatrix& x, CorruptionKind kind, double fraction,
                               std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("corruption fraction must lie in (0, 1)");

  const Index p = x.features();
  const Index n = x.samples();
  Matrix values = x.values();
  ObservationMask::Bits bits = ObservationMask::Bits::Constant(p, n, true);
  Rng rng(seed);

  if (kind == CorruptionKind::missing_uniform) {
    // Guard against ceil() bumping exact products such as 0.25 * 4 by an ulp.
    const auto per_column = static_cast<Index>(
        std::ceil(fraction * static_cast<double>(p) * (1.0 - 1e-12)));
    std::vector<Index> rows(static_cast<std::size_t>(p));
    for (Index j = 0; j < n; ++j) {
      std::iota(rows.begin(), rows.end(), Index{0});
      // Partial Fisher-Yates: the first per_column slots are the sample.
      for (Index k = 0; k < per_column; ++k) {
        std::uniform_int_distribution<Index> pick(k, p - 1);
        std::swap(rows[k], rows[pick(rng)]);
        values(rows[k], j) = 0.0;
        bits(rows[k], j) = false;
      }
    }
  } else {
    if (!x.image_shape()) throw ConfigError("block occlusion requires image height/width");
    const ImageShape shape = *x.image_shape();
    const auto side = static_cast<Index>(
        std::floor(std::sqrt(fraction * static_cast<double>(p)) + 1e-9));
    if (side < 1) throw ConfigError("occlusion block is smaller than one pixel");
    if (side > shape.height || side > shape.width)
      throw ConfigError("occlusion block exceeds the image dimensions");
    std::uniform_int_distribution<Index> top_dist(0, shape.height - side);
    std::uniform_int_distribution<Index> left_dist(0, shape.width - side);
    for (Index j = 0; j < n; ++j) {
      const Index top = top_dist(rng);
      const Index left = left_dist(rng);
      for (Index c = left; c < left + side; ++c)
        for (Index r = top; r < top + side; ++r) {
          values(shape.offset(r, c), j) = 0.0;
          bits(shape.offset(r, c), j) = false;
        }
    }
  }
  return {DataMatrix(std::move(values), x.image_shape()), ObservationMask(std::move(bits))};
}

}  // namespace rpcag
