#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "doctest.h"
#include "rpcag/errors.hpp"
#include "rpcag/matrixio.hpp"
#include "test_util.hpp"

using namespace rpcag;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
  std::ofstream(p, std::ios::binary) << s;
}

std::vector<unsigned char> raw_bytes(std::uint64_t p, std::uint64_t n, const std::vector<double>& v) {
  std::vector<unsigned char> out(16 + 8 * v.size());
  for (int b = 0; b < 8; ++b) {
    out[b] = static_cast<unsigned char>(p >> (8 * b));
    out[8 + b] = static_cast<unsigned char>(n >> (8 * b));
  }
  for (std::size_t k = 0; k < v.size(); ++k) {
    std::uint64_t bits;
    std::memcpy(&bits, &v[k], 8);
    for (int b = 0; b < 8; ++b) out[16 + 8 * k + b] = static_cast<unsigned char>(bits >> (8 * b));
  }
  return out;
}

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()),
                                           static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("csv loads a rectangular table") {
  test::TempDir dir("csv");
  write_text(dir / "x.csv", "1,2\n3,4");
  const DataMatrix m = load_matrix(dir / "x.csv");
  CHECK(m.features() == 2);
  CHECK(m.samples() == 2);
  CHECK(m.values()(0, 1) == 2.0);
  CHECK(m.values()(1, 0) == 3.0);
}

TEST_CASE("csv errors") {
  CHECK_THROWS_AS(parse_csv("1,2,3\n4,5\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("1,x\n"), ParseError);
  CHECK_THROWS_AS(parse_csv("\n\n"), ParseError);
  test::TempDir dir("csverr");
  write_text(dir / "nan.csv", "1,nan\n2,3\n");
  CHECK_THROWS_AS(load_matrix(dir / "nan.csv"), DataError);
  write_text(dir / "inf.csv", "1,inf\n");
  CHECK_THROWS_AS(load_matrix(dir / "inf.csv"), DataError);
}

TEST_CASE("raw-f64 payload is column-major") {
  test::TempDir dir("raw");
  write_bytes(dir / "x.raw", raw_bytes(2, 3, {1, 2, 3, 4, 5, 6}));
  const DataMatrix m = load_matrix(dir / "x.raw");
  REQUIRE(m.features() == 2);
  REQUIRE(m.samples() == 3);
  CHECK(m.values()(0, 0) == 1.0);
  CHECK(m.values()(1, 0) == 2.0);
  CHECK(m.values()(0, 2) == 5.0);
}

TEST_CASE("raw-f64 header mismatch is a FormatError") {
  test::TempDir dir("rawbad");
  write_bytes(dir / "short.raw", raw_bytes(2, 3, {1, 2, 3, 4, 5}));
  CHECK_THROWS_AS(load_matrix(dir / "short.raw"), FormatError);
  write_bytes(dir / "hdr.raw", {1, 2, 3});
  CHECK_THROWS_AS(load_matrix(dir / "hdr.raw"), FormatError);
  write_bytes(dir / "empty.raw", raw_bytes(0, 3, {}));
  CHECK_THROWS_AS(load_matrix(dir / "empty.raw"), FormatError);
  write_bytes(dir / "nan.raw", raw_bytes(1, 1, {std::nan("")}));
  CHECK_THROWS_AS(load_matrix(dir / "nan.raw"), DataError);
}

TEST_CASE("raw-f64 save/load is bit-exact on random matrices") {
  test::TempDir dir("rt");
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    std::uniform_int_distribution<int> dim(1, 9);
    Matrix m = test::random_matrix(dim(rng), dim(rng), rng, 1e3);
    m(0, 0) = 1e-310;  // subnormal
    save_matrix(dir / "m.raw", m);
    const Matrix back = load_matrix(dir / "m.raw").values();
    REQUIRE(back.rows() == m.rows());
    CHECK(std::memcmp(back.data(), m.data(), sizeof(double) * m.size()) == 0);

    save_matrix(dir / "m.csv", m);
    CHECK((load_matrix(dir / "m.csv").values().array() == m.array()).all());
  }
}

TEST_CASE("mask files round-trip and reject non-binary bytes") {
  test::TempDir dir("mask");
  ObservationMask::Bits bits(2, 3);
  bits << true, false, true, true, true, false;
  save_mask(dir / "m.raw", ObservationMask(bits));
  CHECK(load_mask(dir / "m.raw") == ObservationMask(bits));

  std::vector<unsigned char> bad = raw_bytes(1, 2, {});
  bad.push_back(1);
  bad.push_back(2);
  write_bytes(dir / "bad.raw", bad);
  CHECK_THROWS_AS(load_mask(dir / "bad.raw"), FormatError);
}

TEST_CASE("standardize with sample standard deviation") {
  Matrix x(3, 4);
  x << 1, 3, 1, 3,   //
      5, 5, 5, 5,    //
      0, 0, 3, 3;
  const Matrix z = standardize(DataMatrix(x)).values();
  // Row [0,0,3,3]: mean 1.5, sample sd sqrt(9/3) = sqrt(3); (0-1.5)/sqrt(3).
  const double v = 1.5 / std::sqrt(3.0);
  CHECK(z(2, 0) == doctest::Approx(-v).epsilon(1e-14));
  CHECK(z(2, 3) == doctest::Approx(v).epsilon(1e-14));
  CHECK(v == doctest::Approx(0.8660254037844386));
  CHECK(z.row(1).isZero());

  Matrix two(1, 2);
  two << 1, 3;
  const Matrix t = standardize(DataMatrix(two)).values();
  CHECK(t(0, 0) == doctest::Approx(-1.0 / std::sqrt(2.0)));
  CHECK(t(0, 1) == doctest::Approx(1.0 / std::sqrt(2.0)));

  CHECK_THROWS_AS(standardize(DataMatrix(Matrix::Ones(3, 1))), DataError);
}

TEST_CASE("standardize is idempotent") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const DataMatrix x(test::random_matrix(6, 9, rng, 3.0).array() + 2.0);
    const DataMatrix once = standardize(x);
    const DataMatrix twice = standardize(once);
    CHECK((once.values() - twice.values()).cwiseAbs().maxCoeff() <= 1e-12);
    for (Index i = 0; i < 6; ++i) {
      CHECK(std::abs(once.values().row(i).mean()) <= 1e-12);
      CHECK(once.values().row(i).squaredNorm() / 8.0 == doctest::Approx(1.0).epsilon(1e-12));
    }
  }
}

TEST_CASE("missing-uniform corruption counts and determinism") {
  const DataMatrix x(Matrix::Constant(4, 4, 2.0));
  const CorruptedData c = apply_corruption(x, CorruptionKind::missing_uniform, 0.25, 5);
  CHECK(c.mask.missing_count() == 4);
  CHECK((c.data.values().array() == 0.0).count() == 4);
  for (Index j = 0; j < 4; ++j) CHECK((!c.mask.bits().col(j)).count() == 1);
  for (Index j = 0; j < 4; ++j)
    for (Index i = 0; i < 4; ++i) CHECK((c.data.values()(i, j) == 0.0) == !c.mask.observed(i, j));

  const CorruptedData again = apply_corruption(x, CorruptionKind::missing_uniform, 0.25, 5);
  CHECK(again.mask == c.mask);
  CHECK(again.data.values() == c.data.values());

  std::mt19937_64 rng(3);
  for (double f : {0.1, 0.33, 0.5, 0.9}) {
    const DataMatrix y(test::random_matrix(17, 6, rng).array() + 10.0);
    const auto out = apply_corruption(y, CorruptionKind::missing_uniform, f, 9);
    const auto per_col = static_cast<Index>(std::ceil(f * 17 - 1e-9));
    CHECK(out.mask.missing_count() == per_col * 6);
  }
}

TEST_CASE("block occlusion zeroes one square per column") {
  const ImageShape shape{8, 8};
  const DataMatrix x(Matrix::Constant(64, 3, 1.0), shape);
  const CorruptedData c = apply_corruption(x, CorruptionKind::block_occlusion, 0.25, 42);
  for (Index j = 0; j < 3; ++j) {
    // Scan for the bounding box of zeros; it must be a filled 4x4 square.
    Index rmin = 8, rmax = -1, cmin = 8, cmax = -1, zeros = 0;
    for (Index col = 0; col < 8; ++col)
      for (Index row = 0; row < 8; ++row)
        if (c.data.values()(shape.offset(row, col), j) == 0.0) {
          ++zeros;
          rmin = std::min(rmin, row);
          rmax = std::max(rmax, row);
          cmin = std::min(cmin, col);
          cmax = std::max(cmax, col);
        }
    CHECK(zeros == 16);
    CHECK(rmax - rmin == 3);
    CHECK(cmax - cmin == 3);
  }
  CHECK(c.mask.missing_count() == 48);
}

TEST_CASE("corruption configuration errors") {
  const DataMatrix x(Matrix::Ones(16, 2), ImageShape{4, 4});
  CHECK_THROWS_AS(apply_corruption(x, CorruptionKind::missing_uniform, 0.0, 1), ConfigError);
  CHECK_THROWS_AS(apply_corruption(x, CorruptionKind::missing_uniform, 1.0, 1), ConfigError);
  CHECK_THROWS_AS(apply_corruption(DataMatrix(Matrix::Ones(16, 2)),
                                   CorruptionKind::block_occlusion, 0.25, 1),
                  ConfigError);
  // 16 x 1 image: side floor(sqrt(0.5 * 16)) = 2 exceeds the width of 1.
  const DataMatrix thin(Matrix::Ones(16, 2), ImageShape{16, 1});
  CHECK_THROWS_AS(apply_corruption(thin, CorruptionKind::block_occlusion, 0.5, 1), ConfigError);
}

TEST_CASE("DataMatrix invariants") {
  CHECK_THROWS_AS(DataMatrix(Matrix(0, 3)), DataError);
  Matrix bad = Matrix::Ones(2, 2);
  bad(1, 1) = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(DataMatrix{bad}, DataError);
  CHECK_THROWS_AS(DataMatrix(Matrix::Ones(6, 2), ImageShape{2, 2}), DataError);
}
