#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "zinbsf/errors.hpp"
#include "zinbsf/inference/draws.hpp"
#include "zinbsf/spatial/moran_basis.hpp"

namespace zinbsf::io {

/// Packed little-endian matrix container.
///
///   offset  size  field
///   0       4     magic "ZNBS"
///   4       4     u32 format version (1)
///   8       4     u32 payload kind (1 draws, 2 pointwise log-likelihood, 3 Moran basis)
///   12      8     u64 chain count (rows are stored chain-major, equal rows per chain)
///   20      8     u64 rows
///   28      8     u64 cols
///   36      8     u64 byte length L of the label block
///   44      L     labels, UTF-8, separated by '\n'
///   44+L    8*rows*cols   f64 values, row-major
///
/// Labels: parameter names for draws, "county_id:year" per unit for
/// log-likelihoods, county ids for a basis. A basis is stored with one row
/// per basis vector: column 0 holds the eigenvalue, columns 1..n the entries.
enum class PayloadKind : std::uint32_t { draws = 1, pointwise_loglik = 2, basis = 3 };

inline constexpr std::uint32_t kFormatVersion = 1;

struct MatrixFile {
  PayloadKind kind = PayloadKind::draws;
  std::uint64_t n_chains = 1;
  std::vector<std::string> labels;
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> data;
};

namespace detail {

template <typename T>
void put_le(std::string& buf, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  const U u = std::bit_cast<U>(v);
  for (std::size_t i = 0; i < sizeof(U); ++i) buf.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
}

template <typename T>
T get_le(const unsigned char* p) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U u = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) u |= static_cast<U>(p[i]) << (8 * i);
  return std::bit_cast<T>(u);
}

} // namespace detail

inline void write_matrix_file(const std::string& path, const MatrixFile& f) {
  std::string labels;
  for (std::size_t i = 0; i < f.labels.size(); ++i) {
    if (i) labels += '\n';
    labels += f.labels[i];
  }
  std::string buf = "ZNBS";
  detail::put_le(buf, kFormatVersion);
  detail::put_le(buf, static_cast<std::uint32_t>(f.kind));
  detail::put_le(buf, f.n_chains);
  detail::put_le(buf, static_cast<std::uint64_t>(f.data.rows()));
  detail::put_le(buf, static_cast<std::uint64_t>(f.data.cols()));
  detail::put_le(buf, static_cast<std::uint64_t>(labels.size()));
  buf += labels;
  buf.reserve(buf.size() + 8 * static_cast<std::size_t>(f.data.size()));
  for (Eigen::Index r = 0; r < f.data.rows(); ++r)
    for (Eigen::Index c = 0; c < f.data.cols(); ++c) detail::put_le(buf, f.data(r, c));
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write '" + path + "'");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw InputError("failed writing '" + path + "'");
}

inline MatrixFile read_matrix_file(const std::string& path, PayloadKind expected) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open '" + path + "'");
  const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  constexpr std::size_t header = 44;
  if (bytes.size() < header || std::memcmp(bytes.data(), "ZNBS", 4) != 0)
    throw InputError(path + ": not a ZNBS file (bad magic)");
  const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
  if (version != kFormatVersion)
    throw InputError(path + ": unsupported ZNBS version " + std::to_string(version));
  MatrixFile f;
  f.kind = static_cast<PayloadKind>(detail::get_le<std::uint32_t>(bytes.data() + 8));
  if (f.kind != expected)
    throw InputError(path + ": payload kind " + std::to_string(static_cast<std::uint32_t>(f.kind)) + ", expected " +
                     std::to_string(static_cast<std::uint32_t>(expected)));
  f.n_chains = detail::get_le<std::uint64_t>(bytes.data() + 12);
  const auto rows = detail::get_le<std::uint64_t>(bytes.data() + 20);
  const auto cols = detail::get_le<std::uint64_t>(bytes.data() + 28);
  const auto label_len = detail::get_le<std::uint64_t>(bytes.data() + 36);
  if (label_len > bytes.size() - header || rows * cols * 8 != bytes.size() - header - label_len)
    throw InputError(path + ": truncated or inconsistent ZNBS payload");
  if (f.n_chains == 0 || rows % f.n_chains != 0) throw InputError(path + ": row count not divisible by chain count");
  std::string labels(reinterpret_cast<const char*>(bytes.data() + header), label_len);
  if (!labels.empty() || cols > 0) {
    std::size_t start = 0;
    for (;;) {
      const auto pos = labels.find('\n', start);
      f.labels.push_back(labels.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
      if (pos == std::string::npos) break;
      start = pos + 1;
    }
  }
  f.data.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  const unsigned char* p = bytes.data() + header + label_len;
  for (Eigen::Index r = 0; r < f.data.rows(); ++r)
    for (Eigen::Index c = 0; c < f.data.cols(); ++c, p += 8) f.data(r, c) = detail::get_le<double>(p);
  return f;
}

inline void write_draws(const std::string& path, const DrawTable& t) {
  MatrixFile f;
  f.kind = PayloadKind::draws;
  f.n_chains = t.n_chains();
  f.labels = t.names;
  f.data = t.pooled();
  write_matrix_file(path, f);
}

inline DrawTable read_draws(const std::string& path) {
  MatrixFile f = read_matrix_file(path, PayloadKind::draws);
  if (f.labels.size() != static_cast<std::size_t>(f.data.cols()))
    throw InputError(path + ": label count does not match column count");
  DrawTable t;
  t.names = std::move(f.labels);
  const Eigen::Index per = f.data.rows() / static_cast<Eigen::Index>(f.n_chains);
  for (std::uint64_t c = 0; c < f.n_chains; ++c)
    t.chains.emplace_back(f.data.middleRows(static_cast<Eigen::Index>(c) * per, per));
  return t;
}

inline void write_pointwise(const std::string& path, const Eigen::MatrixXd& ll, std::uint64_t n_chains,
                            std::vector<std::string> unit_labels) {
  MatrixFile f;
  f.kind = PayloadKind::pointwise_loglik;
  f.n_chains = n_chains;
  f.labels = std::move(unit_labels);
  f.data = ll;
  write_matrix_file(path, f);
}

inline Eigen::MatrixXd read_pointwise(const std::string& path, std::vector<std::string>* labels = nullptr) {
  MatrixFile f = read_matrix_file(path, PayloadKind::pointwise_loglik);
  if (labels) *labels = std::move(f.labels);
  return f.data;
}

inline void write_basis(const std::string& path, const MoranBasis& b, const std::vector<std::string>& county_ids) {
  MatrixFile f;
  f.kind = PayloadKind::basis;
  f.labels = county_ids;
  f.data.resize(b.q(), b.n_counties() + 1);
  for (int j = 0; j < b.q(); ++j) {
    f.data(j, 0) = b.eigenvalues[j];
    f.data.row(j).tail(b.n_counties()) = b.vectors.col(j).transpose();
  }
  write_matrix_file(path, f);
}

inline MoranBasis read_basis(const std::string& path, std::vector<std::string>* county_ids = nullptr) {
  MatrixFile f = read_matrix_file(path, PayloadKind::basis);
  MoranBasis b;
  const Eigen::Index n = f.data.cols() - 1;
  if (n < 1 || static_cast<std::size_t>(n) != f.labels.size()) throw InputError(path + ": malformed basis payload");
  b.eigenvalues = f.data.col(0);
  b.vectors = f.data.rightCols(n).transpose();
  b.requested_q = b.q();
  if (county_ids) *county_ids = std::move(f.labels);
  return b;
}

} // namespace zinbsf::io
