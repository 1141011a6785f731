#ifndef DIVA_IO_HPP
#define DIVA_IO_HPP

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "diva/rng.hpp"
#include "diva/types.hpp"
#include "diva/workflows.hpp"

namespace diva {

struct io_error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class MatrixFormat { csv, divm };

// ---------------------------------------------------------------------------
// CSV matrices: plain comma-separated doubles, no header row.
// ---------------------------------------------------------------------------

inline Matrix load_csv_matrix(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw io_error("cannot open " + path);
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<double> row;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      std::size_t pos = 0;
      double v = 0.0;
      try {
        v = std::stod(cell, &pos);
      } catch (const std::exception&) {
        throw io_error(path + ": row " + std::to_string(lineno) + ", column " +
                       std::to_string(row.size() + 1) + ": not a number: '" + cell + "'");
      }
      while (pos < cell.size() && std::isspace(static_cast<unsigned char>(cell[pos]))) ++pos;
      if (pos != cell.size())
        throw io_error(path + ": row " + std::to_string(lineno) + ", column " +
                       std::to_string(row.size() + 1) + ": trailing garbage in '" + cell + "'");
      if (!std::isfinite(v))
        throw io_error(path + ": row " + std::to_string(lineno) + ", column " +
                       std::to_string(row.size() + 1) + ": non-finite value");
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size())
      throw io_error(path + ": row " + std::to_string(lineno) + " has " +
                     std::to_string(row.size()) + " columns, expected " +
                     std::to_string(rows.front().size()));
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw io_error(path + ": empty matrix");
  Matrix out(Index(rows.size()), Index(rows.front().size()));
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) out(i, j) = rows[std::size_t(i)][std::size_t(j)];
  return out;
}

namespace detail {

inline std::string format_double(double v) {
  if (!std::isfinite(v)) return "null";  // JSON has no inf/nan literals
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Write via temp file + rename so partial runs never corrupt outputs.
inline void write_atomically(const std::string& path, const std::string& payload) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot write " + tmp);
    out.write(payload.data(), std::streamsize(payload.size()));
    if (!out) throw io_error("short write to " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw io_error("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

}  // namespace detail

inline void save_csv_matrix(const Matrix& mat, const std::string& path) {
  std::string payload;
  for (Index i = 0; i < mat.rows(); ++i) {
    for (Index j = 0; j < mat.cols(); ++j) {
      if (j) payload += ',';
      payload += detail::format_double(mat(i, j));
    }
    payload += '\n';
  }
  detail::write_atomically(path, payload);
}

// ---------------------------------------------------------------------------
// DIVM binary matrices. Layout, all little-endian:
//   bytes 0-3   magic "DIVM"
//   bytes 4-5   version, u16 = 1
//   bytes 6-7   reserved, u16 = 0
//   bytes 8-11  rows, u32
//   bytes 12-15 cols, u32
//   then rows*cols IEEE-754 doubles, row-major.
// ---------------------------------------------------------------------------

namespace detail {

inline void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(char(v & 0xff));
  out.push_back(char((v >> 8) & 0xff));
}

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int b = 0; b < 4; ++b) out.push_back(char((v >> (8 * b)) & 0xff));
}

inline void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  static_assert(sizeof bits == sizeof v);
  std::memcpy(&bits, &v, sizeof bits);
  for (int b = 0; b < 8; ++b) out.push_back(char((bits >> (8 * b)) & 0xff));
}

inline std::uint64_t get_le(const unsigned char* p, int bytes) {
  std::uint64_t v = 0;
  for (int b = bytes - 1; b >= 0; --b) v = (v << 8) | p[b];
  return v;
}

}  // namespace detail

inline void save_divm_matrix(const Matrix& mat, const std::string& path) {
  std::string payload;
  payload.reserve(16 + std::size_t(mat.size()) * 8);
  payload += "DIVM";
  detail::put_u16(payload, 1);
  detail::put_u16(payload, 0);
  detail::put_u32(payload, std::uint32_t(mat.rows()));
  detail::put_u32(payload, std::uint32_t(mat.cols()));
  for (Index i = 0; i < mat.rows(); ++i)
    for (Index j = 0; j < mat.cols(); ++j) detail::put_f64(payload, mat(i, j));
  detail::write_atomically(path, payload);
}

inline Matrix load_divm_matrix(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("cannot open " + path);
  std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (raw.size() < 16 || raw.compare(0, 4, "DIVM") != 0)
    throw io_error(path + ": missing DIVM magic");
  const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
  const auto version = std::uint16_t(detail::get_le(p + 4, 2));
  if (version != 1) throw io_error(path + ": unsupported DIVM version " + std::to_string(version));
  const auto rows = std::uint32_t(detail::get_le(p + 8, 4));
  const auto cols = std::uint32_t(detail::get_le(p + 12, 4));
  const std::uint64_t need = 16 + std::uint64_t(rows) * cols * 8;
  if (raw.size() != need)
    throw io_error(path + ": payload is " + std::to_string(raw.size() - 16) + " bytes, header says " +
                   std::to_string(need - 16));
  const Index out_rows = Index(rows);
  const Index out_cols = Index(cols);
  Matrix out(out_rows, out_cols);
  std::size_t at = 16;
  for (Index i = 0; i < out.rows(); ++i)
    for (Index j = 0; j < out.cols(); ++j) {
      const std::uint64_t bits = detail::get_le(p + at, 8);
      double v;
      std::memcpy(&v, &bits, sizeof v);
      out(i, j) = v;
      at += 8;
    }
  return out;
}

inline Matrix load_matrix(const std::string& path, MatrixFormat format) {
  return format == MatrixFormat::csv ? load_csv_matrix(path) : load_divm_matrix(path);
}

inline void save_matrix(const Matrix& mat, const std::string& path, MatrixFormat format) {
  if (format == MatrixFormat::csv)
    save_csv_matrix(mat, path);
  else
    save_divm_matrix(mat, path);
}

// ---------------------------------------------------------------------------
// Dataset loading: features plus labels that are either a one-hot matrix or
// a single integer class column (expanded to one-hot with k = max + 1).
// ---------------------------------------------------------------------------

inline Matrix expand_label_column(const Matrix& col, const std::string& path) {
  Index k = 0;
  for (Index i = 0; i < col.rows(); ++i) {
    const double v = col(i, 0);
    if (v != std::floor(v) || v < 0)
      throw io_error(path + ": row " + std::to_string(i + 1) +
                     ": class label must be a non-negative integer, got " +
                     detail::format_double(v));
    if (v >= 2147483648.0)
      throw io_error(path + ": row " + std::to_string(i + 1) + ": class label >= 2^31");
    k = std::max(k, Index(v) + 1);
  }
  Matrix onehot = Matrix::Zero(col.rows(), k);
  for (Index i = 0; i < col.rows(); ++i) onehot(i, Index(col(i, 0))) = 1.0;
  return onehot;
}

inline bool is_onehot(const Matrix& labels) {
  for (Index i = 0; i < labels.rows(); ++i) {
    int ones = 0;
    for (Index j = 0; j < labels.cols(); ++j) {
      if (labels(i, j) == 1.0)
        ++ones;
      else if (labels(i, j) != 0.0)
        return false;
    }
    if (ones != 1) return false;
  }
  return true;
}

inline Dataset load_dataset(const std::string& features_path, const std::string& labels_path,
                            MatrixFormat format) {
  Dataset data;
  data.features = load_matrix(features_path, format);
  Matrix labels = load_matrix(labels_path, format);
  if (labels.rows() != data.features.rows())
    throw io_error("feature/label row count mismatch: " + features_path + " has " +
                   std::to_string(data.features.rows()) + " rows, " + labels_path + " has " +
                   std::to_string(labels.rows()));
  if (labels.cols() == 1 && !is_onehot(labels)) labels = expand_label_column(labels, labels_path);
  data.labels = std::move(labels);
  data.onehot = is_onehot(data.labels);
  data.validate();
  return data;
}

// ---------------------------------------------------------------------------
// CurationReport JSON. Fixed field order and %.17g doubles, so identical
// reports are byte-identical.
// ---------------------------------------------------------------------------

inline std::string report_to_json(const CurationReport& report) {
  std::string out = "{\n  \"schema_version\": 1,\n  \"weights\": [";
  for (Index i = 0; i < report.final_weights.alpha.size(); ++i) {
    if (i) out += ", ";
    out += detail::format_double(report.final_weights.alpha[i]);
  }
  out += "],\n  \"selected_indices\": [";
  for (std::size_t i = 0; i < report.selected_indices.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(report.selected_indices[i]);
  }
  out += "],\n  \"detrimental\": [";
  for (std::size_t i = 0; i < report.detrimental.size(); ++i) {
    if (i) out += ", ";
    out += "{\"index\": " + std::to_string(report.detrimental[i].first) +
           ", \"score\": " + detail::format_double(report.detrimental[i].second) + "}";
  }
  out += "],\n  \"trajectory\": [";
  for (std::size_t i = 0; i < report.loss_trajectory.size(); ++i) {
    if (i) out += ", ";
    out += "{\"step\": " + std::to_string(report.loss_trajectory[i].first) +
           ", \"loss\": " + detail::format_double(report.loss_trajectory[i].second) + "}";
  }
  out += "],\n  \"metrics\": {";
  bool first = true;
  for (const auto& [name, value] : report.metrics) {
    if (!first) out += ", ";
    first = false;
    out += "\"" + name + "\": " + detail::format_double(value);
  }
  out += "}\n}\n";
  return out;
}

inline void save_report(const CurationReport& report, const std::string& path) {
  detail::write_atomically(path, report_to_json(report));
}

// ---------------------------------------------------------------------------
// Synthetic benchmark: Gaussian class blobs with optional label noise.
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  Index n_per_class = 100;  // per class, before the 50/50 train/test split
  Index k = 2;
  Index m = 10;
  double class_separation = 4.0;
  double noise_fraction = 0.0;  // fraction of train labels reassigned at random
  std::uint64_t seed = 0;

  void validate() const {
    require(n_per_class >= 2 && k >= 1 && m >= 1, "synthetic: degenerate sizes");
    require(class_separation > 0.0, "synthetic: class_separation must be positive");
    require(noise_fraction >= 0.0 && noise_fraction < 1.0,
            "synthetic: noise_fraction must be in [0, 1)");
    require(k >= 2 || noise_fraction == 0.0, "synthetic: label noise needs k >= 2");
  }
};

struct SyntheticData {
  Dataset train;
  Dataset test;
  std::vector<Index> flipped_indices;  // train rows whose labels were reassigned
  bool random_centers = false;         // m < k forced non-orthogonal centers
};

// Class c sits at class_separation * u_c with unit isotropic covariance;
// u_c is the c-th basis vector when m >= k, otherwise a random unit vector.
// Geometry and label flips draw from independent seeded streams, and the
// flip count is exactly round(noise_fraction * train size).
inline SyntheticData generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng geometry(spec.seed);
  std::uint64_t flip_seed_base = spec.seed ^ 0xda3e39cb94b95bdbULL;
  Rng flips(Rng::splitmix64(flip_seed_base));

  SyntheticData out;
  Matrix centers = Matrix::Zero(spec.k, spec.m);
  if (spec.m >= spec.k) {
    for (Index c = 0; c < spec.k; ++c) centers(c, c) = spec.class_separation;
  } else {
    out.random_centers = true;
    for (Index c = 0; c < spec.k; ++c) {
      Vector dir(spec.m);
      for (Index j = 0; j < spec.m; ++j) dir[j] = geometry.normal();
      centers.row(c) = spec.class_separation * dir.normalized().transpose();
    }
  }

  const Index train_per_class = (spec.n_per_class + 1) / 2;
  const Index test_per_class = spec.n_per_class - train_per_class;
  const Index n_train = train_per_class * spec.k;
  const Index n_test = test_per_class * spec.k;

  out.train.features.resize(n_train, spec.m);
  out.train.labels = Matrix::Zero(n_train, spec.k);
  out.test.features.resize(n_test, spec.m);
  out.test.labels = Matrix::Zero(n_test, spec.k);

  for (Index c = 0; c < spec.k; ++c) {
    for (Index j = 0; j < spec.n_per_class; ++j) {
      Vector x(spec.m);
      for (Index f = 0; f < spec.m; ++f) x[f] = centers(c, f) + geometry.normal();
      if (j < train_per_class) {
        const Index row = c * train_per_class + j;
        out.train.features.row(row) = x.transpose();
        out.train.labels(row, c) = 1.0;
      } else {
        const Index row = c * test_per_class + (j - train_per_class);
        out.test.features.row(row) = x.transpose();
        out.test.labels(row, c) = 1.0;
      }
    }
  }

  // pick exactly round(noise_fraction * n_train) rows via partial Fisher-Yates
  const Index n_flip = Index(std::llround(spec.noise_fraction * double(n_train)));
  if (n_flip > 0) {
    std::vector<Index> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), Index(0));
    for (Index i = 0; i < n_flip; ++i) {
      const Index j = i + Index(flips.bounded(std::uint64_t(n_train - i)));
      std::swap(order[std::size_t(i)], order[std::size_t(j)]);
    }
    out.flipped_indices.assign(order.begin(), order.begin() + n_flip);
    std::sort(out.flipped_indices.begin(), out.flipped_indices.end());
    for (const Index row : out.flipped_indices) {
      Index current = 0;
      out.train.labels.row(row).maxCoeff(&current);
      // uniform over the other k-1 classes
      Index replacement = Index(flips.bounded(std::uint64_t(spec.k - 1)));
      if (replacement >= current) ++replacement;
      out.train.labels.row(row).setZero();
      out.train.labels(row, replacement) = 1.0;
    }
  }

  out.train.validate();
  out.test.validate();
  return out;
}

}  // namespace diva

#endif
