#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

#include "memprop/core.hpp"

namespace memprop {

/// Dense row-major matrix of Real values.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, Real fill = Real{0});
  Mat(std::size_t rows, std::size_t cols, std::vector<Real> data);

  static Mat from_rows(std::initializer_list<std::initializer_list<Real>> rows);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  Real& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  Real operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<Real> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const Real> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<Real> data() noexcept { return data_; }
  std::span<const Real> data() const noexcept { return data_; }

  Mat transposed() const;
  bool all_finite() const noexcept;

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<Real> data_;
};

/// Ordered column positions, as produced by topk_columns.
using ColumnIndexSet = std::vector<std::size_t>;

/// out[i][j] = sum_c (a[c][i] - b[c][j])^2 for column-feature matrices a (C x m), b (C x n).
Mat pairwise_sqdist(const Mat& a, const Mat& b);

/// Softmax over each row with max subtraction.
Mat row_softmax(const Mat& x);
void row_softmax_inplace(std::span<Real> row);

/// Indices of the k largest scores, ordered by descending score then ascending index.
ColumnIndexSet topk_columns(std::span<const Real> scores, std::size_t k);
ColumnIndexSet topk_columns(const Mat& scores, std::size_t k);

Mat matmul(const Mat& a, const Mat& b);

/// row_softmax(q k^T / scale) v with q (m x C), k (n x C), v (n x Cv).
Mat dot_attention(const Mat& q, const Mat& k, const Mat& v, Real scale);

/// Places the parts side by side; all parts must share a row count.
Mat concat_columns(std::span<const Mat> parts);

/// Fused softmax(-||q - k||^2 / temperature) attention over point sets stored
/// one vector per contiguous slot. Never materializes the full affinity unless
/// asked to, so the working set stays bounded for very wide key sets.
struct L2AttentionInputs {
  std::span<const Real> queries;  // m x dim
  std::span<const Real> keys;     // n x dim
  std::span<const Real> values;   // n x value_dim, may be empty when value_dim == 0
  std::size_t dim = 0;
  std::size_t value_dim = 0;
  Real temperature = Real{1};
};

struct L2AttentionOutputs {
  std::vector<Real> values;       // m x value_dim
  std::vector<std::size_t> best;  // per query: argmax of the affinity row (lowest index on ties)
  std::vector<Real> column_mass;  // per key: sum over queries of the affinity, if requested
  std::vector<Real> affinity;     // m x n, if requested
};

struct L2AttentionRequest {
  bool column_mass = false;
  bool affinity = false;
};

L2AttentionOutputs l2_softmax_attention(const L2AttentionInputs& in, L2AttentionRequest request = {});

}  // namespace memprop
