#include "memprop/numkernel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <type_traits>

namespace memprop {

Mat::Mat(std::size_t rows, std::size_t cols, Real fill) : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Mat::Mat(std::size_t rows, std::size_t cols, std::vector<Real> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Mat: data length must equal rows*cols");
}

Mat Mat::from_rows(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    require(row.size() == c, "Mat::from_rows: ragged rows");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Mat(r, c, std::move(data));
}

Mat Mat::transposed() const {
  Mat t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

bool Mat::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

Mat pairwise_sqdist(const Mat& a, const Mat& b) {
  require(a.rows() == b.rows(), "pairwise_sqdist: feature dimensions differ");
  const std::size_t dim = a.rows();
  const Mat at = a.transposed();
  const Mat bt = b.transposed();
  Mat out(a.cols(), b.cols());
  for (std::size_t i = 0; i < at.rows(); ++i) {
    const auto qi = at.row(i);
    for (std::size_t j = 0; j < bt.rows(); ++j) {
      const auto kj = bt.row(j);
      Real acc = 0;
      for (std::size_t c = 0; c < dim; ++c) {
        const Real diff = qi[c] - kj[c];
        acc += diff * diff;
      }
      out(i, j) = acc;
    }
  }
  return out;
}

void row_softmax_inplace(std::span<Real> row) {
  if (row.empty()) return;
  const Real peak = *std::max_element(row.begin(), row.end());
  Real sum = 0;
  for (Real& v : row) {
    const Real x = v - peak;
    v = x < kExpUnderflow ? Real{0} : std::exp(x);
    sum += v;
  }
  for (Real& v : row) v /= sum;
}

Mat row_softmax(const Mat& x) {
  Mat out = x;
  for (std::size_t r = 0; r < out.rows(); ++r) row_softmax_inplace(out.row(r));
  return out;
}

ColumnIndexSet topk_columns(std::span<const Real> scores, std::size_t k) {
  require(k <= scores.size(), "topk_columns: k exceeds the number of scores");
  ColumnIndexSet idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  const auto better = [&](std::size_t l, std::size_t r) {
    return scores[l] > scores[r] || (scores[l] == scores[r] && l < r);
  };
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(), better);
  idx.resize(k);
  return idx;
}

ColumnIndexSet topk_columns(const Mat& scores, std::size_t k) {
  require(scores.rows() == 1, "topk_columns: scores must be a single row");
  return topk_columns(scores.data(), k);
}

Mat matmul(const Mat& a, const Mat& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Mat out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const Real aik = a(i, k);
      const auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Mat dot_attention(const Mat& q, const Mat& k, const Mat& v, Real scale) {
  require(q.cols() == k.cols(), "dot_attention: query and key widths differ");
  require(k.rows() == v.rows(), "dot_attention: key and value counts differ");
  require(scale > 0, "dot_attention: scale must be positive");
  Mat logits(q.rows(), k.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qi = q.row(i);
    for (std::size_t j = 0; j < k.rows(); ++j) {
      const auto kj = k.row(j);
      Real acc = 0;
      for (std::size_t c = 0; c < q.cols(); ++c) acc += qi[c] * kj[c];
      logits(i, j) = acc / scale;
    }
  }
  return matmul(row_softmax(logits), v);
}

Mat concat_columns(std::span<const Mat> parts) {
  if (parts.empty()) return Mat();
  const std::size_t rows = parts.front().rows();
  std::size_t cols = 0;
  for (const Mat& p : parts) {
    require(p.rows() == rows, "concat_columns: parts have different row counts");
    cols += p.cols();
  }
  Mat out(rows, cols);
  std::size_t offset = 0;
  for (const Mat& p : parts) {
    for (std::size_t r = 0; r < rows; ++r) std::copy(p.row(r).begin(), p.row(r).end(), out.row(r).begin() + offset);
    offset += p.cols();
  }
  return out;
}

namespace {

#if defined(__GNUC__) && defined(__x86_64__) && !defined(__clang__)
#define MEMPROP_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define MEMPROP_CLONES
#endif

constexpr std::size_t kKeyBlock = 512;
constexpr std::size_t kLanes = 8;

// exp(x) for x in [kFastExpMin, 0] without calls so the weight loop vectorizes:
// Cody-Waite reduction to |r| <= ln2/2, degree-12 Taylor polynomial (relative
// error below 1e-15), and 2^k assembled in the exponent bits.
constexpr double kFastExpMin = -708.0;
constexpr Real kFastMin = std::max(static_cast<Real>(kFastExpMin), kExpUnderflow);

inline double exp_nonpositive(double x) {
  constexpr double kLog2e = 1.4426950408889634;
  constexpr double kLn2Hi = 6.93147180369123816490e-01;
  constexpr double kLn2Lo = 1.90821492927058770002e-10;
  constexpr double kShifter = 0x1.8p52;
  const double kd = x * kLog2e + kShifter;
  const double k = kd - kShifter;
  const double r = (x - k * kLn2Hi) - k * kLn2Lo;
  double p = 1.0 / 479001600.0;
  p = p * r + 1.0 / 39916800.0;
  p = p * r + 1.0 / 3628800.0;
  p = p * r + 1.0 / 362880.0;
  p = p * r + 1.0 / 40320.0;
  p = p * r + 1.0 / 5040.0;
  p = p * r + 1.0 / 720.0;
  p = p * r + 1.0 / 120.0;
  p = p * r + 1.0 / 24.0;
  p = p * r + 1.0 / 6.0;
  p = p * r + 0.5;
  p = p * r + 1.0;
  p = p * r + 1.0;
  const std::uint64_t bits = (std::bit_cast<std::uint64_t>(kd) + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

// Keys and values of up to kKeyBlock columns, stored channel-major and
// zero-padded so every loop below runs over whole lanes.
struct ColumnBlock {
  std::size_t first = 0;
  std::size_t count = 0;
  std::size_t padded = 0;
  std::vector<Real> keys;    // dim x kKeyBlock
  std::vector<Real> values;  // value_dim x kKeyBlock

  void load(const L2AttentionInputs& in, std::size_t k0) {
    first = k0;
    count = std::min(kKeyBlock, in.keys.size() / in.dim - k0);
    padded = (count + kLanes - 1) / kLanes * kLanes;
    keys.assign(in.dim * kKeyBlock, Real{0});
    values.assign(in.value_dim * kKeyBlock, Real{0});
    for (std::size_t j = 0; j < count; ++j) {
      const Real* k = in.keys.data() + (k0 + j) * in.dim;
      for (std::size_t c = 0; c < in.dim; ++c) keys[c * kKeyBlock + j] = k[c];
      const Real* v = in.values.data() + (k0 + j) * in.value_dim;
      for (std::size_t c = 0; c < in.value_dim; ++c) values[c * kKeyBlock + j] = v[c];
    }
  }
};

struct RowState {
  Real min = std::numeric_limits<Real>::infinity();
  Real sum = Real{0};
  std::size_t best = 0;
};

// Squared distances of one query to the block divided by the temperature;
// padding lanes get +inf so they never win and never weigh.
inline void block_distances(const Real* q, const ColumnBlock& b, std::size_t dim, Real inv_t, Real* d) {
  for (std::size_t j0 = 0; j0 < b.padded; j0 += kLanes) {
    Real acc[kLanes] = {};
    for (std::size_t c = 0; c < dim; ++c) {
      const Real qc = q[c];
      const Real* kc = b.keys.data() + c * kKeyBlock + j0;
      for (std::size_t t = 0; t < kLanes; ++t) {
        const Real diff = qc - kc[t];
        acc[t] += diff * diff;
      }
    }
    for (std::size_t t = 0; t < kLanes; ++t) d[j0 + t] = acc[t] * inv_t;
  }
  for (std::size_t j = b.count; j < b.padded; ++j) d[j] = std::numeric_limits<Real>::infinity();
}

// w[j] = exp(mn - d[j]), 0 where the exponent is below kExpUnderflow.
inline void block_weights(Real mn, const Real* d, std::size_t n, Real* w) {
  for (std::size_t j = 0; j < n; ++j) {
    const Real x = mn - d[j];
    const double clamped = std::min(std::max(static_cast<double>(x), kFastExpMin), 0.0);
    const Real e = static_cast<Real>(exp_nonpositive(clamped));
    w[j] = x >= kFastMin ? e : Real{0};
  }
  if constexpr (kExpUnderflow >= kFastMin) return;
  std::size_t edge = 0;
  for (std::size_t j = 0; j < n; ++j) {
    const Real x = mn - d[j];
    edge += (x < kFastMin) & (x >= kExpUnderflow);
  }
  if (edge == 0) return;
  for (std::size_t j = 0; j < n; ++j) {
    const Real x = mn - d[j];
    if (x < kFastMin && x >= kExpUnderflow) w[j] = std::exp(x);
  }
}

inline Real block_minimum(const Real* d, std::size_t padded) {
  Real mins[kLanes];
  std::fill(mins, mins + kLanes, std::numeric_limits<Real>::infinity());
  for (std::size_t j0 = 0; j0 < padded; j0 += kLanes)
    for (std::size_t t = 0; t < kLanes; ++t) mins[t] = d[j0 + t] < mins[t] ? d[j0 + t] : mins[t];
  Real m = mins[0];
  for (std::size_t t = 1; t < kLanes; ++t) m = mins[t] < m ? mins[t] : m;
  return m;
}

inline Real lane_sum(const Real* lanes) {
  Real s = 0;
  for (std::size_t t = 0; t < kLanes; ++t) s += lanes[t];
  return s;
}

// Online softmax update of one query row against one block. The running
// minimum only decreases, so an entry below the underflow threshold now stays
// below it and skipping it is exact.
MEMPROP_CLONES
void accumulate_row(const Real* q, const ColumnBlock& b, std::size_t dim, std::size_t value_dim, Real inv_t,
                    Real* d, Real* w, RowState& state, Real* acc) {
  block_distances(q, b, dim, inv_t, d);

  const Real block_min = block_minimum(d, b.padded);

  if (block_min < state.min) {
    std::size_t arg = 0;
    while (d[arg] != block_min) ++arg;
    const Real shift = block_min - state.min;
    const Real factor = shift < kExpUnderflow ? Real{0} : std::exp(shift);
    state.sum *= factor;
    for (std::size_t c = 0; c < value_dim; ++c) acc[c] *= factor;
    state.min = block_min;
    state.best = b.first + arg;
  }

  // Nothing in this block survives the underflow threshold.
  if (state.min - block_min < kExpUnderflow) return;

  block_weights(state.min, d, b.padded, w);
  Real sums[kLanes] = {};
  for (std::size_t j0 = 0; j0 < b.padded; j0 += kLanes)
    for (std::size_t t = 0; t < kLanes; ++t) sums[t] += w[j0 + t];
  state.sum += lane_sum(sums);

  for (std::size_t c = 0; c < value_dim; ++c) {
    const Real* vc = b.values.data() + c * kKeyBlock;
    Real part[kLanes] = {};
    for (std::size_t j0 = 0; j0 < b.padded; j0 += kLanes)
      for (std::size_t t = 0; t < kLanes; ++t) part[t] += w[j0 + t] * vc[j0 + t];
    acc[c] += lane_sum(part);
  }
}

// Normalized weights of one row against one block, for affinity and column
// mass. Returns false, leaving w untouched, when every weight underflows.
MEMPROP_CLONES
bool normalized_row(const Real* q, const ColumnBlock& b, std::size_t dim, Real inv_t, const RowState& state, Real* d,
                    Real* w) {
  block_distances(q, b, dim, inv_t, d);
  if (state.min - block_minimum(d, b.padded) < kExpUnderflow) return false;
  block_weights(state.min, d, b.padded, w);
  const Real inv_sum = Real{1} / state.sum;
  for (std::size_t j = 0; j < b.padded; ++j) w[j] *= inv_sum;
  return true;
}

// Banks up to this many columns take the single-pass path below when
// normalized weights are requested.
constexpr std::size_t kWholeRowLimit = std::size_t{1} << 16;

// One query against every block at once: distances are computed a single
// time, then w holds the normalized weights (block-strided, like d).
MEMPROP_CLONES
void whole_row(const Real* q, const std::vector<ColumnBlock>& blocks, std::size_t dim, std::size_t value_dim,
               Real inv_t, Real* d, Real* w, RowState& state, Real* acc) {
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Real* db = d + i * kKeyBlock;
    block_distances(q, blocks[i], dim, inv_t, db);
    const Real block_min = block_minimum(db, blocks[i].padded);
    if (block_min < state.min) {
      std::size_t arg = 0;
      while (db[arg] != block_min) ++arg;
      state.min = block_min;
      state.best = blocks[i].first + arg;
    }
  }
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    const ColumnBlock& b = blocks[i];
    Real* wb = w + i * kKeyBlock;
    block_weights(state.min, d + i * kKeyBlock, b.padded, wb);
    Real sums[kLanes] = {};
    for (std::size_t j0 = 0; j0 < b.padded; j0 += kLanes)
      for (std::size_t t = 0; t < kLanes; ++t) sums[t] += wb[j0 + t];
    state.sum += lane_sum(sums);
    for (std::size_t c = 0; c < value_dim; ++c) {
      const Real* vc = b.values.data() + c * kKeyBlock;
      Real part[kLanes] = {};
      for (std::size_t j0 = 0; j0 < b.padded; j0 += kLanes)
        for (std::size_t t = 0; t < kLanes; ++t) part[t] += wb[j0 + t] * vc[j0 + t];
      acc[c] += lane_sum(part);
    }
  }
  const Real inv_sum = Real{1} / state.sum;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    Real* wb = w + i * kKeyBlock;
    for (std::size_t j = 0; j < blocks[i].padded; ++j) wb[j] *= inv_sum;
  }
}

}  // namespace

L2AttentionOutputs l2_softmax_attention(const L2AttentionInputs& in, L2AttentionRequest request) {
  require(in.dim > 0, "l2_softmax_attention: zero feature dimension");
  require(in.temperature > 0, "l2_softmax_attention: temperature must be positive");
  require(in.queries.size() % in.dim == 0 && in.keys.size() % in.dim == 0,
          "l2_softmax_attention: buffers are not a whole number of vectors");
  const std::size_t m = in.queries.size() / in.dim;
  const std::size_t n = in.keys.size() / in.dim;
  require(n > 0, "l2_softmax_attention: no keys");
  require(in.values.size() == n * in.value_dim, "l2_softmax_attention: value buffer does not match keys");

  L2AttentionOutputs out;
  out.values.assign(m * in.value_dim, Real{0});
  out.best.assign(m, 0);
  if (request.column_mass) out.column_mass.assign(n, Real{0});
  if (request.affinity) out.affinity.assign(m * n, Real{0});

  const Real inv_t = Real{1} / in.temperature;
  if ((request.column_mass || request.affinity) && n <= kWholeRowLimit) {
    std::vector<ColumnBlock> blocks((n + kKeyBlock - 1) / kKeyBlock);
    for (std::size_t i = 0; i < blocks.size(); ++i) blocks[i].load(in, i * kKeyBlock);
    std::vector<Real> d(blocks.size() * kKeyBlock);
    std::vector<Real> w(blocks.size() * kKeyBlock);
    for (std::size_t r = 0; r < m; ++r) {
      RowState state;
      Real* acc = out.values.data() + r * in.value_dim;
      whole_row(in.queries.data() + r * in.dim, blocks, in.dim, in.value_dim, inv_t, d.data(), w.data(), state, acc);
      out.best[r] = state.best;
      for (std::size_t c = 0; c < in.value_dim; ++c) acc[c] /= state.sum;
      for (std::size_t i = 0; i < blocks.size(); ++i) {
        const Real* wb = w.data() + i * kKeyBlock;
        const std::size_t k0 = blocks[i].first;
        if (request.column_mass) {
          Real* mass = out.column_mass.data() + k0;
          for (std::size_t j = 0; j < blocks[i].count; ++j) mass[j] += wb[j];
        }
        if (request.affinity) std::copy(wb, wb + blocks[i].count, out.affinity.begin() + static_cast<std::ptrdiff_t>(r * n + k0));
      }
    }
    return out;
  }

  std::vector<RowState> rows(m);
  std::vector<Real> d(kKeyBlock);
  std::vector<Real> w(kKeyBlock);
  ColumnBlock block;

  for (std::size_t k0 = 0; k0 < n; k0 += kKeyBlock) {
    block.load(in, k0);
    for (std::size_t r = 0; r < m; ++r) {
      accumulate_row(in.queries.data() + r * in.dim, block, in.dim, in.value_dim, inv_t, d.data(), w.data(), rows[r],
                     out.values.data() + r * in.value_dim);
    }
  }
  for (std::size_t r = 0; r < m; ++r) {
    out.best[r] = rows[r].best;
    Real* acc = out.values.data() + r * in.value_dim;
    for (std::size_t c = 0; c < in.value_dim; ++c) acc[c] /= rows[r].sum;
  }

  if (!request.column_mass && !request.affinity) return out;
  for (std::size_t k0 = 0; k0 < n; k0 += kKeyBlock) {
    block.load(in, k0);
    for (std::size_t r = 0; r < m; ++r) {
      if (!normalized_row(in.queries.data() + r * in.dim, block, in.dim, inv_t, rows[r], d.data(), w.data())) {
        continue;
      }
      if (request.column_mass) {
        Real* mass = out.column_mass.data() + k0;
        for (std::size_t j = 0; j < block.count; ++j) mass[j] += w[j];
      }
      if (request.affinity) std::copy(w.begin(), w.begin() + static_cast<std::ptrdiff_t>(block.count), out.affinity.begin() + static_cast<std::ptrdiff_t>(r * n + k0));
    }
  }
  return out;
}

}  // namespace memprop
