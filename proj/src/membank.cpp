#include "memprop/membank.hpp"

#include <algorithm>
#include <fstream>

#include "memprop/featex.hpp"

namespace memprop {

const char* to_string(ColumnOrigin origin) noexcept {
  switch (origin) {
    case ColumnOrigin::exemplar:
      return "exemplar";
    case ColumnOrigin::shortterm:
      return "shortterm";
    case ColumnOrigin::longterm:
      return "longterm";
  }
  return "unknown";
}

MemoryBank MemoryBank::init_with_exemplar(const FeatureGrid& keys, const FeatureGrid& values, BankConfig config) {
  require(keys.same_spatial(values), "init_with_exemplar: key and value grids differ in spatial size");
  require(keys.locations() > 0 && keys.channels() > 0, "init_with_exemplar: empty key grid");
  require(config.gamma >= 1, "init_with_exemplar: gamma must be at least 1");
  require(config.temperature > 0, "init_with_exemplar: temperature must be positive");
  if (config.ns != 0) {
    require(config.ne >= 1 && config.ne < config.ns, "init_with_exemplar: need 1 <= Ne < Ns");
    require(config.m <= config.ne * keys.locations(), "init_with_exemplar: M exceeds Ne * locations");
  }
  MemoryBank bank;
  bank.config_ = config;
  bank.key_channels_ = keys.channels();
  bank.value_channels_ = values.channels();
  bank.height_ = keys.height();
  bank.width_ = keys.width();
  bank.locations_ = keys.locations();
  bank.append_columns(keys, values, ColumnOrigin::exemplar, 0, 0);
  bank.last_peak_ = bank.columns();
  return bank;
}

void MemoryBank::append_columns(const FeatureGrid& keys, const FeatureGrid& values, ColumnOrigin origin,
                                std::size_t born, std::size_t source) {
  keys_.insert(keys_.end(), keys.values().begin(), keys.values().end());
  values_.insert(values_.end(), values.values().begin(), values.values().end());
  for (std::size_t p = 0; p < keys.locations(); ++p) {
    usage_.push_back(Real{0});
    born_.push_back(born);
    origin_.push_back(origin);
    source_frame_.push_back(source);
    source_location_.push_back(p);
  }
}

void MemoryBank::keep_columns(std::span<const std::size_t> order) {
  std::vector<Real> keys, values, usage;
  std::vector<std::size_t> born, source_frame, source_location;
  std::vector<ColumnOrigin> origin;
  keys.reserve(order.size() * key_channels_);
  values.reserve(order.size() * value_channels_);
  for (std::size_t n : order) {
    keys.insert(keys.end(), keys_.begin() + static_cast<std::ptrdiff_t>(n * key_channels_),
                keys_.begin() + static_cast<std::ptrdiff_t>((n + 1) * key_channels_));
    values.insert(values.end(), values_.begin() + static_cast<std::ptrdiff_t>(n * value_channels_),
                  values_.begin() + static_cast<std::ptrdiff_t>((n + 1) * value_channels_));
    usage.push_back(usage_[n]);
    born.push_back(born_[n]);
    origin.push_back(origin_[n]);
    source_frame.push_back(source_frame_[n]);
    source_location.push_back(source_location_[n]);
  }
  keys_ = std::move(keys);
  values_ = std::move(values);
  usage_ = std::move(usage);
  born_ = std::move(born);
  origin_ = std::move(origin);
  source_frame_ = std::move(source_frame);
  source_location_ = std::move(source_location);
}

void MemoryBank::observe_frame(const FeatureGrid& keys, const FeatureGrid& values, std::size_t frame,
                               std::span<const Real> readout_mass) {
  require(frame > last_frame_, "observe_frame: frame indices must be strictly increasing");
  require(keys.channels() == key_channels_ && values.channels() == value_channels_,
          "observe_frame: channel counts do not match the bank");
  require(keys.height() == height_ && keys.width() == width_ && values.same_spatial(keys),
          "observe_frame: spatial size does not match the bank");

  if (config_.track_usage) {
    if (config_.usage_source == UsageSource::keys) {
      const auto mass = l2_softmax_attention({.queries = keys.values(), .keys = keys_, .values = {},
                                              .dim = key_channels_, .value_dim = 0, .temperature = Real{1}},
                                             {.column_mass = true});
      for (std::size_t n = 0; n < usage_.size(); ++n) usage_[n] += mass.column_mass[n];
    } else {
      require(readout_mass.size() == usage_.size(), "observe_frame: readout mass does not cover every column");
      for (std::size_t n = 0; n < usage_.size(); ++n) usage_[n] += readout_mass[n];
    }
  }
  last_frame_ = frame;
  last_peak_ = columns();

  if (frame % config_.gamma != 0) return;
  append_columns(keys, values, ColumnOrigin::shortterm, frame, frame);
  frames_.push_back(frame);
  last_peak_ = columns();

  if (config_.ns != 0 && frames_.size() == config_.ns) compact(frame);
}

Mat MemoryBank::normalized_usage(std::size_t now) const {
  Mat out(1, usage_.size());
  for (std::size_t n = 0; n < usage_.size(); ++n) {
    require(now >= born_[n], "normalized_usage: query frame precedes a column's insertion");
    const std::size_t age = now - born_[n];
    const std::size_t divisor = age >= 2 ? age - 1 : 1;
    out(0, n) = usage_[n] / static_cast<Real>(divisor);
  }
  return out;
}

void MemoryBank::compact(std::size_t frame) {
  require(config_.ns != 0 && frames_.size() == config_.ns, "compact: short-term store is not full");
  const std::size_t now = frame + 1;
  const Mat scores = normalized_usage(now);

  const std::vector<std::size_t> oldest(frames_.begin(), frames_.begin() + static_cast<std::ptrdiff_t>(config_.ne));
  const auto is_candidate = [&](std::size_t n) {
    return origin_[n] == ColumnOrigin::shortterm &&
           std::find(oldest.begin(), oldest.end(), born_[n]) != oldest.end();
  };

  std::vector<std::size_t> candidates;
  std::vector<std::size_t> order;
  std::vector<std::size_t> remaining;
  for (std::size_t n = 0; n < columns(); ++n) {
    if (origin_[n] == ColumnOrigin::shortterm) {
      (is_candidate(n) ? candidates : remaining).push_back(n);
    } else {
      order.push_back(n);  // exemplar and long-term keep their place
    }
  }
  std::vector<Real> candidate_scores(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) candidate_scores[i] = scores(0, candidates[i]);
  const ColumnIndexSet selected = topk_columns(candidate_scores, std::min(config_.m, candidates.size()));

  const std::size_t first_promoted = order.size();
  for (std::size_t s : selected) order.push_back(candidates[s]);
  order.insert(order.end(), remaining.begin(), remaining.end());
  keep_columns(order);
  for (std::size_t i = first_promoted; i < first_promoted + selected.size(); ++i) {
    // Carry the usage rate over the born_at reset: at `now` the divisor is 1.
    usage_[i] = scores(0, order[i]);
    born_[i] = frame;
    origin_[i] = ColumnOrigin::longterm;
  }
  frames_.erase(frames_.begin(), frames_.begin() + static_cast<std::ptrdiff_t>(config_.ne));

  const std::size_t cap = config_.longterm_cap;
  if (cap == 0) return;
  std::vector<std::size_t> longterm;
  for (std::size_t n = 0; n < columns(); ++n)
    if (origin_[n] == ColumnOrigin::longterm) longterm.push_back(n);
  if (longterm.size() <= cap) return;

  const Mat rescored = normalized_usage(now);
  std::vector<Real> lt_scores(longterm.size());
  for (std::size_t i = 0; i < longterm.size(); ++i) lt_scores[i] = rescored(0, longterm[i]);
  ColumnIndexSet kept = topk_columns(lt_scores, cap);
  std::sort(kept.begin(), kept.end());
  std::vector<bool> keep(columns(), true);
  for (std::size_t n : longterm) keep[n] = false;
  for (std::size_t i : kept) keep[longterm[i]] = true;
  std::vector<std::size_t> survivors;
  for (std::size_t n = 0; n < columns(); ++n)
    if (keep[n]) survivors.push_back(n);
  keep_columns(survivors);
}

void MemoryBank::retain_newest_frames(std::size_t n) {
  if (frames_.size() <= n) return;
  const std::vector<std::size_t> dropped(frames_.begin(), frames_.end() - static_cast<std::ptrdiff_t>(n));
  std::vector<std::size_t> order;
  for (std::size_t c = 0; c < columns(); ++c) {
    const bool drop = origin_[c] == ColumnOrigin::shortterm &&
                      std::find(dropped.begin(), dropped.end(), born_[c]) != dropped.end();
    if (!drop) order.push_back(c);
  }
  keep_columns(order);
  frames_.erase(frames_.begin(), frames_.end() - static_cast<std::ptrdiff_t>(n));
}

ReadoutResult MemoryBank::readout(const FeatureGrid& query, ReadoutOptions options) const {
  require(query.channels() == key_channels_, "readout: query channels do not match the bank keys");
  auto out = l2_softmax_attention({.queries = query.values(), .keys = keys_, .values = values_,
                                   .dim = key_channels_, .value_dim = value_channels_,
                                   .temperature = config_.temperature},
                                  {.column_mass = options.column_mass, .affinity = options.keep_affinity});
  ReadoutResult result;
  result.value_grid = FeatureGrid(query.height(), query.width(), value_channels_, std::move(out.values));
  if (options.keep_affinity) result.affinity = Mat(query.locations(), columns(), std::move(out.affinity));
  result.best_column = std::move(out.best);
  result.column_mass = std::move(out.column_mass);
  result.columns_used = columns();
  return result;
}

ColumnCounts MemoryBank::column_count() const {
  ColumnCounts c;
  for (ColumnOrigin o : origin_) {
    switch (o) {
      case ColumnOrigin::exemplar:
        ++c.exemplar;
        break;
      case ColumnOrigin::shortterm:
        ++c.shortterm;
        break;
      case ColumnOrigin::longterm:
        ++c.longterm;
        break;
    }
  }
  c.total = origin_.size();
  return c;
}

Mat MemoryBank::keys() const {
  return Mat(columns(), key_channels_, keys_).transposed();
}

Mat MemoryBank::values() const {
  return Mat(columns(), value_channels_, values_).transposed();
}

std::size_t MemoryBank::bytes_per_column() const noexcept {
  return (key_channels_ + value_channels_ + 1) * sizeof(Real) + 3 * sizeof(std::size_t) + sizeof(ColumnOrigin);
}

void MemoryBank::dump(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  write_feature_file(dir / "keys.bin", FeatureGrid(1, columns(), key_channels_, keys_), last_frame_);
  write_feature_file(dir / "values.bin", FeatureGrid(1, columns(), value_channels_, values_), last_frame_);
  std::ofstream manifest(dir / "manifest.txt");
  if (!manifest) throw IoError("cannot write bank manifest in " + dir.string());
  manifest << "# column origin born_at source_frame source_location usage_raw\n";
  for (std::size_t n = 0; n < columns(); ++n) {
    manifest << n << ' ' << to_string(origin_[n]) << ' ' << born_[n] << ' ' << source_frame_[n] << ' '
             << source_location_[n] << ' ' << usage_[n] << '\n';
  }
}

}  // namespace memprop
