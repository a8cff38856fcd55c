#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "memprop/featex.hpp"
#include "memprop/membank.hpp"
#include "oracle.hpp"

using namespace memprop;

namespace {

BankConfig small_config(std::size_t gamma, std::size_t ns, std::size_t ne, std::size_t m, std::size_t cap = 0) {
  BankConfig c;
  c.gamma = gamma;
  c.ns = ns;
  c.ne = ne;
  c.m = m;
  c.longterm_cap = cap;
  return c;
}

double sum(std::span<const Real> v) {
  double s = 0;
  for (Real x : v) s += x;
  return s;
}

oracle::Table key_rows(const MemoryBank& bank) {
  oracle::Table t(bank.columns());
  for (std::size_t n = 0; n < bank.columns(); ++n)
    t[n].assign(bank.key_data().begin() + static_cast<std::ptrdiff_t>(n * bank.key_channels()),
                bank.key_data().begin() + static_cast<std::ptrdiff_t>((n + 1) * bank.key_channels()));
  return t;
}

oracle::Table value_rows(const MemoryBank& bank) {
  oracle::Table t(bank.columns());
  for (std::size_t n = 0; n < bank.columns(); ++n)
    t[n].assign(bank.value_data().begin() + static_cast<std::ptrdiff_t>(n * bank.value_channels()),
                bank.value_data().begin() + static_cast<std::ptrdiff_t>((n + 1) * bank.value_channels()));
  return t;
}

}  // namespace

TEST_CASE("init_with_exemplar") {
  const BankConfig defaults;
  CHECK(defaults.gamma == 5);
  CHECK(defaults.ne == 5);
  CHECK(defaults.ns == 10);
  CHECK(defaults.m == 128);
  CHECK(defaults.temperature == 1.0);

  const MemoryBank bank = MemoryBank::init_with_exemplar(FeatureGrid(2, 2, 3, 1.0), FeatureGrid(2, 2, 2), small_config(5, 0, 5, 4));
  CHECK(bank.columns() == 4);
  CHECK(bank.column_count() == ColumnCounts{0, 0, 4, 4});
  CHECK(bank.shortterm_frames() == 0);
  for (auto o : bank.origin()) CHECK(o == ColumnOrigin::exemplar);

  CHECK_THROWS_AS(MemoryBank::init_with_exemplar(FeatureGrid(2, 2, 3), FeatureGrid(2, 3, 2), {}), ContractViolation);
  MemoryBank b = bank;
  CHECK_THROWS_AS(b.observe_frame(FeatureGrid(2, 2, 4), FeatureGrid(2, 2, 2), 1), ContractViolation);
  CHECK_THROWS_AS(b.observe_frame(FeatureGrid(2, 2, 3), FeatureGrid(2, 2, 2), 0), ContractViolation);
  b.observe_frame(FeatureGrid(2, 2, 3), FeatureGrid(2, 2, 2), 3);
  CHECK_THROWS_AS(b.observe_frame(FeatureGrid(2, 2, 3), FeatureGrid(2, 2, 2), 3), ContractViolation);
}

TEST_CASE("observe_frame inserts every gamma-th frame only") {
  std::mt19937_64 rng(31);
  MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 2, 3, 4), oracle::random_grid(rng, 2, 3, 2),
                                                   small_config(5, 0, 5, 1));
  for (std::size_t f = 1; f <= 12; ++f) {
    bank.observe_frame(oracle::random_grid(rng, 2, 3, 4), oracle::random_grid(rng, 2, 3, 2), f);
    CHECK(bank.shortterm_frames() == f / 5);
    CHECK(bank.column_count().shortterm == (f / 5) * 6);
  }
  CHECK(bank.shortterm_frame_indices() == std::deque<std::size_t>{5, 10});
  for (std::size_t n = 6; n < 12; ++n) CHECK(bank.born_at()[n] == 5);
}

TEST_CASE("usage: single column takes every location's full mass") {
  std::mt19937_64 rng(32);
  MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 1, 1, 3), FeatureGrid(1, 1, 2),
                                                   small_config(100, 0, 5, 1));
  for (std::size_t f = 1; f <= 4; ++f) {
    bank.observe_frame(oracle::random_grid(rng, 1, 1, 3, -40, 40), FeatureGrid(1, 1, 2), f);
    CHECK(bank.usage_raw()[0] == doctest::Approx(static_cast<double>(f)));
  }
}

TEST_CASE("usage: equidistant columns get equal increments") {
  FeatureGrid keys(1, 2, 2);
  keys.at(0, 0, 0) = 1;
  keys.at(0, 1, 0) = -1;
  MemoryBank bank = MemoryBank::init_with_exemplar(keys, FeatureGrid(1, 2, 1), small_config(100, 0, 1, 1));
  FeatureGrid q(1, 2, 2);
  q.vec(0)[1] = 0.5;  // both on the bisector x = 0
  q.vec(1)[1] = -3;
  bank.observe_frame(q, FeatureGrid(1, 2, 1), 1);
  CHECK(bank.usage_raw()[0] == doctest::Approx(1.0));
  CHECK(bank.usage_raw()[1] == doctest::Approx(1.0));
}

TEST_CASE("usage: nonnegative and total mass grows by exactly HW per observed frame") {
  std::mt19937_64 rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t h = 1 + rng() % 3, w = 1 + rng() % 4, hw = h * w;
    MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, h, w, 3, -2, 2),
                                                     oracle::random_grid(rng, h, w, 2), small_config(2, 0, 2, 1));
    for (std::size_t f = 1; f <= 25; ++f) {
      const double before = sum(bank.usage_raw());
      bank.observe_frame(oracle::random_grid(rng, h, w, 3, -2, 2), oracle::random_grid(rng, h, w, 2), f);
      for (Real u : bank.usage_raw()) CHECK(u >= 0.0);
      CHECK(std::abs(sum(bank.usage_raw()) - before - static_cast<double>(hw)) <= 1e-6);
    }
  }
}

TEST_CASE("usage: increments match the brute-force key-vs-key softmax mass") {
  std::mt19937_64 rng(34);
  MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 2, 2, 3, -2, 2),
                                                   oracle::random_grid(rng, 2, 2, 2), small_config(1, 0, 1, 1));
  for (std::size_t f = 1; f <= 6; ++f) {
    const auto keys = key_rows(bank);
    const std::vector<Real> before(bank.usage_raw().begin(), bank.usage_raw().end());
    const FeatureGrid k = oracle::random_grid(rng, 2, 2, 3, -2, 2);
    bank.observe_frame(k, oracle::random_grid(rng, 2, 2, 2), f);
    const auto ref = oracle::l2_readout(oracle::locations_of(k), keys, {}, 1.0);
    for (std::size_t n = 0; n < keys.size(); ++n) {
      double mass = 0;
      for (const auto& row : ref.affinity) mass += row[n];
      CHECK(bank.usage_raw()[n] - before[n] == doctest::Approx(mass).epsilon(1e-12));
    }
  }
}

TEST_CASE("normalized_usage: divisor, clamp and linearity") {
  // Usage injected through the readout source so the raw values are known exactly.
  auto run = [](double scale) {
    BankConfig c = small_config(3, 0, 1, 1);
    c.usage_source = UsageSource::readout;
    MemoryBank bank = MemoryBank::init_with_exemplar(FeatureGrid(1, 1, 1), FeatureGrid(1, 1, 1), c);
    bank.observe_frame(FeatureGrid(1, 1, 1), FeatureGrid(1, 1, 1), 1, std::vector<Real>{1.0 * scale});
    bank.observe_frame(FeatureGrid(1, 1, 1), FeatureGrid(1, 1, 1), 2, std::vector<Real>{1.0 * scale});
    bank.observe_frame(FeatureGrid(1, 1, 1), FeatureGrid(1, 1, 1), 3, std::vector<Real>{1.0 * scale});
    for (std::size_t f = 4; f <= 5; ++f)
      bank.observe_frame(FeatureGrid(1, 1, 1), FeatureGrid(1, 1, 1), f, std::vector<Real>{scale, 2.0 * scale});
    return bank;
  };
  const MemoryBank bank = run(1.0);
  // Column 1 was inserted at frame gamma = 3 and has accumulated 2 per frame over frames 4..5.
  CHECK(bank.born_at()[1] == 3);
  CHECK(bank.normalized_usage(10)(0, 1) == doctest::Approx(4.0 / (10 - 1 - 3)));
  CHECK(bank.normalized_usage(4)(0, 1) == doctest::Approx(4.0));
  CHECK(bank.normalized_usage(3)(0, 1) == doctest::Approx(4.0));
  CHECK(bank.normalized_usage(10)(0, 0) == doctest::Approx(5.0 / 9.0));
  const MemoryBank doubled = run(2.0);
  CHECK(doubled.normalized_usage(10)(0, 1) == doctest::Approx(2 * bank.normalized_usage(10)(0, 1)));
  CHECK_THROWS_AS(bank.normalized_usage(2), ContractViolation);
}

TEST_CASE("compact: worked example with Ns=2, Ne=1, M=1") {
  BankConfig c = small_config(1, 2, 1, 1);
  c.usage_source = UsageSource::readout;
  FeatureGrid ex(1, 2, 1);
  MemoryBank bank = MemoryBank::init_with_exemplar(ex, FeatureGrid(1, 2, 1), c);
  FeatureGrid k1(1, 2, 1);
  k1.at(0, 0, 0) = 10;
  k1.at(0, 1, 0) = 11;
  bank.observe_frame(k1, FeatureGrid(1, 2, 1), 1, std::vector<Real>{0, 0});
  CHECK(bank.shortterm_frames() == 1);
  bank.observe_frame(FeatureGrid(1, 2, 1), FeatureGrid(1, 2, 1), 2, std::vector<Real>{0, 0, 0.4, 0.1});
  CHECK(bank.shortterm_frames() == 1);
  CHECK(bank.column_count() == ColumnCounts{2, 1, 2, 5});
  CHECK(bank.origin()[2] == ColumnOrigin::longterm);
  CHECK(bank.source_frame()[2] == 1);
  CHECK(bank.source_location()[2] == 0);
  CHECK(bank.key_data()[2] == 10);
  CHECK(bank.born_at()[2] == 2);
  CHECK(bank.usage_raw()[2] == doctest::Approx(0.4));
  CHECK(bank.shortterm_frame_indices().front() == 2);
}

TEST_CASE("compact: M equal to Ne*HW promotes everything; exemplar is never evicted") {
  BankConfig c = small_config(1, 3, 2, 8);
  c.usage_source = UsageSource::readout;
  MemoryBank bank = MemoryBank::init_with_exemplar(FeatureGrid(2, 2, 1), FeatureGrid(2, 2, 1), c);
  for (std::size_t f = 1; f <= 3; ++f) {
    std::vector<Real> mass(bank.columns(), 5.0);
    for (std::size_t n = 0; n < 4; ++n) mass[n] = 0.0;  // exemplar never used
    bank.observe_frame(FeatureGrid(2, 2, 1), FeatureGrid(2, 2, 1), f, mass);
  }
  CHECK(bank.column_count() == ColumnCounts{4, 8, 4, 16});
  for (std::size_t n = 0; n < 4; ++n) CHECK(bank.origin()[n] == ColumnOrigin::exemplar);
  CHECK_THROWS_AS(bank.compact(3), ContractViolation);
}

TEST_CASE("compact: long-term cap keeps the highest normalized usage") {
  BankConfig c = small_config(1, 2, 1, 2, 3);
  c.usage_source = UsageSource::readout;
  MemoryBank bank = MemoryBank::init_with_exemplar(FeatureGrid(1, 2, 1), FeatureGrid(1, 2, 1), c);
  // Each stored column receives source_frame^2 mass per frame.
  for (std::size_t f = 1; f <= 3; ++f) {
    std::vector<Real> mass(bank.columns(), 0.0);
    for (std::size_t n = 0; n < bank.columns(); ++n)
      if (bank.origin()[n] != ColumnOrigin::exemplar) mass[n] = static_cast<Real>(bank.source_frame()[n] * bank.source_frame()[n]);
    bank.observe_frame(FeatureGrid(1, 2, 1, static_cast<Real>(f)), FeatureGrid(1, 2, 1), f, mass);
  }
  // Two compactions of two columns each; the cap drops one of frame 1's columns.
  CHECK(bank.column_count().longterm == 3);
  std::size_t from_frame2 = 0;
  for (std::size_t n = 0; n < bank.columns(); ++n)
    if (bank.origin()[n] == ColumnOrigin::longterm && bank.source_frame()[n] == 2) ++from_frame2;
  CHECK(from_frame2 == 2);
}

TEST_CASE("readout: singleton, symmetry, argmax fidelity, temperature") {
  const MemoryBank one = MemoryBank::init_with_exemplar(FeatureGrid(1, 1, 2, 3.0), FeatureGrid(1, 1, 2, 7.0), small_config(5, 0, 5, 1));
  std::mt19937_64 rng(35);
  const ReadoutResult r1 = one.readout(oracle::random_grid(rng, 3, 3, 2, -10, 10), {.keep_affinity = true});
  for (Real v : r1.value_grid.values()) CHECK(v == 7.0);
  CHECK(r1.columns_used == 1);
  CHECK_THROWS_AS(one.readout(FeatureGrid(1, 1, 3)), ContractViolation);

  FeatureGrid keys(1, 2, 1), values(1, 2, 1);
  keys.at(0, 0, 0) = -1;
  keys.at(0, 1, 0) = 1;
  values.at(0, 0, 0) = 2;
  values.at(0, 1, 0) = 6;
  const MemoryBank two = MemoryBank::init_with_exemplar(keys, values, small_config(5, 0, 5, 1));
  CHECK(two.readout(FeatureGrid(1, 1, 1)).value_grid.at(0, 0, 0) == doctest::Approx(4.0));

  const FeatureGrid bank_keys = oracle::random_grid(rng, 4, 4, 3, -5, 5);
  const MemoryBank many = MemoryBank::init_with_exemplar(bank_keys, oracle::random_grid(rng, 4, 4, 2), small_config(5, 0, 5, 1));
  FeatureGrid q(1, 16, 3);
  for (std::size_t p = 0; p < 16; ++p)
    for (std::size_t c = 0; c < 3; ++c) q.vec(p)[c] = bank_keys.vec((p * 7) % 16)[c];
  const ReadoutResult rr = many.readout(q);
  for (std::size_t p = 0; p < 16; ++p) CHECK(rr.best_column[p] == (p * 7) % 16);

  BankConfig cold = small_config(5, 0, 5, 1);
  cold.temperature = 1e6;
  const MemoryBank flat = MemoryBank::init_with_exemplar(keys, values, cold);
  CHECK(flat.readout(FeatureGrid(1, 1, 1, 0.3)).value_grid.at(0, 0, 0) == doctest::Approx(4.0).epsilon(1e-5));
}

TEST_CASE("readout matches brute-force evaluation on random banks") {
  std::mt19937_64 rng(36);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t h = 1 + rng() % 2, w = 1 + rng() % 2, kc = 1 + rng() % 4, vc = 1 + rng() % 3;
    BankConfig c = small_config(1 + rng() % 2, 3, 1, 1);
    c.temperature = trial % 2 ? 1.0 : 2.5;
    MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, h, w, kc, -2, 2),
                                                     oracle::random_grid(rng, h, w, vc, -50, 50), c);
    const std::size_t frames = rng() % 6;
    for (std::size_t f = 1; f <= frames; ++f)
      bank.observe_frame(oracle::random_grid(rng, h, w, kc, -2, 2), oracle::random_grid(rng, h, w, vc, -50, 50), f);
    const FeatureGrid q = oracle::random_grid(rng, h, w, kc, -2, 2);
    const ReadoutResult r = bank.readout(q, {.keep_affinity = true});
    const auto ref = oracle::l2_readout(oracle::locations_of(q), key_rows(bank), value_rows(bank), c.temperature);
    CHECK(oracle::max_abs_diff(oracle::locations_of(r.value_grid), ref.values) <= 1e-9);
    CHECK(oracle::max_abs_diff(oracle::rows_of(*r.affinity), ref.affinity) <= 1e-9);
    CHECK(r.best_column == ref.best);
    for (std::size_t m = 0; m < q.locations(); ++m) CHECK(std::abs(sum(r.affinity->row(m)) - 1.0) <= 1e-6);
  }
}

TEST_CASE("column counts follow the closed-form bookkeeping and stay within the bound") {
  std::mt19937_64 rng(37);
  struct Case {
    std::size_t gamma, ns, ne, m, cap;
  };
  for (const Case k : {Case{5, 10, 5, 8, 0}, Case{1, 3, 2, 3, 0}, Case{2, 4, 1, 4, 6}, Case{3, 0, 5, 4, 0}}) {
    const std::size_t hw = 4;
    MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 2, 2, 2), oracle::random_grid(rng, 2, 2, 2),
                                                     small_config(k.gamma, k.ns, k.ne, k.m, k.cap));
    const std::size_t frames = 80;
    const auto trace = oracle::bank_counts(frames, hw, k.gamma, k.ns, k.ne, k.m, k.cap);
    std::size_t compactions = 0;
    for (std::size_t f = 1; f <= frames; ++f) {
      CHECK(bank.column_count() == trace.before_readout[f - 1]);
      const std::size_t z = bank.shortterm_frames();
      bank.observe_frame(oracle::random_grid(rng, 2, 2, 2), oracle::random_grid(rng, 2, 2, 2), f);
      CHECK(bank.last_peak_columns() == trace.peak[f - 1]);
      if (f % k.gamma != 0) {
        CHECK(bank.shortterm_frames() == z);
      } else if (k.ns != 0 && z + 1 == k.ns) {
        CHECK(bank.shortterm_frames() == k.ns - k.ne);
        ++compactions;
      } else {
        CHECK(bank.shortterm_frames() == z + 1);
      }
      if (k.ns != 0) {
        const std::size_t lt_bound = k.cap ? std::min(k.cap, k.m * compactions) : k.m * compactions;
        CHECK(bank.columns() <= k.ns * hw + hw + lt_bound);
      }
      CHECK(bank.key_data().size() == bank.columns() * 2);
      CHECK(bank.value_data().size() == bank.columns() * 2);
      CHECK(bank.usage_raw().size() == bank.columns());
      CHECK(bank.born_at().size() == bank.columns());
    }
  }
}

TEST_CASE("gamma 1 without compaction reads out over the exemplar and every earlier frame") {
  std::mt19937_64 rng(38);
  const FeatureGrid ek = oracle::random_grid(rng, 2, 3, 4), ev = oracle::random_grid(rng, 2, 3, 2, -9, 9);
  MemoryBank bank = MemoryBank::init_with_exemplar(ek, ev, small_config(1, 0, 5, 1));
  oracle::Table keys = oracle::locations_of(ek), values = oracle::locations_of(ev);
  for (std::size_t f = 1; f <= 12; ++f) {
    const FeatureGrid q = oracle::random_grid(rng, 2, 3, 4);
    const auto ref = oracle::l2_readout(oracle::locations_of(q), keys, values);
    CHECK(oracle::max_abs_diff(oracle::locations_of(bank.readout(q).value_grid), ref.values) <= 1e-9);
    const FeatureGrid v = oracle::random_grid(rng, 2, 3, 2, -9, 9);
    bank.observe_frame(q, v, f);
    for (const auto& row : oracle::locations_of(q)) keys.push_back(row);
    for (const auto& row : oracle::locations_of(v)) values.push_back(row);
  }
}

TEST_CASE("retain_newest_frames keeps only the newest short-term frames") {
  std::mt19937_64 rng(39);
  MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 1, 2, 2), oracle::random_grid(rng, 1, 2, 1),
                                                   small_config(1, 0, 1, 1));
  for (std::size_t f = 1; f <= 4; ++f) bank.observe_frame(oracle::random_grid(rng, 1, 2, 2), oracle::random_grid(rng, 1, 2, 1), f);
  bank.retain_newest_frames(1);
  CHECK(bank.column_count() == ColumnCounts{2, 0, 2, 4});
  CHECK(bank.source_frame()[2] == 4);
}

TEST_CASE("dump writes keys, values and a manifest line per column") {
  std::mt19937_64 rng(40);
  MemoryBank bank = MemoryBank::init_with_exemplar(oracle::random_grid(rng, 2, 2, 3), oracle::random_grid(rng, 2, 2, 2),
                                                   small_config(1, 0, 1, 1));
  bank.observe_frame(oracle::random_grid(rng, 2, 2, 3), oracle::random_grid(rng, 2, 2, 2), 1);
  const auto dir = std::filesystem::temp_directory_path() / "memprop_test_dump";
  std::filesystem::remove_all(dir);
  bank.dump(dir);
  const FeatureGrid keys = read_feature_file(dir / "keys.bin", 1);
  CHECK(keys.width() == 8);
  CHECK(keys.channels() == 3);
  CHECK(read_feature_file(dir / "values.bin", 1).channels() == 2);
  std::ifstream manifest(dir / "manifest.txt");
  std::size_t lines = 0;
  for (std::string line; std::getline(manifest, line);) ++lines;
  CHECK(lines == 9);
}
