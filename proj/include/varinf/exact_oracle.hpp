#pragma once

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <thread>
#include <vector>

#include "varinf/errors.hpp"
#include "varinf/graph_model.hpp"

namespace varinf {

inline constexpr std::size_t kDefaultEnumerationCap = 25;

/// Pairwise tables are ordered (+,+), (+,-), (-,+), (-,-) for (x_i, x_j)
/// with i < j, matching the reparameterized table layout used throughout.
using PairTable = std::array<double, 4>;

struct ExactAnswers {
  double log_z = 0.0;
  std::vector<double> singleton;  // p_i(x_i = +1)
  std::vector<PairTable> pairwise;
};

namespace detail {

/// Partial sums over one block of states, kept relative to a running max.
struct EnumBlock {
  double log_scale = -INFINITY;
  double total = 0.0;
  std::vector<double> plus;       // mass with x_i = +1
  std::vector<double> both_plus;  // mass with x_i = x_j = +1

  void rescale(double new_scale) {
    const double f = std::exp(log_scale - new_scale);
    total *= f;
    for (auto& v : plus) v *= f;
    for (auto& v : both_plus) v *= f;
    log_scale = new_scale;
  }

  void merge(const EnumBlock& o) {
    if (o.log_scale == -INFINITY) return;
    if (o.log_scale > log_scale) rescale(o.log_scale);
    const double f = std::exp(o.log_scale - log_scale);
    total += f * o.total;
    for (std::size_t i = 0; i < plus.size(); ++i) plus[i] += f * o.plus[i];
    for (std::size_t k = 0; k < both_plus.size(); ++k) both_plus[k] += f * o.both_plus[k];
  }
};

/// Enumerates all states whose high bits equal `high`, walking the low
/// `low_bits` bits in Gray-code order. Bit i set means x_i = +1.
inline EnumBlock enumerate_block(const IsingModel& m, std::uint64_t high, std::size_t low_bits,
                                 bool with_marginals) {
  const auto n = m.node_count();
  const auto& g = m.graph;
  EnumBlock blk;
  if (with_marginals) {
    blk.plus.assign(n, 0.0);
    blk.both_plus.assign(m.edge_count(), 0.0);
  }
  std::vector<int> x(n);
  std::uint64_t state = high << low_bits;
  for (std::size_t i = 0; i < n; ++i) x[i] = (state >> i) & 1U ? 1 : -1;
  double neg_energy = -m.energy(x);

  const std::uint64_t count = std::uint64_t{1} << low_bits;
  for (std::uint64_t t = 0; t < count; ++t) {
    if (t > 0) {
      const auto b = static_cast<std::size_t>(std::countr_zero(t));
      double local = m.field[b];
      for (const auto& inc : g.neighbors(b)) local += m.coupling[inc.edge] * x[inc.node];
      neg_energy -= 2.0 * x[b] * local;
      x[b] = -x[b];
      state ^= std::uint64_t{1} << b;
    }
    if (neg_energy > blk.log_scale) {
      if (blk.log_scale == -INFINITY)
        blk.log_scale = neg_energy;
      else
        blk.rescale(neg_energy);
    }
    const double w = std::exp(neg_energy - blk.log_scale);
    blk.total += w;
    if (with_marginals) {
      for (std::size_t i = 0; i < n; ++i)
        if (x[i] > 0) blk.plus[i] += w;
      for (std::size_t k = 0; k < blk.both_plus.size(); ++k) {
        const auto& e = g.edge(k);
        if (x[e.i] > 0 && x[e.j] > 0) blk.both_plus[k] += w;
      }
    }
  }
  return blk;
}

/// Splits the state space into 2^k blocks, evaluates them on up to
/// `threads` workers and reduces in block order so the result is
/// independent of the worker count.
inline EnumBlock enumerate_all(const IsingModel& m, bool with_marginals, std::size_t cap,
                               unsigned threads) {
  const auto n = m.node_count();
  if (n > cap) throw EnumerationCapExceeded(n, cap);
  const std::size_t high_bits = n > 16 ? std::min<std::size_t>(n - 12, 8) : 0;
  const std::size_t low_bits = n - high_bits;
  const std::size_t blocks = std::size_t{1} << high_bits;

  std::vector<EnumBlock> parts(blocks);
  if (threads == 0) threads = std::max(1U, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, blocks));
  if (threads <= 1) {
    for (std::size_t b = 0; b < blocks; ++b) parts[b] = enumerate_block(m, b, low_bits, with_marginals);
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < blocks; b += threads)
          parts[b] = enumerate_block(m, b, low_bits, with_marginals);
      });
    }
    for (auto& t : pool) t.join();
  }
  EnumBlock acc = std::move(parts[0]);
  for (std::size_t b = 1; b < blocks; ++b) acc.merge(parts[b]);
  return acc;
}

}  // namespace detail

/// log Z by exhaustive enumeration in log-sum-exp form.
inline double exact_log_partition(const IsingModel& m, std::size_t cap = kDefaultEnumerationCap,
                                  unsigned threads = 1) {
  const auto acc = detail::enumerate_all(m, false, cap, threads);
  return acc.log_scale + std::log(acc.total);
}

/// Exact Z, singleton and pairwise marginals from a single sweep.
inline ExactAnswers exact_marginals(const IsingModel& m, std::size_t cap = kDefaultEnumerationCap,
                                    unsigned threads = 1) {
  const auto acc = detail::enumerate_all(m, true, cap, threads);
  ExactAnswers out;
  out.log_z = acc.log_scale + std::log(acc.total);
  out.singleton.resize(m.node_count());
  for (std::size_t i = 0; i < m.node_count(); ++i) out.singleton[i] = acc.plus[i] / acc.total;
  out.pairwise.resize(m.edge_count());
  for (std::size_t k = 0; k < m.edge_count(); ++k) {
    const auto& e = m.graph.edge(k);
    const double pp = acc.both_plus[k] / acc.total;
    const double pi = out.singleton[e.i];
    const double pj = out.singleton[e.j];
    out.pairwise[k] = {pp, pi - pp, pj - pp, (1.0 - pi) - (pj - pp)};
  }
  return out;
}

}  // namespace varinf
