#pragma once

// The seven voting algorithms over opaque, equal-length inputs and a
// user-supplied metric, plus the epsilon partition that majority and
// plurality share.

#include <array>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "votingfarm/protocol.hpp"

namespace vf {

// Distance between two opaque objects. Must satisfy d(x, x) == 0.
using Metric = std::function<double(ByteView, ByteView)>;

// |a - b| over two encoded doubles; +inf when either side is not 8 bytes.
inline double absolute_difference(ByteView a, ByteView b) {
  auto x = decode_double(a);
  auto y = decode_double(b);
  if (!x || !y) return HUGE_VAL;
  return std::fabs(*x - *y);
}

// Number of differing byte positions, plus the length difference.
inline double byte_distance(ByteView a, ByteView b) {
  std::size_t n = std::min(a.size(), b.size());
  double d = static_cast<double>(std::max(a.size(), b.size()) - n);
  for (std::size_t i = 0; i < n; ++i) d += a[i] != b[i] ? 1.0 : 0.0;
  return d;
}

// Items are indexed by voter. An empty item stands for an input that never
// arrived; only exact consensus distinguishes it, since real inputs are at
// least one byte long.
struct VoteInputs {
  std::span<const Bytes> items;
  Metric metric;
  double epsilon = kDefaultEpsilon;
  double scaling_factor = kDefaultScalingFactor;

  std::size_t size() const { return items.size(); }
};

struct Cluster {
  std::size_t representative = 0;  // index of the seed item
  int cardinality = 0;
};

enum class Presence : unsigned char { NotPresent = 0, Present = 1 };

// Greedy scan in index order: each item not yet absorbed seeds a block, and
// every later unabsorbed item strictly closer than epsilon to the seed joins it.
inline std::vector<Cluster> partition(const VoteInputs& in) {
  const std::size_t n = in.size();
  std::vector<bool> absorbed(n, false);
  std::vector<Cluster> blocks;
  for (std::size_t i = 0; i < n; ++i) {
    if (absorbed[i]) continue;
    absorbed[i] = true;
    Cluster c{i, 1};
    for (std::size_t j = i + 1; j < n; ++j) {
      if (!absorbed[j] && in.metric(in.items[i], in.items[j]) < in.epsilon) {
        absorbed[j] = true;
        ++c.cardinality;
      }
    }
    blocks.push_back(c);
  }
  return blocks;
}

namespace detail {

inline VoteResult success(const Bytes& vote) { return VoteResult{Outcome::Success, vote}; }
inline VoteResult failure() { return VoteResult{Outcome::Failure, {}}; }

inline Result<std::vector<double>> decode_all(const VoteInputs& in) {
  std::vector<double> xs;
  xs.reserve(in.size());
  for (const auto& item : in.items) {
    auto x = decode_double(item);
    if (!x) return raise(ErrorCode::InputSize);
    xs.push_back(*x);
  }
  return xs;
}

}  // namespace detail

inline VoteResult exact_consensus(const VoteInputs& in) {
  if (in.size() == 0 || in.items[0].empty()) return detail::failure();
  for (std::size_t i = 1; i < in.size(); ++i) {
    if (in.items[i].empty() || in.items[i] != in.items[0]) return detail::failure();
  }
  return detail::success(in.items[0]);
}

inline VoteResult majority(const VoteInputs& in) {
  const int n = static_cast<int>(in.size());
  for (const auto& c : partition(in)) {
    if (c.cardinality > n / 2) return detail::success(in.items[c.representative]);
  }
  return detail::failure();
}

// Repeatedly drops the farthest-apart pair among the remaining items until at
// most two remain; the vote is the first survivor of the last scan. Among
// equally distant pairs the last one met in the scan is dropped.
inline VoteResult median(const VoteInputs& in) {
  const std::size_t n = in.size();
  if (n == 0) return detail::failure();
  std::vector<Presence> status(n, Presence::Present);
  std::size_t first_present = 0;
  std::size_t present = 0;
  std::size_t ri = 0, rj = 0;
  do {
    present = 0;
    double max = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (status[i] != Presence::Present) continue;
      if (present++ == 0) first_present = i;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (status[j] != Presence::Present) continue;
        double dist = in.metric(in.items[i], in.items[j]);
        if (dist >= max) {
          max = dist;
          ri = i;
          rj = j;
        }
      }
    }
    if (max != -1.0) status[ri] = status[rj] = Presence::NotPresent;
  } while (present > 2);
  return detail::success(in.items[first_present]);
}

inline VoteResult plurality(const VoteInputs& in) {
  int max = 0;
  const Cluster* best = nullptr;
  auto blocks = partition(in);
  for (const auto& c : blocks) {
    if (c.cardinality > max) {
      max = c.cardinality;
      best = &c;
    }
  }
  if (max > 1) return detail::success(in.items[best->representative]);
  return detail::failure();
}

// w_i = 1 / (1 + prod_{j != i} d^2(x_j, x_i) / a^2), vote = sum(w_i x_i) / sum(w_i).
// A zero scaling factor is replaced by 1.
inline Result<VoteResult> weighted_average(const VoteInputs& in) {
  auto xs = detail::decode_all(in);
  if (!xs) return xs.error();
  const std::size_t n = in.size();
  double a = in.scaling_factor;
  if (a == 0.0) {
    log_line(LogLevel::Message, "WeightedAveraging", "Illegal scaling factor --- set to 1");
    a = 1.0;
  }

  std::vector<double> squared(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < i; ++j) {
      double f = in.metric(in.items[i], in.items[j]);
      squared[i * n + j] = squared[j * n + i] = f * f;
    }
  }

  std::vector<double> weight(n);
  double wsum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double partial = 1.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i) partial *= squared[i * n + j];
    }
    partial /= a * a;
    weight[i] = 1.0 / (1.0 + partial);
    wsum += weight[i];
  }

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += (*xs)[i] * weight[i];
  if (wsum == 0.0) return detail::failure();
  return detail::success(encode_double(sum / wsum));
}

// Counts, for every item, how many others lie strictly within epsilon; the
// first item whose count reaches floor(n/2) wins.
inline VoteResult simple_majority(const VoteInputs& in) {
  const std::size_t n = in.size();
  const std::size_t threshold = n >> 1;
  std::vector<std::size_t> agree(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i != j && in.metric(in.items[i], in.items[j]) < in.epsilon) ++agree[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (agree[i] >= threshold) return detail::success(in.items[i]);
  }
  return detail::failure();
}

inline Result<VoteResult> simple_average(const VoteInputs& in) {
  if (in.size() == 0) return raise(ErrorCode::InvalidVf);
  auto xs = detail::decode_all(in);
  if (!xs) return xs.error();
  double sum = 0.0;
  for (double x : *xs) sum += x;
  return detail::success(encode_double(sum / static_cast<double>(in.size())));
}

using VotingFunction = std::function<Result<VoteResult>(const VoteInputs&)>;

// Indexed by AlgorithmId.
inline const std::array<VotingFunction, kAlgorithmCount>& voting_table() {
  static const std::array<VotingFunction, kAlgorithmCount> table = {
      [](const VoteInputs& in) -> Result<VoteResult> { return exact_consensus(in); },
      [](const VoteInputs& in) -> Result<VoteResult> { return majority(in); },
      [](const VoteInputs& in) -> Result<VoteResult> { return median(in); },
      [](const VoteInputs& in) -> Result<VoteResult> { return plurality(in); },
      [](const VoteInputs& in) { return weighted_average(in); },
      [](const VoteInputs& in) -> Result<VoteResult> { return simple_majority(in); },
      [](const VoteInputs& in) { return simple_average(in); },
  };
  return table;
}

inline Result<VoteResult> dispatch(int algorithm, const VoteInputs& in) {
  if (!is_valid_algorithm(algorithm)) return raise(ErrorCode::WrongAlgId);
  return voting_table()[static_cast<std::size_t>(algorithm)](in);
}

inline Result<VoteResult> dispatch(AlgorithmId algorithm, const VoteInputs& in) {
  return dispatch(static_cast<int>(algorithm), in);
}

}  // namespace vf
