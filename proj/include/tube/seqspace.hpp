#pragma once

// Sequence spaces, generation orderings, and ordering banks.
//
// A SeqSpace is {1..V}^L split into contiguous blocks of size L'. Tokens and
// positions are 0-based throughout. A SingleOrder reveals one position per
// step; a GroupedOrder assigns every position of the scope to one of T steps
// (steps may be empty, so a step can reveal zero, one, or many positions).

#include <algorithm>
#include <cstdint>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include "tube/errors.hpp"
#include "tube/rng.hpp"

namespace tube {

// Permutation enumeration refuses scopes above this (n! growth).
inline constexpr int kSingleOrderEnumCap = 8;
// Grouped enumeration refuses when T^n exceeds this.
inline constexpr std::uint64_t kGroupedEnumCap = 1'000'000;

struct SeqSpace {
  int vocab = 0;   // V
  int length = 0;  // L
  int block = 0;   // L'

  SeqSpace() = default;
  SeqSpace(int v, int l, int b) : vocab(v), length(l), block(b) {
    if (v < 2) throw std::invalid_argument("SeqSpace: vocab must be >= 2");
    if (l < 1) throw std::invalid_argument("SeqSpace: length must be >= 1");
    if (b < 1 || b > l) throw std::invalid_argument("SeqSpace: block must be in [1, length]");
    if (l % b != 0) throw std::invalid_argument("SeqSpace: block must divide length");
  }

  int num_blocks() const { return length / block; }
  bool operator==(const SeqSpace&) const = default;
};

using Sequence = std::vector<int>;

inline bool is_valid_sequence(const SeqSpace& space, const Sequence& x) {
  if (static_cast<int>(x.size()) != space.length) return false;
  for (int t : x)
    if (t < 0 || t >= space.vocab) return false;
  return true;
}

inline void require_valid_sequence(const SeqSpace& space, const Sequence& x) {
  if (!is_valid_sequence(space, x)) throw std::invalid_argument("sequence does not fit the space");
}

// Contiguous blocks covering {0..L-1}.
inline std::vector<std::vector<int>> block_layout(const SeqSpace& space) {
  std::vector<std::vector<int>> blocks(space.num_blocks());
  for (int b = 0; b < space.num_blocks(); ++b) {
    blocks[b].resize(space.block);
    std::iota(blocks[b].begin(), blocks[b].end(), b * space.block);
  }
  return blocks;
}

struct SingleOrder {
  std::vector<int> positions;  // positions[t] = scope position revealed at step t

  int size() const { return static_cast<int>(positions.size()); }

  static SingleOrder identity(int n) {
    SingleOrder o;
    o.positions.resize(n);
    std::iota(o.positions.begin(), o.positions.end(), 0);
    return o;
  }

  void validate(int scope) const {
    if (size() != scope) throw std::invalid_argument("SingleOrder: wrong scope size");
    std::vector<bool> seen(scope, false);
    for (int p : positions) {
      if (p < 0 || p >= scope || seen[p]) throw std::invalid_argument("SingleOrder: not a permutation of the scope");
      seen[p] = true;
    }
  }

  bool operator==(const SingleOrder&) const = default;
};

// Stored as a step assignment: step_of[p] in [0, T). Groups are the preimages,
// kept in step order with empty groups preserved.
class GroupedOrder {
 public:
  GroupedOrder() = default;

  GroupedOrder(int num_steps, std::vector<int> step_of_position)
      : steps_(num_steps), step_of_(std::move(step_of_position)) {
    if (steps_ < 1) throw std::invalid_argument("GroupedOrder: T must be >= 1");
    for (int s : step_of_)
      if (s < 0 || s >= steps_) throw std::invalid_argument("GroupedOrder: step index out of range");
  }

  // Validates the §-level invariants: pairwise disjoint, cover the scope,
  // empties allowed.
  static GroupedOrder from_groups(int scope, const std::vector<std::vector<int>>& groups) {
    if (groups.empty()) throw std::invalid_argument("GroupedOrder: need at least one group");
    std::vector<int> step_of(scope, -1);
    for (int t = 0; t < static_cast<int>(groups.size()); ++t) {
      for (int p : groups[t]) {
        if (p < 0 || p >= scope) throw std::invalid_argument("GroupedOrder: position out of scope");
        if (step_of[p] != -1) throw std::invalid_argument("GroupedOrder: groups are not disjoint");
        step_of[p] = t;
      }
    }
    for (int p = 0; p < scope; ++p)
      if (step_of[p] == -1) throw std::invalid_argument("GroupedOrder: groups do not cover the scope");
    return GroupedOrder(static_cast<int>(groups.size()), std::move(step_of));
  }

  static GroupedOrder from_single(const SingleOrder& order) {
    std::vector<int> step_of(order.positions.size());
    for (int t = 0; t < order.size(); ++t) step_of[order.positions[t]] = t;
    return GroupedOrder(order.size(), std::move(step_of));
  }

  int scope() const { return static_cast<int>(step_of_.size()); }
  int steps() const { return steps_; }
  int step_of(int pos) const { return step_of_[pos]; }
  const std::vector<int>& step_assignment() const { return step_of_; }

  std::vector<std::vector<int>> groups() const {
    std::vector<std::vector<int>> g(steps_);
    for (int p = 0; p < scope(); ++p) g[step_of_[p]].push_back(p);
    return g;
  }

  bool all_singletons() const {
    std::vector<int> count(steps_, 0);
    for (int s : step_of_)
      if (++count[s] > 1) return false;
    return true;
  }

  // Sorted single-position groups with empties dropped give back a SingleOrder.
  SingleOrder to_single() const {
    if (!all_singletons()) throw std::invalid_argument("GroupedOrder: has a multi-position group");
    std::vector<std::pair<int, int>> by_step;
    by_step.reserve(step_of_.size());
    for (int p = 0; p < scope(); ++p) by_step.emplace_back(step_of_[p], p);
    std::sort(by_step.begin(), by_step.end());
    SingleOrder o;
    o.positions.reserve(by_step.size());
    for (auto& [s, p] : by_step) o.positions.push_back(p);
    return o;
  }

  bool operator==(const GroupedOrder&) const = default;

 private:
  int steps_ = 0;
  std::vector<int> step_of_;
};

using Ordering = std::variant<SingleOrder, GroupedOrder>;

enum class Provenance { enumerated, sampled };

struct OrderBank {
  int scope = 0;
  int steps = 0;  // T for grouped banks, 0 for single-order banks
  Provenance provenance = Provenance::enumerated;
  std::uint64_t seed = 0;  // recorded for sampled banks
  std::vector<Ordering> orders;

  std::size_t size() const { return orders.size(); }
  // Enumerated banks are uniform: 1/n! for permutations, T^-n for assignments.
  double prior_weight() const { return 1.0 / static_cast<double>(orders.size()); }
};

// --- enumeration ------------------------------------------------------------

template <class F>
void for_each_single_order(int n, F&& fn) {
  SingleOrder order = SingleOrder::identity(n);
  do {
    fn(static_cast<const SingleOrder&>(order));
  } while (std::next_permutation(order.positions.begin(), order.positions.end()));
}

// All n! permutations in lexicographic order, each exactly once.
inline OrderBank enumerate_single_orders(int n, int cap = kSingleOrderEnumCap) {
  if (n < 1) throw std::invalid_argument("enumerate_single_orders: scope must be >= 1");
  if (n > cap)
    throw std::invalid_argument("enumerate_single_orders: scope " + std::to_string(n) +
                                " exceeds enumeration cap " + std::to_string(cap));
  OrderBank bank;
  bank.scope = n;
  bank.provenance = Provenance::enumerated;
  for_each_single_order(n, [&](const SingleOrder& o) { bank.orders.emplace_back(o); });
  return bank;
}

inline std::uint64_t grouped_order_count(int n, int num_steps) {
  std::uint64_t total = 1;
  for (int i = 0; i < n; ++i) {
    if (total > kGroupedEnumCap * 16) return total;  // already hopeless, avoid overflow
    total *= static_cast<std::uint64_t>(num_steps);
  }
  return total;
}

// Step assignments in lexicographic order of (step_of[0], step_of[1], ...).
template <class F>
void for_each_grouped_order(int n, int num_steps, F&& fn) {
  std::vector<int> step_of(n, 0);
  for (;;) {
    fn(GroupedOrder(num_steps, step_of));
    int p = n - 1;
    while (p >= 0 && step_of[p] == num_steps - 1) step_of[p--] = 0;
    if (p < 0) break;
    ++step_of[p];
  }
}

// All T^n step assignments, each with prior weight T^-n.
inline OrderBank enumerate_grouped_orders(int n, int num_steps, std::uint64_t cap = kGroupedEnumCap) {
  if (n < 1 || num_steps < 1) throw std::invalid_argument("enumerate_grouped_orders: need n >= 1, T >= 1");
  const std::uint64_t total = grouped_order_count(n, num_steps);
  if (total > cap)
    throw std::invalid_argument("enumerate_grouped_orders: T^n = " + std::to_string(total) +
                                " exceeds enumeration cap " + std::to_string(cap));
  OrderBank bank;
  bank.scope = n;
  bank.steps = num_steps;
  bank.provenance = Provenance::enumerated;
  bank.orders.reserve(total);
  for_each_grouped_order(n, num_steps, [&](const GroupedOrder& g) { bank.orders.emplace_back(g); });
  return bank;
}

// --- sampling ---------------------------------------------------------------

// Fisher-Yates: every permutation has probability 1/n!.
inline SingleOrder sample_single_order(Rng& rng, int n) {
  if (n < 1) throw std::invalid_argument("sample_single_order: scope must be >= 1");
  SingleOrder order = SingleOrder::identity(n);
  for (int i = n - 1; i > 0; --i) {
    const int j = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order.positions[i], order.positions[j]);
  }
  return order;
}

// Each position draws its step independently and uniformly from {0..T-1}; the
// groups are the preimages with empties kept. This is the grouped-ordering
// prior p(pi) used throughout: every assignment has probability T^-n.
inline GroupedOrder sample_grouped_order(Rng& rng, int n, int num_steps) {
  if (n < 1 || num_steps < 1) throw std::invalid_argument("sample_grouped_order: need n >= 1, T >= 1");
  std::vector<int> step_of(n);
  for (int p = 0; p < n; ++p) step_of[p] = static_cast<int>(rng.next_below(num_steps));
  return GroupedOrder(num_steps, std::move(step_of));
}

inline OrderBank sample_single_order_bank(std::uint64_t seed, int n, int count) {
  Rng rng(seed);
  OrderBank bank;
  bank.scope = n;
  bank.provenance = Provenance::sampled;
  bank.seed = seed;
  bank.orders.reserve(count);
  for (int i = 0; i < count; ++i) bank.orders.emplace_back(sample_single_order(rng, n));
  return bank;
}

inline OrderBank sample_grouped_order_bank(std::uint64_t seed, int n, int num_steps, int count) {
  Rng rng(seed);
  OrderBank bank;
  bank.scope = n;
  bank.steps = num_steps;
  bank.provenance = Provenance::sampled;
  bank.seed = seed;
  bank.orders.reserve(count);
  for (int i = 0; i < count; ++i) bank.orders.emplace_back(sample_grouped_order(rng, n, num_steps));
  return bank;
}

// --- text format ------------------------------------------------------------
//
// One ordering per line. Single orders: space-separated positions. Grouped
// orders: `t:p1,p2` tokens, one per step, empty steps as `t:`. The header
// records scope size, T, provenance, and seed.

inline void write_order_bank(std::ostream& out, const OrderBank& bank) {
  out << "# scope=" << bank.scope << " steps=" << bank.steps
      << " provenance=" << (bank.provenance == Provenance::enumerated ? "enumerated" : "sampled")
      << " seed=" << bank.seed << " count=" << bank.orders.size() << "\n";
  for (const Ordering& ord : bank.orders) {
    if (std::holds_alternative<SingleOrder>(ord)) {
      const auto& o = std::get<SingleOrder>(ord);
      for (int t = 0; t < o.size(); ++t) out << (t ? " " : "") << o.positions[t];
    } else {
      const auto& g = std::get<GroupedOrder>(ord);
      const auto groups = g.groups();
      for (int t = 0; t < static_cast<int>(groups.size()); ++t) {
        if (t) out << ' ';
        out << t << ':';
        for (std::size_t i = 0; i < groups[t].size(); ++i) out << (i ? "," : "") << groups[t][i];
      }
    }
    out << "\n";
  }
}

inline OrderBank read_order_bank(std::istream& in) {
  std::string header;
  if (!std::getline(in, header) || header.rfind("# ", 0) != 0)
    throw ConfigError("order bank: missing header line");
  OrderBank bank;
  std::uint64_t count = 0;
  {
    std::istringstream hs(header.substr(2));
    std::string field;
    while (hs >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw ConfigError("order bank: malformed header field '" + field + "'");
      const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
      if (key == "scope") bank.scope = std::stoi(val);
      else if (key == "steps") bank.steps = std::stoi(val);
      else if (key == "provenance") bank.provenance = (val == "enumerated") ? Provenance::enumerated : Provenance::sampled;
      else if (key == "seed") bank.seed = std::stoull(val);
      else if (key == "count") count = std::stoull(val);
      else throw ConfigError("order bank: unknown header field '" + key + "'");
    }
  }
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    if (bank.steps == 0) {
      SingleOrder o;
      int p;
      while (ls >> p) o.positions.push_back(p);
      o.validate(bank.scope);
      bank.orders.emplace_back(std::move(o));
    } else {
      std::vector<std::vector<int>> groups(bank.steps);
      std::string tok;
      while (ls >> tok) {
        const auto colon = tok.find(':');
        if (colon == std::string::npos) throw ConfigError("order bank: malformed group token '" + tok + "'");
        const int t = std::stoi(tok.substr(0, colon));
        if (t < 0 || t >= bank.steps) throw ConfigError("order bank: step index out of range");
        std::string rest = tok.substr(colon + 1);
        std::istringstream ps(rest);
        std::string num;
        while (std::getline(ps, num, ','))
          if (!num.empty()) groups[t].push_back(std::stoi(num));
      }
      bank.orders.emplace_back(GroupedOrder::from_groups(bank.scope, groups));
    }
  }
  if (count != bank.orders.size()) throw ConfigError("order bank: count does not match body");
  return bank;
}

}  // namespace tube
