#pragma once

// Test-only helpers: linear-space brute-force oracles (independent of the
// library's log-space path) and a generator of random small model instances.

#include <algorithm>
#include <numeric>
#include <vector>

#include "tube/experiments.hpp"

namespace testsupport {

using namespace tube;

// Product of conditionals along one grouped ordering, in plain probability
// space, via the structured Context API.
inline double oracle_order_prob(const CondModel& m, const Sequence& x, int block,
                                const std::vector<std::vector<int>>& groups) {
  const int n = m.space().block;
  Context ctx;
  ctx.block = block;
  if (block > 0)
    ctx.prev_tokens.assign(x.begin() + (block - 1) * n, x.begin() + block * n);
  ctx.state.assign(n, kMasked);
  double prob = 1.0;
  for (const auto& group : groups) {
    for (int r : group) prob *= m.cond(block * n + r, ctx, x[block * n + r]);
    for (int r : group) ctx.state[r] = x[block * n + r];
  }
  return prob;
}

inline double oracle_order_prob(const CondModel& m, const Sequence& x, int block,
                                const SingleOrder& order) {
  std::vector<std::vector<int>> groups;
  for (int p : order.positions) groups.push_back({p});
  return oracle_order_prob(m, x, block, groups);
}

// Exact p(x^block | prev) by direct enumeration and averaging, no log-space.
inline double oracle_exact_prob(const CondModel& m, const Sequence& x, int block, const Regime& regime) {
  const int n = m.space().block;
  double sum = 0.0;
  std::size_t count = 0;
  if (regime.kind == Regime::Kind::single) {
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::vector<std::vector<int>> groups;
      for (int p : perm) groups.push_back({p});
      sum += oracle_order_prob(m, x, block, groups);
      ++count;
    } while (std::next_permutation(perm.begin(), perm.end()));
  } else {
    std::vector<int> step(n, 0);
    for (;;) {
      std::vector<std::vector<int>> groups(regime.steps);
      for (int p = 0; p < n; ++p) groups[step[p]].push_back(p);
      sum += oracle_order_prob(m, x, block, groups);
      ++count;
      int p = n - 1;
      while (p >= 0 && step[p] == regime.steps - 1) step[p--] = 0;
      if (p < 0) break;
      ++step[p];
    }
  }
  return sum / static_cast<double>(count);
}

inline double oracle_exact_logprob_full(const CondModel& m, const Sequence& x, const Regime& regime) {
  double nats = 0.0;
  for (int b = 0; b < m.space().num_blocks(); ++b) nats += std::log(oracle_exact_prob(m, x, b, regime));
  return nats;
}

// All sequences of a (small) space.
inline std::vector<Sequence> all_sequences(const SeqSpace& space) {
  std::vector<Sequence> out;
  Sequence x(space.length, 0);
  for (;;) {
    out.push_back(x);
    int d = 0;
    while (d < space.length && x[d] == space.vocab - 1) x[d++] = 0;
    if (d == space.length) break;
    ++x[d];
  }
  return out;
}

struct SuiteInstance {
  SeqSpace space;
  GroundTruthJoint joint;
  CondModel model;
  Regime regime;
  std::vector<Sequence> xs;
  double epsilon = 0.0;
};

// Random small single-block instances: V in 2..4, L' in 2..6, bayes-exact
// models perturbed by a cycling epsilon, evaluated under single and grouped
// regimes.
inline std::vector<SuiteInstance> make_random_suite(int count, std::uint64_t seed, int num_xs = 3) {
  const double eps_grid[4] = {0.0, 0.2, 0.5, 0.8};
  std::vector<SuiteInstance> suite;
  for (int i = 0; i < count; ++i) {
    Rng rng = derive_stream(seed, {0x57, static_cast<std::uint64_t>(i)});
    const int vocab = 2 + static_cast<int>(rng.next_below(3));
    const int block = 2 + static_cast<int>(rng.next_below(5));
    SuiteInstance inst{SeqSpace(vocab, block, block), GroundTruthJoint{}, CondModel{}, Regime::ao_arm(), {}, 0.0};
    inst.joint = GroundTruthJoint::random_full(inst.space, rng);
    inst.epsilon = eps_grid[i % 4];
    CondModel bayes = bayes_model_from_joint(inst.joint);
    inst.model = inst.epsilon == 0.0 ? bayes : perturb_model(bayes, inst.epsilon, rng);
    switch (i % 3) {
      case 0: inst.regime = Regime::ao_arm(); break;
      case 1: inst.regime = Regime::mdm(2); break;
      default: inst.regime = Regime::mdm(3); break;
    }
    for (int k = 0; k < num_xs; ++k) inst.xs.push_back(inst.joint.sample(rng));
    suite.push_back(std::move(inst));
  }
  return suite;
}

}  // namespace testsupport
