#pragma once

// Likelihood bounds and their Monte Carlo estimators. Every estimator input
// is a bank of per-ordering log-likelihoods l_k = log p_model(x | pi_k);
// exponentiation happens only inside the log-space kernels.
//
// The same functionals evaluated on a full enumerated bank (uniform ordering
// prior) give the population bounds, which serve as the bias oracle.

#include <atomic>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "tube/logspace.hpp"
#include "tube/models.hpp"

namespace tube {

struct SampleBank {
  std::vector<double> loglik;
  Provenance provenance = Provenance::sampled;
  std::uint64_t draw_id = 0;  // 0 marks enumerated / untracked banks

  std::size_t size() const { return loglik.size(); }
};

inline std::uint64_t next_draw_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

inline std::vector<Ordering> draw_orderings(const Regime& regime, int scope, int count, Rng& rng) {
  std::vector<Ordering> out;
  out.reserve(count);
  for (int k = 0; k < count; ++k) {
    if (regime.kind == Regime::Kind::single)
      out.emplace_back(sample_single_order(rng, scope));
    else
      out.emplace_back(sample_grouped_order(rng, scope, regime.steps));
  }
  return out;
}

inline SampleBank evaluate_bank(const CondModel& m, const Sequence& x, int block,
                                const std::vector<Ordering>& orders, Provenance prov,
                                std::uint64_t draw_id) {
  SampleBank bank;
  bank.provenance = prov;
  bank.draw_id = draw_id;
  bank.loglik.reserve(orders.size());
  for (const Ordering& ord : orders) bank.loglik.push_back(block_order_logprob(m, x, block, ord));
  return bank;
}

// K i.i.d. orderings from the regime's prior, evaluated on one block.
inline SampleBank draw_sample_bank(const CondModel& m, const Sequence& x, int block,
                                   const Regime& regime, int count, Rng& rng) {
  const auto orders = draw_orderings(regime, m.space().block, count, rng);
  return evaluate_bank(m, x, block, orders, Provenance::sampled, next_draw_id());
}

// Full enumeration of the regime's ordering space (uniform prior).
inline SampleBank enumerated_sample_bank(const CondModel& m, const Sequence& x, int block,
                                         const Regime& regime) {
  const int n = m.space().block;
  SampleBank bank;
  bank.provenance = Provenance::enumerated;
  if (regime.kind == Regime::Kind::single) {
    if (n > kSingleOrderEnumCap)
      throw std::invalid_argument("enumerated_sample_bank: scope exceeds enumeration cap");
    for_each_single_order(n, [&](const SingleOrder& o) {
      bank.loglik.push_back(logprob_given_single_order(m, x, block, o));
    });
  } else {
    if (grouped_order_count(n, regime.steps) > kGroupedEnumCap)
      throw std::invalid_argument("enumerated_sample_bank: T^n exceeds enumeration cap");
    for_each_grouped_order(n, regime.steps, [&](const GroupedOrder& g) {
      bank.loglik.push_back(logprob_given_grouped_order(m, x, block, g));
    });
  }
  return bank;
}

// Disjoint halves of one bank; both halves get fresh draw ids so they count
// as independent draws for the surrogate disjointness check.
inline std::pair<SampleBank, SampleBank> split_bank(const SampleBank& bank, std::size_t first_size) {
  if (first_size == 0 || first_size >= bank.size())
    throw std::invalid_argument("split_bank: both halves must be nonempty");
  SampleBank a, b;
  a.provenance = b.provenance = bank.provenance;
  a.draw_id = next_draw_id();
  b.draw_id = next_draw_id();
  a.loglik.assign(bank.loglik.begin(), bank.loglik.begin() + static_cast<std::ptrdiff_t>(first_size));
  b.loglik.assign(bank.loglik.begin() + static_cast<std::ptrdiff_t>(first_size), bank.loglik.end());
  return {std::move(a), std::move(b)};
}

// --- surrogates ---------------------------------------------------------------

struct Surrogate {
  enum class Kind { single_order, self_mixture, external_arm, external_arm_finetuned, fixed };
  Kind kind = Kind::fixed;
  double log_psi = 0.0;
  int m = 0;                         // averaging width for self kinds
  std::uint64_t source_draw_id = 0;  // bank the self surrogate was built from

  static const char* kind_name(Kind k) {
    switch (k) {
      case Kind::single_order: return "psi_pi";
      case Kind::self_mixture: return "psi_m";
      case Kind::external_arm: return "psi_arm";
      case Kind::external_arm_finetuned: return "psi_arm_ft";
      case Kind::fixed: return "psi_fixed";
    }
    return "?";
  }
};

// psi_M: the average of p_model(x|pi) over the bank's M orderings; M = 1 is
// the single-order surrogate psi_pi.
inline Surrogate surrogate_self(const SampleBank& bank_m) {
  if (bank_m.size() == 0) throw std::invalid_argument("surrogate_self: empty bank");
  Surrogate s;
  s.kind = bank_m.size() == 1 ? Surrogate::Kind::single_order : Surrogate::Kind::self_mixture;
  s.m = static_cast<int>(bank_m.size());
  s.source_draw_id = bank_m.draw_id;
  s.log_psi = log_mean_exp(bank_m.loglik);
  if (!std::isfinite(s.log_psi)) throw InvariantError("surrogate_self: psi must be strictly positive");
  return s;
}

// psi_ARM: exact chain-rule likelihood of an external left-to-right model.
inline Surrogate surrogate_arm(const CondModel& arm_model, const Sequence& x, bool finetuned = false) {
  Surrogate s;
  s.kind = finetuned ? Surrogate::Kind::external_arm_finetuned : Surrogate::Kind::external_arm;
  s.log_psi = arm_chain_logprob(arm_model, x);
  if (!std::isfinite(s.log_psi))
    throw InvariantError("surrogate_arm: ARM assigns probability zero; smooth the ARM fit");
  return s;
}

inline Surrogate surrogate_fixed(double log_psi) {
  if (!std::isfinite(log_psi)) throw std::invalid_argument("surrogate_fixed: log psi must be finite");
  return Surrogate{Surrogate::Kind::fixed, log_psi, 0, 0};
}

// Refits the left-to-right tables on synthetic data drawn from the evaluated
// model, pulling psi_ARM toward p_model.
inline CondModel finetune_surrogate_arm(const CondModel& arm_model, const std::vector<Sequence>& model_samples,
                                        double alpha) {
  return fit_arm(arm_model.space(), model_samples, alpha);
}

// --- estimators ---------------------------------------------------------------

enum class Direction { lower, upper, exact_value };

struct EstimatorParams {
  int k = 0;
  double beta = 0.0;
  int grid = 0;   // TVO Riemann partitions
  int s = 0;      // IS-VG-B inner sample size
  int pairs = 0;  // IS-VG-B n_p
  int m = 0;      // surrogate averaging width
};

struct BoundEstimate {
  double value = 0.0;
  Direction direction = Direction::lower;
  bool bound_preserving = false;
  std::string estimator;
  EstimatorParams params;
};

// ELBO: the single-sample lower bound log p(x | pi_1).
inline BoundEstimate elbo(const SampleBank& bank) {
  if (bank.size() != 1) throw std::invalid_argument("elbo: needs a bank of size 1");
  return {bank.loglik[0], Direction::lower, true, "elbo", {.k = 1}};
}

// ELBO_K: log of the Monte Carlo mean of p(x | pi_k). All entries -inf gives
// -inf, still a valid lower bound.
inline BoundEstimate elbo_k(const SampleBank& bank) {
  if (bank.size() == 0) throw std::invalid_argument("elbo_k: empty bank");
  return {log_mean_exp(bank.loglik), Direction::lower, true, "elbo_k",
          {.k = static_cast<int>(bank.size())}};
}

// TUBE: log psi + (p_hat - psi)/psi, evaluated as expm1(log p_hat - log psi)
// to avoid cancellation when psi is close to p_hat. Affine in p_hat, so the
// population upper bound survives Monte Carlo at every K. A self surrogate
// must come from a bank disjoint from the estimation bank.
inline BoundEstimate tube_estimate(const SampleBank& bank, const Surrogate& surrogate) {
  if (bank.size() == 0) throw std::invalid_argument("tube_estimate: empty bank");
  if (!std::isfinite(surrogate.log_psi)) throw InvariantError("tube_estimate: psi must be strictly positive");
  const bool self_kind = surrogate.kind == Surrogate::Kind::single_order ||
                         surrogate.kind == Surrogate::Kind::self_mixture;
  if (self_kind && surrogate.source_draw_id != 0 && surrogate.source_draw_id == bank.draw_id)
    throw InvariantError("tube_estimate: self surrogate shares the estimation bank; use disjoint draws");
  const double log_p_hat = log_mean_exp(bank.loglik);
  const double value = surrogate.log_psi + std::expm1(log_p_hat - surrogate.log_psi);
  return {value, Direction::upper, true, "tube",
          {.k = static_cast<int>(bank.size()), .m = surrogate.m}};
}

// CUBO_beta: (1/beta) log mean p^beta. Upper bound in the population, but the
// outer log makes the estimator biased downward (not bound-preserving).
inline double cubo_value(std::span<const double> loglik, double beta) {
  if (all_equal(loglik)) return loglik[0];  // mean of equals, any beta
  std::vector<double> scaled(loglik.size());
  for (std::size_t i = 0; i < loglik.size(); ++i) scaled[i] = beta * loglik[i];
  return log_mean_exp(scaled) / beta;
}

inline BoundEstimate cubo(const SampleBank& bank, double beta) {
  if (bank.size() == 0) throw std::invalid_argument("cubo: empty bank");
  if (beta < 1.0) throw std::invalid_argument("cubo: beta must be >= 1");
  return {cubo_value(bank.loglik, beta), Direction::upper, false, "cubo",
          {.k = static_cast<int>(bank.size()), .beta = beta}};
}

// TVO upper estimator: right Riemann sum over the grid beta_l = l / Lambda of
// the self-normalized weighted mean of l_k under weights exp(beta * l_k).
inline double tvo_value(std::span<const double> loglik, int grid) {
  if (all_equal(loglik)) return loglik[0];  // uniform weights at every beta
  std::vector<double> scaled(loglik.size()), weights(loglik.size());
  double total = 0.0;
  for (int lambda = 1; lambda <= grid; ++lambda) {
    const double beta = static_cast<double>(lambda) / grid;
    for (std::size_t i = 0; i < loglik.size(); ++i) scaled[i] = beta * loglik[i];
    softmax(scaled, weights);
    double term = 0.0;
    for (std::size_t i = 0; i < loglik.size(); ++i)
      if (weights[i] > 0.0) term += weights[i] * loglik[i];
    total += term;
  }
  return total / grid;
}

inline BoundEstimate tvo_upper(const SampleBank& bank, int grid) {
  if (grid < 1) throw std::invalid_argument("tvo_upper: grid must be >= 1");
  if (bank.size() == 0) throw std::invalid_argument("tvo_upper: empty bank");
  bool any_finite = false;
  for (double l : bank.loglik) any_finite |= (l > kNegInf);
  if (!any_finite) throw std::invalid_argument("tvo_upper: bank has no finite entry");
  return {tvo_value(bank.loglik, grid), Direction::upper, false, "tvo_u",
          {.k = static_cast<int>(bank.size()), .grid = grid}};
}

// IS-VG-B: mean of per-pair s-sample ELBOs plus the log of the mean Y/X
// ratio over n_p >= 2 independent pairs. Total ordering budget 2 * s * n_p.
struct BankPair {
  SampleBank x_side, y_side;
};

inline BoundEstimate isvgb(const std::vector<BankPair>& pairs) {
  if (pairs.size() < 2) throw std::invalid_argument("isvgb: needs n_p >= 2 pairs");
  const std::size_t s = pairs[0].x_side.size();
  if (s < 1) throw std::invalid_argument("isvgb: needs s >= 1 samples per side");
  bool constant = true;
  const double first = pairs[0].x_side.loglik[0];
  for (const BankPair& p : pairs) {
    if (p.x_side.size() != s || p.y_side.size() != s)
      throw std::invalid_argument("isvgb: all sides must have s samples");
    constant &= all_equal(p.x_side.loglik) && all_equal(p.y_side.loglik) &&
                p.x_side.loglik[0] == first && p.y_side.loglik[0] == first;
  }
  if (constant) return {first, Direction::upper, false, "isvgb",
                        {.k = static_cast<int>(2 * s * pairs.size()),
                         .s = static_cast<int>(s), .pairs = static_cast<int>(pairs.size())}};
  double elbo_term = 0.0, ratio_sum = 0.0;
  for (const BankPair& p : pairs) {
    const double lx = log_sum_exp(p.x_side.loglik);
    if (lx == kNegInf) throw std::invalid_argument("isvgb: a pair's X side is all zero");
    const double ly = log_sum_exp(p.y_side.loglik);
    elbo_term += lx - std::log(static_cast<double>(s));
    ratio_sum += std::exp(ly - lx);
  }
  const double value = elbo_term / static_cast<double>(pairs.size()) +
                       std::log(ratio_sum / static_cast<double>(pairs.size()));
  return {value, Direction::upper, false, "isvgb",
          {.k = static_cast<int>(2 * s * pairs.size()),
           .s = static_cast<int>(s), .pairs = static_cast<int>(pairs.size())}};
}

// --- population bounds ----------------------------------------------------------
//
// Exact (non-Monte-Carlo) values over a fully enumerated bank with uniform
// prior weights. These are the bias oracles.

inline double population_exact(std::span<const double> loglik) { return log_mean_exp(loglik); }

inline double population_elbo(std::span<const double> loglik) {
  double sum = 0.0;
  for (double l : loglik) {
    if (l == kNegInf) return kNegInf;
    sum += l;
  }
  return sum / static_cast<double>(loglik.size());
}

inline double population_tube(std::span<const double> loglik, double log_psi) {
  return log_psi + std::expm1(population_exact(loglik) - log_psi);
}

inline double population_cubo(std::span<const double> loglik, double beta) {
  return cubo_value(loglik, beta);
}

inline double population_tvo(std::span<const double> loglik, int grid) {
  return tvo_value(loglik, grid);
}

// Linear-space moments of p(x|pi) over the enumeration; safe at desk scale.
struct OrderingMoments {
  double mean = 0.0;
  double variance = 0.0;
};

inline OrderingMoments ordering_moments(std::span<const double> loglik) {
  OrderingMoments mo;
  const double n = static_cast<double>(loglik.size());
  for (double l : loglik) mo.mean += (l == kNegInf ? 0.0 : std::exp(l)) / n;
  for (double l : loglik) {
    const double d = (l == kNegInf ? 0.0 : std::exp(l)) - mo.mean;
    mo.variance += d * d / n;
  }
  return mo;
}

enum class PopulationKind { exact, elbo, tube, cubo, tvo };

// Convenience oracle over the whole sequence: per-block enumeration, values
// composed across blocks. TUBE composes per-block surrogates.
inline double population_bound(PopulationKind kind, const CondModel& m, const Sequence& x,
                               const Regime& regime, double beta = 2.0, int grid = 200,
                               std::span<const double> block_log_psi = {}) {
  double total = 0.0;
  for (int b = 0; b < m.space().num_blocks(); ++b) {
    const SampleBank bank = enumerated_sample_bank(m, x, b, regime);
    switch (kind) {
      case PopulationKind::exact: total += population_exact(bank.loglik); break;
      case PopulationKind::elbo: total += population_elbo(bank.loglik); break;
      case PopulationKind::tube:
        if (block_log_psi.size() != static_cast<std::size_t>(m.space().num_blocks()))
          throw std::invalid_argument("population_bound: tube needs one log psi per block");
        total += population_tube(bank.loglik, block_log_psi[static_cast<std::size_t>(b)]);
        break;
      case PopulationKind::cubo: total += population_cubo(bank.loglik, beta); break;
      case PopulationKind::tvo: total += population_tvo(bank.loglik, grid); break;
    }
  }
  return total;
}

}  // namespace tube
