#pragma once

// Seeded experiment drivers: the estimator comparison table, the CUBO
// beta/bank-size sweep, the surrogate ablation, and the unbiasedness/variance
// replication study. All randomness flows through streams derived from the
// master seed, so outputs are byte-identical for a given seed regardless of
// the worker count.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <mutex>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "tube/estimators.hpp"
#include "tube/models.hpp"

namespace tube {

// exp of the negative per-token log-likelihood. Upper bounds on
// log-likelihood become lower bounds on PPL and vice versa.
inline double perplexity(double nats, std::int64_t token_count) {
  if (token_count < 1) throw std::invalid_argument("perplexity: token_count must be >= 1");
  return std::exp(-nats / static_cast<double>(token_count));
}

// Nats-space tolerance when flagging a mean against its reference; absorbs
// summation-order noise without hiding real bias.
inline constexpr double kViolationTolNats = 1e-9;

struct GroundTruthSpec {
  enum class Kind { random_joint, block_markov };
  Kind kind = Kind::random_joint;
  std::uint64_t seed = 1;
};

struct ModelSpec {
  enum class Source { fit, bayes, perturbed, toy_a };
  Source source = Source::fit;
  double epsilon = 0.0;
  double alpha = 1.0;
  int masks_per_example = 8;
};

struct EstimatorSpec {
  double beta = 2.0;
  int tvo_grid = 200;
  int isvgb_pairs = 2;
  int isvgb_s = 0;  // 0 resolves to bank/4
};

struct ExperimentConfig {
  SeqSpace space{2, 8, 4};
  GroundTruthSpec ground_truth;
  ModelSpec model;
  std::vector<int> nfe{1, 2, 4};
  bool ao_arm = true;
  int bank_size = 0;  // 0 resolves by block size: 24 / 64 / 128
  EstimatorSpec est;
  int reseeds = 10;
  int train_size = 2048;
  int test_size = 256;
  std::uint64_t master_seed = 0;
  int jobs = 1;
};

inline int resolve_bank_size(const ExperimentConfig& cfg) {
  if (cfg.bank_size > 0) return cfg.bank_size;
  switch (cfg.space.block) {
    case 4: return 24;
    case 8: return 64;
    case 16: return 128;
    default:
      throw ConfigError("bank_size must be set explicitly for block size " + std::to_string(cfg.space.block));
  }
}

inline int resolve_isvgb_s(const ExperimentConfig& cfg, int bank) {
  const int s = cfg.est.isvgb_s > 0 ? cfg.est.isvgb_s : std::max(1, bank / 4);
  if (2 * s * cfg.est.isvgb_pairs > bank)
    throw ConfigError("isvgb budget 2*s*n_p exceeds the bank size");
  return s;
}

// --- deterministic parallel helper ---------------------------------------------

template <class F>
void parallel_for(std::size_t count, int jobs, F&& fn) {
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(count)));
  if (jobs <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(jobs));
  for (int j = 0; j < jobs; ++j) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mutex);
          if (!error) error = std::current_exception();
          return;
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

// --- instance construction ------------------------------------------------------

struct Instance {
  GroundTruthJoint joint;
  std::vector<Sequence> train;
  std::vector<Sequence> test;
  CondModel model;
  CondModel arm;  // left-to-right baseline fitted on the training corpus
};

inline GroundTruthJoint build_ground_truth(const SeqSpace& space, const GroundTruthSpec& spec) {
  Rng rng = derive_stream(spec.seed, {0x6A});
  GroundTruthJoint joint = spec.kind == GroundTruthSpec::Kind::random_joint
                               ? GroundTruthJoint::random_full(space, rng)
                               : GroundTruthJoint::random_block_markov(space, rng);
  joint.validate();
  return joint;
}

inline CondModel build_model(const ExperimentConfig& cfg, const GroundTruthJoint& joint,
                             const std::vector<Sequence>& train) {
  switch (cfg.model.source) {
    case ModelSpec::Source::bayes:
      return bayes_model_from_joint(joint);
    case ModelSpec::Source::perturbed: {
      Rng rng = derive_stream(cfg.master_seed, {0x50});
      return perturb_model(bayes_model_from_joint(joint), cfg.model.epsilon, rng);
    }
    case ModelSpec::Source::toy_a: {
      if (!(cfg.space == SeqSpace(2, 2, 2)))
        throw ConfigError("model source toy-a requires space vocab=2 length=2 block=2");
      return make_toy_a();
    }
    case ModelSpec::Source::fit:
    default: {
      Rng rng = derive_stream(cfg.master_seed, {0x46});
      return fit_tabular(cfg.space, train, cfg.model.alpha, cfg.model.masks_per_example, rng);
    }
  }
}

inline Instance build_instance(const ExperimentConfig& cfg) {
  Instance inst{.joint = build_ground_truth(cfg.space, cfg.ground_truth),
                .train = {},
                .test = {},
                .model = CondModel(),
                .arm = CondModel()};
  Rng train_rng = derive_stream(cfg.master_seed, {0x44, 0});
  Rng test_rng = derive_stream(cfg.master_seed, {0x44, 1});
  inst.train.reserve(cfg.train_size);
  for (int i = 0; i < cfg.train_size; ++i) inst.train.push_back(inst.joint.sample(train_rng));
  inst.test.reserve(cfg.test_size);
  for (int i = 0; i < cfg.test_size; ++i) inst.test.push_back(inst.joint.sample(test_rng));
  inst.model = build_model(cfg, inst.joint, inst.train);
  inst.arm = fit_arm(cfg.space, inst.train, cfg.model.alpha);
  return inst;
}

// --- comparison table -------------------------------------------------------------

struct TableRow {
  int l_prime = 0;
  std::string regime;
  std::string estimator;
  double mean_ppl = 0.0;
  double std_ppl = 0.0;
  double mean_nats = 0.0;  // per-token
  bool violation = false;
  double gap = 0.0;  // |TUBE_PPL - ARM_PPL| for the row's regime
};

struct EstimateTable {
  std::vector<TableRow> rows;

  const TableRow* find(const std::string& regime, const std::string& estimator) const {
    for (const TableRow& r : rows)
      if (r.regime == regime && r.estimator == estimator) return &r;
    return nullptr;
  }
};

inline std::string regime_label(const Regime& r) {
  return r.kind == Regime::Kind::single ? "ao-arm" : "nfe=" + std::to_string(r.steps);
}

inline bool regime_enumerable(const Regime& r, int scope) {
  if (r.kind == Regime::Kind::single) return scope <= kSingleOrderEnumCap;
  return grouped_order_count(scope, r.steps) <= kGroupedEnumCap;
}

namespace detail {

inline double sample_std(std::span<const double> v, double mean) {
  if (v.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double mean_of(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

// Per-token nats of one estimator set for one re-seed: every estimator
// consumes the same shared orderings, applied per block and summed.
struct RowSeedResult {
  double elbo = 0, elbo_k = 0, cubo = 0, tvo = 0, isvgb = 0, tube = 0;
};

inline RowSeedResult eval_row_seed(const CondModel& model, const std::vector<Sequence>& test,
                                   const Regime& regime, int bank_size, const EstimatorSpec& est,
                                   int isvgb_s, Rng& rng) {
  const int blocks = model.space().num_blocks();
  const int half = bank_size / 2;
  auto orders = draw_orderings(regime, model.space().block, bank_size, rng);
  const std::uint64_t id_full = next_draw_id(), id_p = next_draw_id(), id_psi = next_draw_id();
  RowSeedResult total{};
  for (const Sequence& x : test) {
    for (int b = 0; b < blocks; ++b) {
      SampleBank full = evaluate_bank(model, x, b, orders, Provenance::sampled, id_full);
      total.elbo += full.loglik[0];
      total.elbo_k += elbo_k(full).value;
      total.cubo += cubo(full, est.beta).value;
      total.tvo += tvo_upper(full, est.tvo_grid).value;
      {
        std::vector<BankPair> pairs(static_cast<std::size_t>(est.isvgb_pairs));
        for (int j = 0; j < est.isvgb_pairs; ++j) {
          auto& p = pairs[static_cast<std::size_t>(j)];
          const auto x_begin = full.loglik.begin() + 2 * j * isvgb_s;
          p.x_side.loglik.assign(x_begin, x_begin + isvgb_s);
          p.y_side.loglik.assign(x_begin + isvgb_s, x_begin + 2 * isvgb_s);
        }
        total.isvgb += isvgb(pairs).value;
      }
      {
        SampleBank p_bank{{full.loglik.begin(), full.loglik.begin() + half}, Provenance::sampled, id_p};
        SampleBank psi_bank{{full.loglik.begin() + half, full.loglik.end()}, Provenance::sampled, id_psi};
        total.tube += tube_estimate(p_bank, surrogate_self(psi_bank)).value;
      }
    }
  }
  return total;
}

}  // namespace detail

inline EstimateTable run_comparison_table(const ExperimentConfig& cfg, const Instance& inst) {
  const int bank = resolve_bank_size(cfg);
  if (bank < 2) throw ConfigError("bank_size must be >= 2");
  const int isvgb_s = resolve_isvgb_s(cfg, bank);
  const std::int64_t tokens = static_cast<std::int64_t>(cfg.test_size) * cfg.space.length;
  if (cfg.test_size < 1) throw ConfigError("test_size must be >= 1");
  if (cfg.reseeds < 2) throw ConfigError("reseeds must be >= 2 for std reporting");

  std::vector<Regime> regimes;
  for (int t : cfg.nfe) {
    if (t < 1) throw ConfigError("nfe entries must be >= 1");
    regimes.push_back(Regime::mdm(t));
  }
  if (cfg.ao_arm) regimes.push_back(Regime::ao_arm());

  // ARM baseline: exact chain-rule likelihood of the left-to-right fit.
  double arm_nats = 0.0;
  for (const Sequence& x : inst.test) arm_nats += arm_chain_logprob(inst.arm, x);
  const double arm_nats_pt = arm_nats / static_cast<double>(tokens);
  const double arm_ppl = perplexity(arm_nats, tokens);

  EstimateTable table;
  table.rows.push_back({cfg.space.block, "arm", "arm_exact", arm_ppl, 0.0, arm_nats_pt, false, 0.0});

  const std::size_t n_tasks = regimes.size() * static_cast<std::size_t>(cfg.reseeds);
  std::vector<detail::RowSeedResult> slots(n_tasks);
  parallel_for(n_tasks, cfg.jobs, [&](std::size_t task) {
    const std::size_t row = task / static_cast<std::size_t>(cfg.reseeds);
    const std::size_t seed_idx = task % static_cast<std::size_t>(cfg.reseeds);
    Rng rng = derive_stream(cfg.master_seed, {0xE0, row, seed_idx});
    slots[task] = detail::eval_row_seed(inst.model, inst.test, regimes[row], bank, cfg.est, isvgb_s, rng);
  });

  for (std::size_t row = 0; row < regimes.size(); ++row) {
    const Regime& regime = regimes[row];
    const std::string label = regime_label(regime);
    const bool enumerable = regime_enumerable(regime, cfg.space.block);

    struct Column {
      std::string name;
      Direction direction;
      std::vector<double> nats_pt;  // per re-seed
    };
    std::vector<Column> cols = {{"elbo", Direction::lower, {}},   {"elbo_k", Direction::lower, {}},
                                {"cubo", Direction::upper, {}},   {"tvo_u", Direction::upper, {}},
                                {"isvgb", Direction::upper, {}},  {"tube", Direction::upper, {}}};
    for (int j = 0; j < cfg.reseeds; ++j) {
      const auto& r = slots[row * static_cast<std::size_t>(cfg.reseeds) + static_cast<std::size_t>(j)];
      const double t = static_cast<double>(tokens);
      cols[0].nats_pt.push_back(r.elbo / t);
      cols[1].nats_pt.push_back(r.elbo_k / t);
      cols[2].nats_pt.push_back(r.cubo / t);
      cols[3].nats_pt.push_back(r.tvo / t);
      cols[4].nats_pt.push_back(r.isvgb / t);
      cols[5].nats_pt.push_back(r.tube / t);
    }

    // At T=1 the prior is a point mass, so every estimator in the row must be
    // bit-identical.
    if (regime.kind == Regime::Kind::grouped && regime.steps == 1) {
      for (const Column& c : cols)
        for (int j = 0; j < cfg.reseeds; ++j)
          if (c.nats_pt[static_cast<std::size_t>(j)] != cols[0].nats_pt[0])
            throw InvariantError("comparison table: NFE=1 row is not collapsed");
    }

    // Reference: exact per-block value when the ordering space enumerates,
    // reported instead of ELBO_K; otherwise the Monte Carlo ELBO_K column
    // itself is the reference.
    double ref_nats_pt;
    if (enumerable) {
      double exact = 0.0;
      for (const Sequence& x : inst.test)
        for (int b = 0; b < cfg.space.num_blocks(); ++b) exact += exact_block_logprob(inst.model, x, b, regime);
      ref_nats_pt = exact / static_cast<double>(tokens);
    } else {
      ref_nats_pt = detail::mean_of(cols[1].nats_pt);
    }

    double tube_mean_ppl = 0.0;
    std::vector<TableRow> pending;
    for (const Column& c : cols) {
      if (enumerable && c.name == "elbo_k") {
        pending.push_back({cfg.space.block, label, "exact", std::exp(-ref_nats_pt), 0.0, ref_nats_pt,
                           false, 0.0});
        continue;
      }
      const double mean_nats = detail::mean_of(c.nats_pt);
      std::vector<double> ppls;
      ppls.reserve(c.nats_pt.size());
      for (double n : c.nats_pt) ppls.push_back(std::exp(-n));
      const double mean_ppl = detail::mean_of(ppls);
      const bool viol = c.direction == Direction::upper && mean_nats < ref_nats_pt - kViolationTolNats;
      if (c.name == "tube") tube_mean_ppl = mean_ppl;
      pending.push_back({cfg.space.block, label, c.name, mean_ppl, detail::sample_std(ppls, mean_ppl),
                         mean_nats, viol, 0.0});
    }

    const double gap = std::abs(tube_mean_ppl - arm_ppl);
    for (TableRow& r : pending) {
      r.gap = gap;
      table.rows.push_back(std::move(r));
    }
  }
  return table;
}

// --- CUBO sweep -------------------------------------------------------------------
//
// Replicate-mean CUBO over a (beta, bank size) grid, with subsets drawn
// without replacement from the fully enumerated single-order bank, flagged
// against the enumerated exact value.

struct SweepCell {
  double beta = 0.0;
  int bank_size = 0;
  double mean_ppl = 0.0;
  double mean_nats = 0.0;  // per-token
  bool violation = false;
};

inline std::vector<SweepCell> cubo_sweep(const ExperimentConfig& cfg, const Instance& inst,
                                         std::span<const double> betas, std::span<const int> bank_sizes,
                                         int replicates) {
  const Regime regime = Regime::ao_arm();
  if (!regime_enumerable(regime, cfg.space.block))
    throw ConfigError("cubo_sweep: block size exceeds the enumeration cap");
  if (inst.test.empty()) throw ConfigError("cubo_sweep: empty test set");
  const int blocks = cfg.space.num_blocks();
  const std::int64_t tokens = static_cast<std::int64_t>(inst.test.size()) * cfg.space.length;

  // Enumerated log-likelihood lists per (sequence, block).
  std::vector<std::vector<double>> enum_ll;
  enum_ll.reserve(inst.test.size() * static_cast<std::size_t>(blocks));
  double exact_total = 0.0;
  for (const Sequence& x : inst.test)
    for (int b = 0; b < blocks; ++b) {
      enum_ll.push_back(enumerated_sample_bank(inst.model, x, b, regime).loglik);
      exact_total += log_mean_exp(enum_ll.back());
    }
  const double exact_nats_pt = exact_total / static_cast<double>(tokens);
  const std::size_t enum_size = enum_ll.front().size();
  for (int bs : bank_sizes)
    if (bs < 1 || static_cast<std::size_t>(bs) > enum_size)
      throw ConfigError("cubo_sweep: bank sizes must lie in [1, enumeration total]");
  if (betas.empty() || bank_sizes.empty() || replicates < 1)
    throw ConfigError("cubo_sweep: need nonempty grids and replicates >= 1");
  for (double beta : betas)
    if (beta < 1.0) throw ConfigError("cubo_sweep: beta grid must be >= 1");

  std::vector<SweepCell> cells;
  std::vector<double> sums(betas.size() * bank_sizes.size(), 0.0);
  std::vector<std::size_t> indices(enum_size);
  std::vector<double> subset;
  for (int rep = 0; rep < replicates; ++rep) {
    Rng rng = derive_stream(cfg.master_seed, {0x5E, static_cast<std::uint64_t>(rep)});
    std::iota(indices.begin(), indices.end(), 0);
    for (std::size_t i = enum_size - 1; i > 0; --i)
      std::swap(indices[i], indices[rng.next_below(i + 1)]);
    for (std::size_t bi = 0; bi < bank_sizes.size(); ++bi) {
      const int bs = bank_sizes[bi];
      for (std::size_t gi = 0; gi < betas.size(); ++gi) {
        double total = 0.0;
        for (const auto& ll : enum_ll) {
          subset.clear();
          for (int k = 0; k < bs; ++k) subset.push_back(ll[indices[static_cast<std::size_t>(k)]]);
          total += cubo_value(subset, betas[gi]);
        }
        sums[gi * bank_sizes.size() + bi] += total / static_cast<double>(tokens);
      }
    }
  }
  for (std::size_t gi = 0; gi < betas.size(); ++gi)
    for (std::size_t bi = 0; bi < bank_sizes.size(); ++bi) {
      const double mean_nats = sums[gi * bank_sizes.size() + bi] / replicates;
      cells.push_back({betas[gi], bank_sizes[bi], std::exp(-mean_nats), mean_nats,
                       mean_nats < exact_nats_pt - kViolationTolNats});
    }
  return cells;
}

// --- surrogate ablation -------------------------------------------------------------
//
// TUBE with different surrogate constructions: psi_pi (M = 1), psi_M over an
// M grid with nested ordering draws, the external ARM chain, its
// model-sample-finetuned variant, and the exact-oracle surrogate.

struct AblationRow {
  std::string surrogate;
  int m = 0;
  double mean_ppl = 0.0;
  double std_ppl = 0.0;
  double mean_nats = 0.0;      // per-token
  double mean_gap_nats = 0.0;  // mean TUBE minus exact, per token
};

inline std::vector<AblationRow> surrogate_ablation(const ExperimentConfig& cfg, const Instance& inst,
                                                   std::span<const int> m_grid, int k, int replicates,
                                                   int finetune_size = 4096) {
  const Regime regime = Regime::ao_arm();
  if (!regime_enumerable(regime, cfg.space.block))
    throw ConfigError("surrogate_ablation: block size exceeds the enumeration cap");
  if (inst.test.empty()) throw ConfigError("surrogate_ablation: empty test set");
  if (m_grid.empty() || k < 1 || replicates < 2) throw ConfigError("surrogate_ablation: bad grid");
  int m_max = 0;
  for (int m : m_grid) {
    if (m < 1) throw ConfigError("surrogate_ablation: M entries must be >= 1");
    m_max = std::max(m_max, m);
  }
  const int blocks = cfg.space.num_blocks();
  const std::int64_t tokens = static_cast<std::int64_t>(inst.test.size()) * cfg.space.length;

  double exact_total = 0.0;
  for (const Sequence& x : inst.test)
    for (int b = 0; b < blocks; ++b) exact_total += exact_block_logprob(inst.model, x, b, regime);
  const double exact_nats_pt = exact_total / static_cast<double>(tokens);

  // Finetuned ARM: refit on synthetic sequences drawn from the evaluated model.
  Rng ft_rng = derive_stream(cfg.master_seed, {0xF7});
  std::vector<Sequence> synthetic;
  synthetic.reserve(static_cast<std::size_t>(finetune_size));
  for (int i = 0; i < finetune_size; ++i) synthetic.push_back(sample_sequence(inst.model, ft_rng, regime));
  const CondModel arm_ft = finetune_surrogate_arm(inst.arm, synthetic, cfg.model.alpha);

  // Per-block ARM surrogate chains are deterministic; precompute.
  const SingleOrder id = SingleOrder::identity(cfg.space.block);
  std::vector<double> arm_psi, arm_ft_psi, exact_psi;
  for (const Sequence& x : inst.test)
    for (int b = 0; b < blocks; ++b) {
      arm_psi.push_back(logprob_given_single_order(inst.arm, x, b, id));
      arm_ft_psi.push_back(logprob_given_single_order(arm_ft, x, b, id));
      exact_psi.push_back(exact_block_logprob(inst.model, x, b, regime));
    }
  for (double v : arm_psi)
    if (!std::isfinite(v)) throw InvariantError("surrogate_ablation: ARM surrogate hit a zero conditional");
  for (double v : arm_ft_psi)
    if (!std::isfinite(v)) throw InvariantError("surrogate_ablation: finetuned ARM hit a zero conditional");

  const std::size_t n_kinds = m_grid.size() + 3;  // psi_m grid + arm + arm_ft + exact
  std::vector<std::vector<double>> nats_pt(n_kinds, std::vector<double>(static_cast<std::size_t>(replicates)));
  parallel_for(static_cast<std::size_t>(replicates), cfg.jobs, [&](std::size_t rep) {
    Rng rng = derive_stream(cfg.master_seed, {0xAB, rep});
    const auto orders_p = draw_orderings(regime, cfg.space.block, k, rng);
    const auto orders_psi = draw_orderings(regime, cfg.space.block, m_max, rng);
    const std::uint64_t id_p = next_draw_id(), id_psi = next_draw_id();
    std::vector<double> totals(n_kinds, 0.0);
    std::size_t cell = 0;
    for (const Sequence& x : inst.test) {
      for (int b = 0; b < blocks; ++b, ++cell) {
        const SampleBank p_bank = evaluate_bank(inst.model, x, b, orders_p, Provenance::sampled, id_p);
        const SampleBank psi_bank = evaluate_bank(inst.model, x, b, orders_psi, Provenance::sampled, id_psi);
        for (std::size_t mi = 0; mi < m_grid.size(); ++mi) {
          SampleBank prefix{{psi_bank.loglik.begin(), psi_bank.loglik.begin() + m_grid[mi]},
                            Provenance::sampled, id_psi};
          totals[mi] += tube_estimate(p_bank, surrogate_self(prefix)).value;
        }
        totals[m_grid.size() + 0] += tube_estimate(p_bank, surrogate_fixed(arm_psi[cell])).value;
        totals[m_grid.size() + 1] += tube_estimate(p_bank, surrogate_fixed(arm_ft_psi[cell])).value;
        totals[m_grid.size() + 2] += tube_estimate(p_bank, surrogate_fixed(exact_psi[cell])).value;
      }
    }
    for (std::size_t kind = 0; kind < n_kinds; ++kind)
      nats_pt[kind][rep] = totals[kind] / static_cast<double>(tokens);
  });

  auto make_row = [&](std::string name, int m, const std::vector<double>& vals) {
    const double mean_nats = detail::mean_of(vals);
    std::vector<double> ppls;
    ppls.reserve(vals.size());
    for (double n : vals) ppls.push_back(std::exp(-n));
    const double mean_ppl = detail::mean_of(ppls);
    return AblationRow{std::move(name), m, mean_ppl, detail::sample_std(ppls, mean_ppl), mean_nats,
                       mean_nats - exact_nats_pt};
  };
  std::vector<AblationRow> rows;
  for (std::size_t mi = 0; mi < m_grid.size(); ++mi)
    if (m_grid[mi] == 1) rows.push_back(make_row("psi_pi", 1, nats_pt[mi]));
  for (std::size_t mi = 0; mi < m_grid.size(); ++mi)
    rows.push_back(make_row("psi_m", m_grid[mi], nats_pt[mi]));
  rows.push_back(make_row("psi_arm", 0, nats_pt[m_grid.size() + 0]));
  rows.push_back(make_row("psi_arm_ft", 0, nats_pt[m_grid.size() + 1]));
  rows.push_back(make_row("psi_exact", 0, nats_pt[m_grid.size() + 2]));
  return rows;
}

// --- unbiasedness / variance study ----------------------------------------------------
//
// For a fixed sequence and a fixed deterministic surrogate, replicates the
// TUBE estimator R times per K and compares the replicate mean against the
// population TUBE and the replicate variance against Var_pi[p(x|pi)]/(K psi^2).

struct PropcheckSettings {
  Sequence x;
  double psi = 0.0;  // linear-space surrogate value, must be > 0
  std::vector<int> k_grid{1, 2, 4, 8};
  int replicates = 100000;
  int studies = 1;
  Regime regime = Regime::ao_arm();
};

struct ReplicateStats {
  std::string estimator = "tube";
  int study = 0;
  int k = 0;
  int replicates = 0;
  double mean = 0.0;
  double variance = 0.0;
  double std_error = 0.0;
  double population = 0.0;
  double z_score = 0.0;
  double theory_variance = 0.0;
  double variance_rel_error = 0.0;
};

inline std::vector<ReplicateStats> unbiasedness_variance_study(const CondModel& model,
                                                               const PropcheckSettings& st,
                                                               std::uint64_t master_seed, int jobs) {
  if (model.space().num_blocks() != 1)
    throw ConfigError("unbiasedness_variance_study: needs a single-block space");
  if (!(st.psi > 0.0)) throw ConfigError("unbiasedness_variance_study: psi must be > 0");
  if (st.replicates < 2 || st.studies < 1 || st.k_grid.empty())
    throw ConfigError("unbiasedness_variance_study: bad settings");
  require_valid_sequence(model.space(), st.x);
  const double log_psi = std::log(st.psi);
  const SampleBank enum_bank = enumerated_sample_bank(model, st.x, 0, st.regime);
  const double population = population_tube(enum_bank.loglik, log_psi);
  const OrderingMoments mo = ordering_moments(enum_bank.loglik);
  const Surrogate psi = surrogate_fixed(log_psi);

  constexpr int kChunk = 4096;
  std::vector<ReplicateStats> out;
  for (int study = 0; study < st.studies; ++study) {
    for (std::size_t ki = 0; ki < st.k_grid.size(); ++ki) {
      const int k = st.k_grid[ki];
      const int chunks = (st.replicates + kChunk - 1) / kChunk;
      // Accumulate deviations from the known population value per fixed-size
      // chunk so the reduction is identical for any worker count.
      std::vector<double> chunk_sum(static_cast<std::size_t>(chunks), 0.0);
      std::vector<double> chunk_sq(static_cast<std::size_t>(chunks), 0.0);
      parallel_for(static_cast<std::size_t>(chunks), jobs, [&](std::size_t c) {
        const int begin = static_cast<int>(c) * kChunk;
        const int end = std::min(st.replicates, begin + kChunk);
        Rng rng = derive_stream(master_seed, {0xBC, static_cast<std::uint64_t>(study), ki, c});
        double s = 0.0, sq = 0.0;
        for (int rep = begin; rep < end; ++rep) {
          SampleBank bank = draw_sample_bank(model, st.x, 0, st.regime, k, rng);
          const double d = tube_estimate(bank, psi).value - population;
          s += d;
          sq += d * d;
        }
        chunk_sum[c] = s;
        chunk_sq[c] = sq;
      });
      double s = 0.0, sq = 0.0;
      for (int c = 0; c < chunks; ++c) {
        s += chunk_sum[static_cast<std::size_t>(c)];
        sq += chunk_sq[static_cast<std::size_t>(c)];
      }
      const double r = static_cast<double>(st.replicates);
      ReplicateStats stats;
      stats.study = study;
      stats.k = k;
      stats.replicates = st.replicates;
      stats.mean = population + s / r;
      stats.variance = (sq - s * s / r) / (r - 1.0);
      stats.std_error = std::sqrt(stats.variance / r);
      stats.population = population;
      stats.z_score = (stats.mean - population) / stats.std_error;
      stats.theory_variance = mo.variance / (static_cast<double>(k) * st.psi * st.psi);
      stats.variance_rel_error = std::abs(stats.variance - stats.theory_variance) / stats.theory_variance;
      out.push_back(stats);
    }
  }
  return out;
}

}  // namespace tube
