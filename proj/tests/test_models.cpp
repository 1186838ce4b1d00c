#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <map>

#include "support.hpp"
#include "tube/models.hpp"

using namespace tube;
using testsupport::oracle_exact_prob;
using testsupport::oracle_order_prob;

namespace {

// Chain joint induced by the reference model's left-to-right factorization:
// p(0,0)=0.4, p(0,1)=0.1, p(1,0)=0.15, p(1,1)=0.35.
GroundTruthJoint toy_a_chain_joint() {
  GroundTruthJoint j;
  j.kind = GroundTruthJoint::Kind::full;
  j.space = SeqSpace(2, 2, 2);
  j.full.assign(4, 0.0);
  auto at = [&](int a, int b) -> double& { return j.full[static_cast<std::size_t>(a + 2 * b)]; };
  at(0, 0) = 0.4;
  at(0, 1) = 0.1;
  at(1, 0) = 0.15;
  at(1, 1) = 0.35;
  j.validate();
  return j;
}

}  // namespace

TEST_CASE("toy model single-order log-likelihoods match hand enumeration") {
  const CondModel m = make_toy_a();
  SingleOrder fwd = SingleOrder::identity(2);
  SingleOrder rev;
  rev.positions = {1, 0};

  CHECK(logprob_given_single_order(m, {0, 0}, 0, fwd) == Catch::Approx(std::log(0.4)).epsilon(1e-12));
  CHECK(logprob_given_single_order(m, {0, 1}, 0, rev) == Catch::Approx(std::log(0.15)).epsilon(1e-12));
  CHECK(logprob_given_single_order(m, {0, 1}, 0, fwd) == Catch::Approx(std::log(0.10)).epsilon(1e-12));
  // frozen absolute values
  CHECK(logprob_given_single_order(m, {0, 0}, 0, fwd) == Catch::Approx(-0.91629073187415511).epsilon(1e-12));
  CHECK(logprob_given_single_order(m, {0, 1}, 0, rev) == Catch::Approx(-1.8971199848858813).epsilon(1e-12));
}

TEST_CASE("toy model exact values by enumeration") {
  const CondModel m = make_toy_a();
  CHECK(exact_logprob(m, {0, 0}, Regime::ao_arm()) == Catch::Approx(std::log(0.4)).epsilon(1e-12));
  CHECK(exact_logprob(m, {0, 1}, Regime::ao_arm()) == Catch::Approx(std::log(0.125)).epsilon(1e-12));
  CHECK(exact_logprob(m, {0, 1}, Regime::ao_arm()) == Catch::Approx(-2.0794415416798357).epsilon(1e-12));
  // independent linear-space oracle agrees
  CHECK(exact_logprob(m, {0, 1}, Regime::ao_arm()) ==
        Catch::Approx(std::log(oracle_exact_prob(m, {0, 1}, 0, Regime::ao_arm()))).epsilon(1e-12));
}

TEST_CASE("grouped orderings: factorized single step, empty groups, reduction") {
  const CondModel m = make_toy_a();
  const GroupedOrder one_step = GroupedOrder::from_groups(2, {{0, 1}});
  CHECK(logprob_given_grouped_order(m, {0, 1}, 0, one_step) ==
        Catch::Approx(std::log(0.25)).epsilon(1e-12));
  CHECK(logprob_given_grouped_order(m, {0, 1}, 0, one_step) ==
        Catch::Approx(-1.3862943611198906).epsilon(1e-12));

  // inserting empty groups changes nothing
  const GroupedOrder padded = GroupedOrder::from_groups(2, {{}, {0, 1}, {}});
  CHECK(logprob_given_grouped_order(m, {0, 1}, 0, padded) ==
        logprob_given_grouped_order(m, {0, 1}, 0, one_step));

  // all-singleton grouped orderings reproduce single-order values exactly
  Rng rng(21);
  for (const auto& inst : testsupport::make_random_suite(6, 99, 2)) {
    for (const Sequence& x : inst.xs) {
      SingleOrder order = sample_single_order(rng, inst.space.block);
      const GroupedOrder grouped = GroupedOrder::from_single(order);
      CHECK(logprob_given_grouped_order(inst.model, x, 0, grouped) ==
            logprob_given_single_order(inst.model, x, 0, order));
    }
  }

  // grouped exact at T=1 equals the unique grouping's value (point-mass prior)
  CHECK(exact_logprob(m, {0, 1}, Regime::mdm(1)) ==
        logprob_given_grouped_order(m, {0, 1}, 0, one_step));
}

TEST_CASE("bayes-exact models are order-invariant and match marginalization") {
  const GroundTruthJoint joint = toy_a_chain_joint();
  const CondModel bayes = bayes_model_from_joint(joint);
  CHECK(bayes.mode() == CondModel::Mode::bayes_exact);

  Context c;
  c.block = 0;
  c.state = {0, kMasked};  // x^1 = token 0 revealed, predicting position 1
  CHECK(bayes.cond(1, c, 0) == Catch::Approx(0.8).epsilon(1e-12));
  c.state = {kMasked, kMasked};
  CHECK(bayes.cond(0, c, 0) == Catch::Approx(0.5).epsilon(1e-12));
  c.state = {kMasked, 0};  // x^2 = token 0 revealed, predicting position 0
  CHECK(bayes.cond(0, c, 0) == Catch::Approx(0.4 / 0.55).epsilon(1e-12));

  // value independent of pi, equal to log p(x), for every sequence
  for (const Sequence& x : testsupport::all_sequences(joint.space)) {
    const double exact = joint.logprob(x);
    for_each_single_order(2, [&](const SingleOrder& o) {
      CHECK(logprob_given_single_order(bayes, x, 0, o) == Catch::Approx(exact).margin(1e-12));
    });
    CHECK(exact_logprob(bayes, x, Regime::ao_arm()) == Catch::Approx(exact).margin(1e-12));
  }
}

TEST_CASE("uniform joint gives uniform conditionals") {
  GroundTruthJoint j;
  j.kind = GroundTruthJoint::Kind::full;
  j.space = SeqSpace(3, 2, 2);
  j.full.assign(9, 1.0 / 9.0);
  const CondModel bayes = bayes_model_from_joint(j);
  for (int d = 0; d < 2; ++d)
    for (std::int64_t ctx = 0; ctx < bayes.ctx_count(); ++ctx)
      for (int v = 0; v < 3; ++v) CHECK(bayes.cond(d, 0, ctx, v) == Catch::Approx(1.0 / 3).epsilon(1e-12));
}

TEST_CASE("order invariance of bayes models on random suites") {
  for (const auto& inst : testsupport::make_random_suite(8, 31, 2)) {
    const CondModel bayes = bayes_model_from_joint(inst.joint);
    for (const Sequence& x : inst.xs) {
      const double ref = exact_logprob(bayes, x, Regime::ao_arm());
      double lo = ref, hi = ref;
      for_each_single_order(inst.space.block, [&](const SingleOrder& o) {
        const double v = logprob_given_single_order(bayes, x, 0, o);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      });
      CHECK(hi - lo < 1e-12);
    }
  }
}

TEST_CASE("normalization: exact probabilities sum to one over the universe") {
  for (const auto& inst : testsupport::make_random_suite(6, 47, 1)) {
    double sum = 0.0;
    for (const Sequence& x : testsupport::all_sequences(inst.space))
      sum += std::exp(exact_logprob(inst.model, x, inst.regime));
    CHECK(sum == Catch::Approx(1.0).margin(1e-8));
  }
  // multi-block case with a fitted model
  Rng rng(5);
  const SeqSpace space(2, 4, 2);
  GroundTruthJoint joint = GroundTruthJoint::random_full(space, rng);
  std::vector<Sequence> corpus;
  for (int i = 0; i < 200; ++i) corpus.push_back(joint.sample(rng));
  const CondModel fitted = fit_tabular(space, corpus, 1.0, 8, rng);
  for (Regime regime : {Regime::ao_arm(), Regime::mdm(2)}) {
    double sum = 0.0;
    for (const Sequence& x : testsupport::all_sequences(space))
      sum += std::exp(exact_logprob(fitted, x, regime));
    CHECK(sum == Catch::Approx(1.0).margin(1e-8));
  }
}

TEST_CASE("block composition: independent identical blocks double the nats") {
  // block-markov ground truth whose transition rows all equal the initial
  // distribution: blocks are independent and identically distributed
  Rng rng(13);
  const SeqSpace two_blocks(2, 4, 2);
  GroundTruthJoint j;
  j.kind = GroundTruthJoint::Kind::block_markov;
  j.space = two_blocks;
  {
    GroundTruthJoint tmp = GroundTruthJoint::random_block_markov(two_blocks, rng);
    j.initial = tmp.initial;
    j.transition.resize(tmp.transition.size());
    const std::int64_t bs = j.block_states();
    for (std::int64_t w0 = 0; w0 < bs; ++w0)
      for (std::int64_t w1 = 0; w1 < bs; ++w1)
        j.transition[static_cast<std::size_t>(w0 * bs + w1)] = j.initial[static_cast<std::size_t>(w1)];
  }
  j.validate();
  const CondModel bm = bayes_model_from_joint(j);

  // matching single-block space sharing the initial distribution
  GroundTruthJoint single;
  single.kind = GroundTruthJoint::Kind::full;
  single.space = SeqSpace(2, 2, 2);
  single.full = j.initial;
  const CondModel sb = bayes_model_from_joint(single);

  for (const Sequence& w : testsupport::all_sequences(single.space)) {
    Sequence x{w[0], w[1], w[0], w[1]};
    const double one = exact_logprob(sb, w, Regime::ao_arm());
    CHECK(exact_logprob(bm, x, Regime::ao_arm()) == Catch::Approx(2.0 * one).epsilon(1e-10));
  }

  // logprob_block composes callback values
  const auto layout = block_layout(two_blocks);
  Sequence x{0, 1, 1, 0};
  const double composed =
      logprob_block(layout, [&](int b) { return exact_block_logprob(bm, x, b, Regime::ao_arm()); });
  CHECK(composed == Catch::Approx(exact_logprob(bm, x, Regime::ao_arm())).epsilon(1e-14));
}

TEST_CASE("fit_tabular converges to the bayes conditionals") {
  const GroundTruthJoint joint = toy_a_chain_joint();
  const CondModel bayes = bayes_model_from_joint(joint);
  Rng rng(101);
  std::vector<Sequence> corpus;
  for (int i = 0; i < 100000; ++i) corpus.push_back(joint.sample(rng));
  const CondModel fitted = fit_tabular(joint.space, corpus, 1.0, 4, rng);
  for (int d = 0; d < 2; ++d)
    for (std::int64_t ctx = 0; ctx < fitted.ctx_count(); ++ctx)
      for (int v = 0; v < 2; ++v)
        CHECK(std::abs(fitted.cond(d, 0, ctx, v) - bayes.cond(d, 0, ctx, v)) < 0.02);
}

TEST_CASE("fit edge cases: point masses at alpha 0, uniform at huge alpha") {
  Rng rng(7);
  const SeqSpace space(2, 2, 2);
  std::vector<Sequence> corpus(50, Sequence{0, 1});
  const CondModel point = fit_tabular(space, corpus, 0.0, 32, rng);
  // wherever the context was observed the conditional is a point mass
  CHECK(point.cond(0, 0, point.context_key(0, std::vector<int>{kMasked, kMasked}), 0) == 1.0);
  CHECK(point.cond(1, 0, point.context_key(1, std::vector<int>{0, kMasked}), 1) == 1.0);
  CHECK(arm_chain_logprob(point, {0, 1}) == 0.0);
  // probability-zero events surface as an explicit -inf, not an error
  CHECK(arm_chain_logprob(point, {1, 0}) == kNegInf);

  const CondModel flat = fit_tabular(space, corpus, 1e9, 4, rng);
  for (int d = 0; d < 2; ++d)
    for (std::int64_t ctx = 0; ctx < flat.ctx_count(); ++ctx)
      CHECK(flat.cond(d, 0, ctx, 0) == Catch::Approx(0.5).margin(1e-6));

  CHECK_THROWS_AS(fit_tabular(space, {}, 1.0, 4, rng), std::invalid_argument);
}

TEST_CASE("perturb_model: identity at 0, random at 1, order dependence in between") {
  Rng rng(17);
  const GroundTruthJoint joint = toy_a_chain_joint();
  const CondModel bayes = bayes_model_from_joint(joint);

  CHECK(perturb_model(bayes, 0.0, rng) == bayes);

  const CondModel noisy = perturb_model(bayes, 0.3, rng);
  CHECK(noisy.mode() == CondModel::Mode::perturbed);
  noisy.validate();
  // enumeration detects ordering variance for some x
  double max_spread = 0.0;
  for (const Sequence& x : testsupport::all_sequences(joint.space)) {
    double lo = 1e300, hi = -1e300;
    for_each_single_order(2, [&](const SingleOrder& o) {
      const double v = logprob_given_single_order(noisy, x, 0, o);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    });
    max_spread = std::max(max_spread, hi - lo);
  }
  CHECK(max_spread > 1e-6);

  const CondModel pure_noise = perturb_model(bayes, 1.0, rng);
  pure_noise.validate();
  CHECK(pure_noise.cond(0, 0, 0, 0) != bayes.cond(0, 0, 0, 0));
}

TEST_CASE("sampling: point mass, determinism, and distribution match") {
  Rng rng(3);
  const SeqSpace space(2, 2, 2);
  std::vector<Sequence> corpus(10, Sequence{1, 0});
  const CondModel point = fit_tabular(space, corpus, 0.0, 64, rng);
  const Ordering id{SingleOrder::identity(2)};
  for (int i = 0; i < 5; ++i) CHECK(sample_sequence(point, rng, id) == Sequence{1, 0});

  Rng r1(55), r2(55);
  const GroundTruthJoint joint = toy_a_chain_joint();
  const CondModel bayes = bayes_model_from_joint(joint);
  CHECK(sample_sequence(bayes, r1, id) == sample_sequence(bayes, r2, id));

  // empirical distribution under a fixed ordering matches the joint in TV
  std::map<Sequence, int> hist;
  Rng r3(91);
  const int draws = 100000;
  SingleOrder rev;
  rev.positions = {1, 0};
  for (int i = 0; i < draws; ++i) ++hist[sample_sequence(bayes, r3, Ordering{rev})];
  double tv = 0.0;
  for (const Sequence& x : testsupport::all_sequences(space))
    tv += 0.5 * std::abs(hist[x] / double(draws) - joint.prob(x));
  CHECK(tv < 0.02);
}

TEST_CASE("structured context lookups agree with the oracle path") {
  for (const auto& inst : testsupport::make_random_suite(4, 63, 2)) {
    Rng rng(19);
    for (const Sequence& x : inst.xs) {
      const GroupedOrder g = sample_grouped_order(rng, inst.space.block, 2);
      CHECK(logprob_given_grouped_order(inst.model, x, 0, g) ==
            Catch::Approx(std::log(oracle_order_prob(inst.model, x, 0, g.groups()))).epsilon(1e-10));
    }
  }
}

TEST_CASE("exact_logprob respects enumeration caps") {
  Rng rng(1);
  const SeqSpace space(2, 10, 10);
  GroundTruthJoint joint = GroundTruthJoint::random_full(space, rng);
  const CondModel bayes = bayes_model_from_joint(joint);
  const Sequence x(10, 0);
  CHECK_THROWS_WITH(exact_logprob(bayes, x, Regime::ao_arm()),
                    Catch::Matchers::ContainsSubstring("cap"));
  CHECK_THROWS_AS(exact_logprob(bayes, x, Regime::mdm(4)), std::invalid_argument);
}
