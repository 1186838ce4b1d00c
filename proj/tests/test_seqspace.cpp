#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <set>
#include <sstream>

#include "tube/seqspace.hpp"

using namespace tube;

TEST_CASE("SeqSpace validates its invariants") {
  CHECK_NOTHROW(SeqSpace(2, 8, 4));
  CHECK_NOTHROW(SeqSpace(2, 4, 4));  // single block
  CHECK_THROWS_AS(SeqSpace(1, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(SeqSpace(2, 8, 3), std::invalid_argument);
  CHECK_THROWS_AS(SeqSpace(2, 4, 5), std::invalid_argument);
}

TEST_CASE("block layout") {
  auto blocks = block_layout(SeqSpace(2, 8, 4));
  REQUIRE(blocks.size() == 2);
  CHECK(blocks[0] == std::vector<int>{0, 1, 2, 3});
  CHECK(blocks[1] == std::vector<int>{4, 5, 6, 7});

  CHECK(block_layout(SeqSpace(2, 4, 4)).size() == 1);
  auto three = block_layout(SeqSpace(3, 12, 4));
  CHECK(three.size() == 3);
  std::set<int> all;
  for (const auto& b : three) all.insert(b.begin(), b.end());
  CHECK(all.size() == 12);
}

TEST_CASE("single-order enumeration is lexicographic and duplicate-free") {
  CHECK(enumerate_single_orders(1).size() == 1);
  CHECK(enumerate_single_orders(4).size() == 24);

  OrderBank bank = enumerate_single_orders(3);
  REQUIRE(bank.size() == 6);
  CHECK(std::get<SingleOrder>(bank.orders.front()).positions == std::vector<int>{0, 1, 2});
  CHECK(std::get<SingleOrder>(bank.orders.back()).positions == std::vector<int>{2, 1, 0});

  std::vector<std::vector<int>> all;
  for (const auto& o : bank.orders) all.push_back(std::get<SingleOrder>(o).positions);
  std::sort(all.begin(), all.end());
  CHECK(std::adjacent_find(all.begin(), all.end()) == all.end());

  CHECK_THROWS_WITH(enumerate_single_orders(9), Catch::Matchers::ContainsSubstring("cap"));
}

TEST_CASE("grouped enumeration covers all assignments with uniform weight") {
  OrderBank b22 = enumerate_grouped_orders(2, 2);
  CHECK(b22.size() == 4);
  CHECK(b22.prior_weight() == Catch::Approx(0.25));

  CHECK(enumerate_grouped_orders(1, 5).size() == 5);

  OrderBank b32 = enumerate_grouped_orders(3, 2);
  CHECK(b32.size() == 8);
  CHECK(b32.size() * b32.prior_weight() == Catch::Approx(1.0).epsilon(1e-12));

  CHECK_THROWS_AS(enumerate_grouped_orders(30, 10), std::invalid_argument);
}

TEST_CASE("grouped order invariants hold by construction") {
  auto g = GroupedOrder::from_groups(4, {{2}, {}, {0, 1}, {3}});
  CHECK(g.steps() == 4);
  CHECK(g.groups()[1].empty());
  CHECK_THROWS_AS(GroupedOrder::from_groups(3, {{0, 1}, {1, 2}}), std::invalid_argument);
  CHECK_THROWS_AS(GroupedOrder::from_groups(3, {{0}, {2}}), std::invalid_argument);

  auto single = GroupedOrder::from_groups(3, {{1}, {}, {2}, {0}}).to_single();
  CHECK(single.positions == std::vector<int>{1, 2, 0});
  CHECK_THROWS_AS(GroupedOrder::from_groups(2, {{0, 1}}).to_single(), std::invalid_argument);
}

TEST_CASE("single-order sampling is uniform and replayable") {
  {
    Rng rng(1);
    CHECK(sample_single_order(rng, 1).positions == std::vector<int>{0});
  }
  {
    Rng rng(11);
    int count_01 = 0;
    const int draws = 100000;
    for (int i = 0; i < draws; ++i)
      if (sample_single_order(rng, 2).positions[0] == 0) ++count_01;
    CHECK(std::abs(count_01 / double(draws) - 0.5) < 0.01);
  }
  {
    Rng r1(77), r2(77);
    CHECK(sample_single_order(r1, 6).positions == sample_single_order(r2, 6).positions);
  }
}

TEST_CASE("grouped sampling matches the iid step-assignment prior") {
  {
    Rng rng(3);
    GroupedOrder g = sample_grouped_order(rng, 5, 1);
    CHECK(g.steps() == 1);
    CHECK(g.groups()[0].size() == 5);
  }
  {
    Rng rng(4);
    const int draws = 100000;
    int counts[4] = {0, 0, 0, 0};
    int all_singleton = 0;
    for (int i = 0; i < draws; ++i) {
      GroupedOrder g = sample_grouped_order(rng, 2, 2);
      ++counts[g.step_of(0) * 2 + g.step_of(1)];
      if (g.all_singletons()) ++all_singleton;
    }
    for (int c : counts) CHECK(std::abs(c / double(draws) - 0.25) < 0.01);
    // P(all singleton groups) = n!/n^n = 0.5 at n = T = 2
    CHECK(std::abs(all_singleton / double(draws) - 0.5) < 0.01);
  }
}

TEST_CASE("sampled banks record their seed and replay") {
  OrderBank a = sample_grouped_order_bank(123, 4, 3, 50);
  OrderBank b = sample_grouped_order_bank(123, 4, 3, 50);
  CHECK(a.seed == 123);
  CHECK(a.provenance == Provenance::sampled);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i)
    CHECK(std::get<GroupedOrder>(a.orders[i]) == std::get<GroupedOrder>(b.orders[i]));
}

TEST_CASE("order bank text format round-trips") {
  {
    OrderBank bank = enumerate_single_orders(3);
    std::ostringstream out;
    write_order_bank(out, bank);
    std::istringstream in(out.str());
    OrderBank back = read_order_bank(in);
    CHECK(back.scope == 3);
    REQUIRE(back.size() == bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i)
      CHECK(std::get<SingleOrder>(back.orders[i]) == std::get<SingleOrder>(bank.orders[i]));
  }
  {
    OrderBank bank = sample_grouped_order_bank(9, 5, 3, 20);
    std::ostringstream out;
    write_order_bank(out, bank);
    std::istringstream in(out.str());
    OrderBank back = read_order_bank(in);
    CHECK(back.steps == 3);
    CHECK(back.seed == 9);
    REQUIRE(back.size() == bank.size());
    for (std::size_t i = 0; i < bank.size(); ++i)
      CHECK(std::get<GroupedOrder>(back.orders[i]) == std::get<GroupedOrder>(bank.orders[i]));
  }
}
