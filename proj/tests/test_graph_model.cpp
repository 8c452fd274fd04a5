#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "varinf/graph_model.hpp"

using namespace varinf;

TEST(Graph, CompleteGraphOnTenNodes) {
  const auto g = make_complete(10);
  EXPECT_EQ(g.node_count(), 10u);
  EXPECT_EQ(g.edge_count(), 45u);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(g.degree(i), 9u);
  EXPECT_EQ(check_well_formed(g), "");
}

TEST(Graph, CompleteSmallCases) {
  EXPECT_EQ(make_complete(1).edge_count(), 0u);
  const auto g = make_complete(4);
  const std::vector<Edge> want{{0, 1}, {0, 2}, {0, 3}, {1, 2}, {1, 3}, {2, 3}};
  EXPECT_EQ(g.edges(), want);
  EXPECT_THROW(make_complete(0), std::invalid_argument);
}

TEST(Graph, GridCounts) {
  const auto g = make_grid(5, 5);
  EXPECT_EQ(g.node_count(), 25u);
  EXPECT_EQ(g.edge_count(), 40u);
  EXPECT_EQ(check_well_formed(g), "");
  EXPECT_EQ(make_grid(1, 1).edge_count(), 0u);
  const auto sq = make_grid(2, 2);
  EXPECT_EQ(sq.edge_count(), 4u);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(sq.degree(i), 2u);
  const auto rect = make_grid(3, 7);
  EXPECT_EQ(rect.edge_count(), 3u * 6u + 7u * 2u);
  EXPECT_THROW(make_grid(0, 3), std::invalid_argument);
  EXPECT_THROW(make_grid(3, 0), std::invalid_argument);
}

TEST(Graph, ErdosRenyiMeanEdgeCount) {
  double total = 0.0;
  for (std::uint64_t s = 0; s < 1000; ++s) {
    const auto g = make_erdos_renyi(25, 0.2, s);
    ASSERT_EQ(check_well_formed(g), "");
    total += static_cast<double>(g.edge_count());
  }
  EXPECT_NEAR(total / 1000.0, 60.0, 5.0);
}

TEST(Graph, ErdosRenyiExtremes) {
  EXPECT_EQ(make_erdos_renyi(12, 0.0, 7).edge_count(), 0u);
  EXPECT_EQ(make_erdos_renyi(12, 1.0, 7), make_complete(12));
  EXPECT_THROW(make_erdos_renyi(5, 1.5, 0), std::invalid_argument);
  EXPECT_EQ(make_erdos_renyi(20, 0.3, 99), make_erdos_renyi(20, 0.3, 99));
}

TEST(Graph, RejectsMalformedEdgeLists) {
  EXPECT_THROW(Graph(3, {{0, 0}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 1}, {1, 0}}), std::invalid_argument);
  EXPECT_THROW(Graph(3, {{0, 3}}), std::invalid_argument);
}

TEST(Graph, RandomTreesAreTrees) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const auto g = make_random_tree(1 + s % 10, s);
    EXPECT_EQ(check_well_formed(g), "");
    EXPECT_TRUE(g.is_forest());
    EXPECT_EQ(g.component_count(), 1u);
  }
  EXPECT_FALSE(make_grid(2, 2).is_forest());
}

TEST(Ising, SamplingBoundsAndDeterminism) {
  const auto g = make_complete(10);
  const auto m = sample_ising(g, 0.0, 2.0, 0.6, 42);
  EXPECT_TRUE(m.attractive());
  for (double j : m.coupling) {
    EXPECT_GT(j, 0.0);
    EXPECT_LT(j, 2.0);
  }
  for (double t : m.field) {
    EXPECT_GT(t, -0.6);
    EXPECT_LT(t, 0.6);
  }
  EXPECT_EQ(m, sample_ising(g, 0.0, 2.0, 0.6, 42));
  EXPECT_NE(m, sample_ising(g, 0.0, 2.0, 0.6, 43));

  const auto flat = sample_ising(g, -1.0, 1.0, 0.0, 1);
  for (double t : flat.field) EXPECT_EQ(t, 0.0);
  EXPECT_FALSE(flat.attractive());
  EXPECT_THROW(sample_ising(g, 1.0, 1.0, 0.1, 0), std::invalid_argument);
  EXPECT_THROW(sample_ising(g, 0.0, 1.0, -0.1, 0), std::invalid_argument);
}

TEST(Ising, GeneratorStreamIsPinned) {
  // Guards the reproducibility contract: these values depend only on the
  // standard mt19937_64 stream and the conversions in rng.hpp.
  Rng rng(12345);
  const auto first = rng.next_u64();
  EXPECT_EQ(first, std::mt19937_64(12345)());
  const auto m = sample_ising(make_complete(3), -1.0, 1.0, 0.5, 2024);
  EXPECT_EQ(m, sample_ising(make_complete(3), -1.0, 1.0, 0.5, 2024));
  EXPECT_NE(derive_seed(1, 2), derive_seed(2, 1));
  EXPECT_EQ(derive_seed(1, 2, 3), derive_seed(derive_seed(1, 2), 3));
}

TEST(Serialization, RoundTripRandomModels) {
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto g = make_erdos_renyi(8, 0.4, s);
    const auto m = sample_ising(g, -3.0, 3.0, 1.0, s + 100);
    EXPECT_EQ(parse_model(serialize_model(m)), m);
  }
}

TEST(Serialization, EmptyEdgeListAndHeader) {
  const auto m = sample_ising(make_complete(1), 0.0, 1.0, 0.3, 5);
  const auto text = serialize_model(m);
  EXPECT_EQ(text.rfind("ising 1 0\n", 0), 0u);
  EXPECT_EQ(parse_model(text), m);
}

TEST(Serialization, ReportsFirstMalformedEntry) {
  const std::string bad_edge = "ising 2 1\nnode 0 0.1\nnode 1 0.2\nedge 0 5 1.0\n";
  try {
    parse_model(bad_edge);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 4u);
    EXPECT_EQ(e.field(), "j");
  }
  const std::string bad_real = "ising 2 1\nnode 0 zz\nnode 1 0.2\nedge 0 1 1.0\n";
  try {
    parse_model(bad_real);
    FAIL() << "expected a parse error";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
    EXPECT_EQ(e.field(), "theta");
  }
  EXPECT_THROW(parse_model(""), ParseError);
  EXPECT_THROW(parse_model("ising 2 0\nnode 0 1\n"), ParseError);
  EXPECT_THROW(parse_model("ising 2 1\nnode 0 1\nnode 1 1\nedge 1 0 1\n"), ParseError);
}
