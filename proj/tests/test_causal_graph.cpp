#include <doctest.h>

#include <random>

#include "cde/causal_graph.hpp"
#include "oracles.hpp"

using namespace cde;

TEST_CASE("shipped graphs load with the expected shape") {
  const auto pro = oracle::load_graph("graphs/mi_prospective.g");
  CHECK(pro.size() == 6);
  CHECK(pro.edge_count() == 13);
  CHECK(pro.kind(pro.id("MI")) == NodeKind::outcome);
  CHECK(pro.kind(pro.id("UNOBSERVED")) == NodeKind::latent);

  const auto aug = oracle::load_graph("graphs/mi_prospective_augmented.g");
  CHECK(aug.size() == 8);
  CHECK(aug.edge_count() == 15);
  CHECK(aug == augment_with_interventions(pro, {"GENO", "BMI"}));

  const auto cc = oracle::load_graph("graphs/mi_case_control.g");
  CHECK(cc.edge_count() == 15);
  REQUIRE(cc.selection());
  CHECK(cc.name(*cc.selection()) == "S");
}

TEST_CASE("parse and serialize round-trip, independent of declaration order") {
  const auto a = parse_graph("node B\nnode A latent\nedge A B\n");
  const auto b = parse_graph("# same graph\nnode A latent\n\nnode B observed\nedge A B\n");
  CHECK(a == b);
  CHECK(parse_graph(serialize_graph(a)) == a);
  CHECK(serialize_graph(a) == "node A latent\nnode B\nedge A B\n");

  std::mt19937_64 rng(5);
  for (int i = 0; i < 50; ++i) {
    const auto g = oracle::random_dag(rng, 8, 0.3);
    CHECK(parse_graph(serialize_graph(g)) == g);
  }
}

TEST_CASE("construction errors") {
  CHECK_THROWS_WITH_AS(parse_graph("node A\nnode B\nedge A B\nedge B A\n"),
                       doctest::Contains("cycle detected: A -> B -> A"), GraphError);
  CHECK_THROWS_AS(parse_graph("node A\nedge A A\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node A\nnode A\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node A\nedge A B\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node A\nnode B\nedge A B\nedge A B\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node 1A\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node A weird\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("vertex A\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node S selection\nnode T selection\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node S selection\nnode A\nedge S A\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node s intervention\nnode A\nnode B\nedge s A\nedge s B\n"), GraphError);
  CHECK_THROWS_AS(parse_graph("node s intervention\nnode A\nedge A s\n"), GraphError);
  CHECK_THROWS_WITH(parse_graph("node A\n\nedge A\n"), doctest::Contains("line 3"));
}

TEST_CASE("ancestors and descendants are reflexive") {
  const auto g = oracle::load_graph("graphs/mi_prospective.g");
  CHECK(ancestors(g, "DEMO") == NodeSet{"DEMO"});
  CHECK(ancestors(g, "BEHAVE") == NodeSet{"BEHAVE", "DEMO", "GENO", "UNOBSERVED"});
  CHECK(descendants(g, "GENO") == NodeSet{"BEHAVE", "BMI", "GENO", "MI"});
  CHECK(descendants(g, "MI") == NodeSet{"MI"});
  CHECK_THROWS_AS(ancestors(g, "NOPE"), GraphError);
}

TEST_CASE("augmentation") {
  const auto g = oracle::load_graph("graphs/mi_prospective.g");
  const auto aug = augment_with_interventions(g, {"BMI"});
  const auto s = aug.id("sigma_BMI");
  CHECK(aug.kind(s) == NodeKind::intervention);
  CHECK(aug.children(s) == std::vector<NodeId>{aug.id("BMI")});
  CHECK(intervention_for(aug, aug.id("BMI")) == s);
  CHECK_FALSE(intervention_for(aug, aug.id("GENO")));
  CHECK_THROWS_AS(augment_with_interventions(g, {"UNOBSERVED"}), GraphError);
  CHECK_THROWS_AS(augment_with_interventions(aug, {"BMI"}), GraphError);
  CHECK(format_set({"B", "A"}) == "{A,B}");
}
