/*
 * Copyright 2026 The soundexpl Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "soundexpl/compgraph.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "random_instances.hpp"

namespace soundexpl {
namespace {

// x1, x2 -> a = x1 - x2 -> t
struct Difference {
  CompGraph graph;
  VertexId x1, x2, a;
};

Difference difference_graph(bool with_tanh) {
  GraphBuilder b;
  const VertexId x1 = b.add_input("x1");
  const VertexId x2 = b.add_input("x2");
  if (with_tanh) {
    const VertexId a = b.add(OpSpec::affine({1.0, -1.0}, 0.0), {x1, x2}, "a");
    b.add_output(OpSpec::tanh(), {a});
    return {std::move(b).build(), x1, x2, a};
  }
  const VertexId a = b.add_output(OpSpec::affine({1.0, -1.0}, 0.0), {x1, x2}, "a");
  return {std::move(b).build(), x1, x2, a};
}

CompGraph identity_graph() {
  GraphBuilder b;
  const VertexId x = b.add_input("x");
  b.add_output(OpSpec::affine({1.0}), {x});
  return std::move(b).build();
}

TEST(Evaluate, AffineDotProduct) {
  const auto g = difference_graph(false);
  const std::vector<double> x{1.0, 0.0};
  const auto ev = evaluate(g.graph, x);
  EXPECT_EQ(ev.values[g.a], 1.0);
  EXPECT_EQ(ev.output, 1.0);
}

TEST(Evaluate, TanhOfAffine) {
  const auto g = difference_graph(true);
  const std::vector<double> x{1.0, 0.0};
  EXPECT_NEAR(evaluate(g.graph, x).output, 0.7615941559557649, 1e-15);
}

TEST(Evaluate, Identity) {
  const std::vector<double> x{5.0};
  EXPECT_EQ(evaluate(identity_graph(), x).output, 5.0);
}

TEST(Evaluate, MissingInputIsArityError) {
  const auto g = difference_graph(false);
  const std::vector<double> x{1.0};
  EXPECT_THROW(evaluate(g.graph, x), InputArityError);
}

TEST(Evaluate, NaNNamesVertex) {
  GraphBuilder b;
  const VertexId x = b.add_input();
  const VertexId inf = b.add(OpSpec::affine({1.0}), {x});
  b.add_output(OpSpec::affine({1.0, -1.0}), {inf, inf});
  const auto graph = std::move(b).build();
  const std::vector<double> in{INFINITY};
  try {
    evaluate(graph, in);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("vertex 2"), std::string::npos);
  }
}

TEST(Evaluate, DeterministicValueMaps) {
  Rng rng(3);
  const auto graph = testing::random_graph(rng, 20);
  const auto x = testing::random_input(rng, graph);
  try {
    const auto a = evaluate(graph, x);
    const auto b = evaluate(graph, x);
    EXPECT_EQ(a.values, b.values);
  } catch (const NumericError&) {
  }
}

TEST(Ops, ArityRules) {
  EXPECT_TRUE(OpSpec::affine({1, 2}).accepts_arity(2));
  EXPECT_FALSE(OpSpec::affine({1, 2}).accepts_arity(3));
  EXPECT_FALSE(OpSpec::tanh().accepts_arity(2));
  EXPECT_FALSE(OpSpec::sum().accepts_arity(0));
  EXPECT_TRUE(OpSpec::threshold(0, ThresholdDirection::Greater).accepts_arity(2));
  EXPECT_FALSE(OpSpec::threshold(0, ThresholdDirection::Greater).accepts_arity(3));
  EXPECT_TRUE(OpSpec::mux(3).accepts_arity(4));
  EXPECT_FALSE(OpSpec::mux(0).accepts_arity(1));
}

TEST(Ops, Semantics) {
  const std::vector<double> a{0.5, 2.0, -1.0};
  EXPECT_EQ(OpSpec::sum().apply(a), 1.5);
  EXPECT_EQ(OpSpec::product().apply(a), -1.0);
  EXPECT_EQ(OpSpec::max().apply(a), 2.0);
  EXPECT_EQ(OpSpec::mux(2).apply(a), -1.0);  // selector 0.5 rounds to 1
  const std::vector<double> one{0.5};
  EXPECT_EQ(OpSpec::threshold(0.5, ThresholdDirection::LessEqual).apply(one), 1.0);
  EXPECT_EQ(OpSpec::threshold(0.5, ThresholdDirection::Greater).apply(one), 0.0);
  const std::vector<double> gated{0.0, 0.1};
  EXPECT_EQ(OpSpec::threshold(0.5, ThresholdDirection::LessEqual).apply(gated), 0.0);
  EXPECT_EQ(OpSpec::negate().apply(one), -0.5);
}

TEST(Graph, RejectsStructuralViolations) {
  using V = CompGraph::Vertex;
  // Cycle between two internal vertices.
  EXPECT_THROW(CompGraph({V{VertexKind::Input, ""}, V{VertexKind::Internal, ""},
                          V{VertexKind::Internal, ""}, V{VertexKind::Output, ""}},
                         {{}, {0, 2}, {1}, {2}},
                         {std::nullopt, OpSpec::sum(), OpSpec::sum(), OpSpec::sum()}),
               ValidationError);
  // Two outputs.
  EXPECT_THROW(CompGraph({V{VertexKind::Input, ""}, V{VertexKind::Output, ""}, V{VertexKind::Output, ""}},
                         {{}, {0}, {0}}, {std::nullopt, OpSpec::sum(), OpSpec::sum()}),
               ValidationError);
  // Internal vertex with no incoming edges (a constant posing as a vertex).
  EXPECT_THROW(CompGraph({V{VertexKind::Input, ""}, V{VertexKind::Internal, ""}, V{VertexKind::Output, ""}},
                         {{}, {}, {0, 1}}, {std::nullopt, OpSpec::sum(), OpSpec::sum()}),
               ValidationError);
  // Arity mismatch.
  EXPECT_THROW(CompGraph({V{VertexKind::Input, ""}, V{VertexKind::Output, ""}}, {{}, {0}},
                         {std::nullopt, OpSpec::affine({1.0, 2.0})}),
               ValidationError);
  // Output with an outgoing edge.
  EXPECT_THROW(CompGraph({V{VertexKind::Input, ""}, V{VertexKind::Output, ""}, V{VertexKind::Internal, ""}},
                         {{}, {0}, {1}}, {std::nullopt, OpSpec::sum(), OpSpec::sum()}),
               ValidationError);
}

TEST(Boundary, TrivialCutGivesOutputPredecessors) {
  const auto g = difference_graph(true);
  EXPECT_EQ(boundary(g.graph, Cut::output_only(g.graph)), std::vector<VertexId>{g.a});
}

TEST(Boundary, InputCutGivesInputsWithEdgesIntoT) {
  GraphBuilder b;
  const VertexId x0 = b.add_input();
  const VertexId x1 = b.add_input();
  const VertexId x2 = b.add_input();  // unused
  const VertexId h = b.add(OpSpec::tanh(), {x0});
  b.add_output(OpSpec::sum(), {h, x1});
  const auto graph = std::move(b).build();
  EXPECT_EQ(boundary(graph, Cut::inputs_only(graph)), (std::vector<VertexId>{x0, x1}));
  (void)x2;
}

TEST(Boundary, InvalidCutsNameTheClause) {
  const auto g = difference_graph(true);
  Cut cut = Cut::output_only(g.graph);
  cut.side[g.x1] = Side::T;
  try {
    boundary(g.graph, cut);
    FAIL();
  } catch (const InvalidCutError& e) {
    EXPECT_EQ(e.clause(), "inputs-in-S");
  }
  cut = Cut::output_only(g.graph);
  cut.side[g.graph.output()] = Side::S;
  try {
    boundary(g.graph, cut);
    FAIL();
  } catch (const InvalidCutError& e) {
    EXPECT_EQ(e.clause(), "output-in-T");
  }
  cut.side.pop_back();
  try {
    boundary(g.graph, cut);
    FAIL();
  } catch (const InvalidCutError& e) {
    EXPECT_EQ(e.clause(), "partition");
  }
}

TEST(Boundary, MatchesEdgeScanOnRandomDags) {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const auto graph = testing::random_graph(rng, 20);
    const auto cut = testing::random_cut(rng, graph);
    EXPECT_EQ(boundary(graph, cut), testing::boundary_by_edge_scan(graph, cut));
  }
}

TEST(Explain, IdentityTrivialCut) {
  const auto graph = identity_graph();
  const std::vector<double> x{5.0};
  const auto ex = explain(graph, Cut::output_only(graph), x);
  ASSERT_EQ(ex.entries.size(), 1u);
  EXPECT_EQ(ex.entries[0].vertex, graph.inputs()[0]);
  EXPECT_EQ(ex.entries[0].value, 5.0);
  EXPECT_EQ(replay(graph, Cut::output_only(graph), ex), 5.0);
}

TEST(Replay, PerturbedBoundaryShiftsLinearOutput) {
  GraphBuilder b;
  const VertexId x = b.add_input();
  const VertexId y = b.add_input();
  const VertexId h = b.add(OpSpec::tanh(), {x});
  const VertexId k = b.add(OpSpec::sigmoid(), {y});
  b.add_output(OpSpec::affine({1.0, 1.0}), {h, k});
  const auto graph = std::move(b).build();
  const auto cut = Cut::output_only(graph);
  const std::vector<double> in{0.3, -0.7};
  auto ex = explain(graph, cut, in);
  const double base = replay(graph, cut, ex);
  EXPECT_EQ(base, evaluate(graph, in).output);
  for (auto& e : ex.entries)
    if (e.vertex == h) e.value += 1.0;
  EXPECT_NEAR(replay(graph, cut, ex) - base, 1.0, 1e-15);
}

TEST(Replay, RandomTriplesAreBitExactAndMinimal) {
  Rng rng(5);
  int checked = 0;
  while (checked < 100) {
    const auto graph = testing::random_graph(rng, 20);
    const auto cut = testing::random_cut(rng, graph);
    const auto x = testing::random_input(rng, graph);
    Evaluation ev;
    try {
      ev = evaluate(graph, x);
    } catch (const NumericError&) {
      continue;
    }
    const auto ex = explain(graph, cut, x);
    EXPECT_EQ(replay(graph, cut, ex), ev.output);
    for (std::size_t drop = 0; drop < ex.entries.size(); ++drop) {
      Explanation partial = ex;
      partial.entries.erase(partial.entries.begin() + static_cast<std::ptrdiff_t>(drop));
      EXPECT_THROW(replay(graph, cut, partial), IncompleteExplanationError);
    }
    ++checked;
  }
}

TEST(Replay, RejectsEntriesOffTheBoundary) {
  const auto g = difference_graph(true);
  const auto cut = Cut::output_only(g.graph);
  auto ex = explain(g.graph, cut, std::vector<double>{1.0, 0.0});
  ex.entries.push_back({g.x1, 1.0});
  EXPECT_THROW(replay(g.graph, cut, ex), ValidationError);
}

DecisionTree stump() {
  DecisionTree tree;
  tree.input_dim = 1;
  tree.nodes = {TreeNode::make_split(0, 0.5, 1, 2), TreeNode::make_leaf(0.0), TreeNode::make_leaf(1.0)};
  tree.root = 0;
  return tree;
}

TEST(TreeToGraph, StumpActivatesLeftLeaf) {
  const auto tg = tree_to_graph(stump());
  const std::vector<double> x{0.3};
  const auto ex = explain(tg.graph, tg.cut, x);
  EXPECT_EQ(ex.value_of(tg.node_vertex[1]), 1.0);
  EXPECT_EQ(ex.value_of(tg.node_vertex[2]), 0.0);
  EXPECT_EQ(evaluate(tg.graph, x).output, 0.0);
}

TEST(TreeToGraph, StumpActivatesRightLeaf) {
  const auto tg = tree_to_graph(stump());
  const std::vector<double> x{0.9};
  const auto ex = explain(tg.graph, tg.cut, x);
  EXPECT_EQ(ex.value_of(tg.node_vertex[1]), 0.0);
  EXPECT_EQ(ex.value_of(tg.node_vertex[2]), 1.0);
  EXPECT_EQ(evaluate(tg.graph, x).output, 1.0);
}

TEST(TreeToGraph, ExplanationIsLeafSetAndMatchesTraversal) {
  Rng rng(17);
  for (int trial = 0; trial < 200; ++trial) {
    const auto tree = testing::random_tree(rng, 4, 6);
    const auto tg = tree_to_graph(tree);
    std::vector<double> x(4);
    for (auto& v : x) v = rng.uniform(-1.5, 1.5);
    const auto ex = explain(tg.graph, tg.cut, x);
    const std::size_t expected = testing::traverse_recursive(tree, tree.root, x);
    int active = 0;
    for (const auto& e : ex.entries) {
      if (e.value == 1.0) {
        ++active;
        EXPECT_EQ(e.vertex, tg.node_vertex[expected]);
      } else {
        EXPECT_EQ(e.value, 0.0);
      }
    }
    EXPECT_EQ(active, 1);
    EXPECT_EQ(evaluate(tg.graph, x).output, tree.nodes[expected].value);
  }
}

TEST(TreeToGraph, SingleLeafTree) {
  DecisionTree tree;
  tree.input_dim = 2;
  tree.nodes = {TreeNode::make_leaf(3.5)};
  const auto tg = tree_to_graph(tree);
  EXPECT_EQ(evaluate(tg.graph, std::vector<double>{7.0, -1.0}).output, 3.5);
}

TEST(TreeToGraph, RejectsMalformedTrees) {
  DecisionTree tree = stump();
  tree.nodes[0].right = 1;
  EXPECT_THROW(tree_to_graph(tree), ValidationError);
  tree = stump();
  tree.nodes[0].feature = 4;
  EXPECT_THROW(tree_to_graph(tree), ValidationError);
  tree = stump();
  tree.nodes[2] = TreeNode::make_split(0, 0.0, 0, 1);  // back edge to root
  EXPECT_THROW(tree_to_graph(tree), ValidationError);
}

CompGraph small_network() {
  GraphBuilder b;
  const VertexId x0 = b.add_input("x0");
  const VertexId x1 = b.add_input("x1");
  const VertexId x2 = b.add_input("x2");
  const VertexId h0 = b.add(OpSpec::affine({0.4, -0.3, 0.8}, 0.1), {x0, x1, x2});
  const VertexId h1 = b.add(OpSpec::tanh(), {x1});
  const VertexId a0 = b.add(OpSpec::tanh(), {h0});
  b.add_output(OpSpec::affine({1.2, -0.7}, 0.05), {a0, h1});
  return std::move(b).build();
}

TEST(MaskCut, AllSelectedReproducesModel) {
  const auto graph = small_network();
  const std::vector<VertexId> all(graph.inputs().begin(), graph.inputs().end());
  const auto masked = mask_cut(graph, all);
  EXPECT_EQ(boundary(masked.graph, masked.cut), masked.gate_vertex);
  Rng rng(1);
  for (int i = 0; i < 50; ++i) {
    const auto x = testing::random_input(rng, graph);
    const auto ex = explain(masked.graph, masked.cut, x);
    EXPECT_EQ(replay(masked.graph, masked.cut, ex), evaluate(graph, x).output);
  }
}

TEST(MaskCut, NothingSelectedIsConstant) {
  const auto graph = small_network();
  const auto masked = mask_cut(graph, std::vector<VertexId>{});
  Rng rng(2);
  const double first = evaluate(masked.graph, testing::random_input(rng, graph)).output;
  for (int i = 0; i < 50; ++i)
    EXPECT_EQ(evaluate(masked.graph, testing::random_input(rng, graph)).output, first);
}

TEST(MaskCut, UnselectedInputsCannotMoveTheOutput) {
  const auto graph = small_network();
  const std::vector<VertexId> sel{graph.inputs()[0], graph.inputs()[2]};
  const auto masked = mask_cut(graph, sel);
  const std::vector<VertexId> expected{masked.gate_vertex[0], masked.gate_vertex[2]};
  EXPECT_EQ(boundary(masked.graph, masked.cut), expected);
  Rng rng(3);
  auto x = testing::random_input(rng, graph);
  const auto ex = explain(masked.graph, masked.cut, x);
  ASSERT_EQ(ex.entries.size(), 2u);
  EXPECT_EQ(ex.entries[0].value, x[0]);
  EXPECT_EQ(ex.entries[1].value, x[2]);
  const double base = evaluate(masked.graph, x).output;
  for (int i = 0; i < 100; ++i) {
    x[1] = rng.uniform(-1e3, 1e3);
    EXPECT_EQ(evaluate(masked.graph, x).output, base);
  }
}

TEST(MaskCut, RejectsNonInputSelection) {
  const auto graph = small_network();
  EXPECT_THROW(mask_cut(graph, std::vector<VertexId>{graph.output()}), ValidationError);
}

TEST(Serialization, RoundTripIsLossless) {
  Rng rng(23);
  for (int trial = 0; trial < 20; ++trial) {
    const auto graph = testing::random_graph(rng, 15);
    const auto cut = testing::random_cut(rng, graph);
    const auto text = graph_to_json(graph, &cut).dump();
    const auto doc = graph_from_json(nlohmann::json::parse(text));
    EXPECT_EQ(doc.graph, graph);
    ASSERT_TRUE(doc.cut.has_value());
    EXPECT_EQ(*doc.cut, cut);
    EXPECT_EQ(graph_to_json(doc.graph, &*doc.cut).dump(), text);
  }
}

TEST(Serialization, RejectsUnknownVersion) {
  auto doc = graph_to_json(identity_graph());
  doc["version"] = 99;
  EXPECT_THROW(graph_from_json(doc), ValidationError);
}

}  // namespace
}  // namespace soundexpl
