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

// Computational graphs, cuts and sound explanations.
//
// A system is a DAG whose input vertices carry the raw input, whose single
// output vertex carries the prediction, and whose other vertices apply one
// opcode from a closed set to their predecessors (argument order matters).
// A cut (S, T) with every input in S and the output in T yields an
// explanation: the values of the S vertices that feed T. Replaying T from
// those values alone reproduces the output, which is what makes the
// explanation sound.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "soundexpl/error.hpp"

namespace soundexpl {

using VertexId = std::size_t;

enum class VertexKind { Input, Internal, Output };

enum class Opcode { Affine, Tanh, Sigmoid, Sum, Product, Threshold, Mux, Negate, Max };

enum class ThresholdDirection { LessEqual, Greater };

inline const char* to_string(VertexKind kind) {
  switch (kind) {
    case VertexKind::Input: return "input";
    case VertexKind::Internal: return "internal";
    case VertexKind::Output: return "output";
  }
  return "?";
}

inline const char* to_string(Opcode code) {
  switch (code) {
    case Opcode::Affine: return "affine";
    case Opcode::Tanh: return "tanh";
    case Opcode::Sigmoid: return "sigmoid";
    case Opcode::Sum: return "sum";
    case Opcode::Product: return "product";
    case Opcode::Threshold: return "threshold";
    case Opcode::Mux: return "mux";
    case Opcode::Negate: return "negate";
    case Opcode::Max: return "max";
  }
  return "?";
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

// The function attached to a non-input vertex. Constants only ever live
// here, never as vertices.
//
// Arity rules:
//   affine     len(coefficients)      sum_i c_i * a_i + bias
//   tanh, sigmoid, negate   1
//   sum, product, max       >= 1
//   threshold  1 or 2   [a <= c] (or [a > c]); with two arguments the
//                       first is an enable multiplied into the indicator
//   mux        k + 1    a_0 selects among a_1..a_k (rounded, clamped)
struct OpSpec {
  Opcode code = Opcode::Sum;
  std::vector<double> coefficients;
  double bias = 0.0;
  double constant = 0.0;
  ThresholdDirection direction = ThresholdDirection::LessEqual;
  std::size_t selector_arity = 0;

  static OpSpec affine(std::vector<double> coefficients, double bias = 0.0) {
    OpSpec op;
    op.code = Opcode::Affine;
    op.coefficients = std::move(coefficients);
    op.bias = bias;
    return op;
  }
  static OpSpec unary(Opcode code) {
    OpSpec op;
    op.code = code;
    return op;
  }
  static OpSpec tanh() { return unary(Opcode::Tanh); }
  static OpSpec sigmoid() { return unary(Opcode::Sigmoid); }
  static OpSpec negate() { return unary(Opcode::Negate); }
  static OpSpec sum() { return unary(Opcode::Sum); }
  static OpSpec product() { return unary(Opcode::Product); }
  static OpSpec max() { return unary(Opcode::Max); }
  static OpSpec threshold(double constant, ThresholdDirection direction) {
    OpSpec op;
    op.code = Opcode::Threshold;
    op.constant = constant;
    op.direction = direction;
    return op;
  }
  static OpSpec mux(std::size_t data_arity) {
    OpSpec op;
    op.code = Opcode::Mux;
    op.selector_arity = data_arity;
    return op;
  }

  bool accepts_arity(std::size_t n) const {
    switch (code) {
      case Opcode::Affine: return n == coefficients.size() && n >= 1;
      case Opcode::Tanh:
      case Opcode::Sigmoid:
      case Opcode::Negate: return n == 1;
      case Opcode::Sum:
      case Opcode::Product:
      case Opcode::Max: return n >= 1;
      case Opcode::Threshold: return n == 1 || n == 2;
      case Opcode::Mux: return selector_arity >= 1 && n == selector_arity + 1;
    }
    return false;
  }

  double apply(std::span<const double> args) const {
    switch (code) {
      case Opcode::Affine: {
        double acc = 0.0;
        for (std::size_t i = 0; i < args.size(); ++i) acc += coefficients[i] * args[i];
        return acc + bias;
      }
      case Opcode::Tanh: return std::tanh(args[0]);
      case Opcode::Sigmoid: return soundexpl::sigmoid(args[0]);
      case Opcode::Negate: return -args[0];
      case Opcode::Sum: {
        double acc = 0.0;
        for (double a : args) acc += a;
        return acc;
      }
      case Opcode::Product: {
        double acc = 1.0;
        for (double a : args) acc *= a;
        return acc;
      }
      case Opcode::Max: {
        double best = args[0];
        for (double a : args.subspan(1)) {
          if (std::isnan(a)) return a;
          best = std::max(best, a);
        }
        return best;
      }
      case Opcode::Threshold: {
        const double value = args.back();
        const bool hit = direction == ThresholdDirection::LessEqual ? value <= constant
                                                                    : value > constant;
        if (std::isnan(value)) return value;
        const double indicator = hit ? 1.0 : 0.0;
        return args.size() == 2 ? args[0] * indicator : indicator;
      }
      case Opcode::Mux: {
        const double selector = args[0];
        if (std::isnan(selector)) return selector;
        const double idx = std::clamp(std::round(selector), 0.0,
                                      static_cast<double>(selector_arity - 1));
        return args[1 + static_cast<std::size_t>(idx)];
      }
    }
    return std::nan("");
  }

  bool operator==(const OpSpec&) const = default;
};

class CompGraph {
 public:
  struct Vertex {
    VertexKind kind = VertexKind::Internal;
    std::string name;
    bool operator==(const Vertex&) const = default;
  };

  // Validates every structural invariant; throws ValidationError.
  CompGraph(std::vector<Vertex> vertices, std::vector<std::vector<VertexId>> incoming,
            std::vector<std::optional<OpSpec>> ops)
      : vertices_(std::move(vertices)), incoming_(std::move(incoming)), ops_(std::move(ops)) {
    validate_and_index();
  }

  std::size_t size() const { return vertices_.size(); }
  VertexKind kind(VertexId v) const { return vertices_.at(v).kind; }
  const std::string& name(VertexId v) const { return vertices_.at(v).name; }
  std::span<const VertexId> incoming(VertexId v) const { return incoming_.at(v); }
  std::span<const VertexId> outgoing(VertexId v) const { return outgoing_.at(v); }
  const OpSpec& op(VertexId v) const {
    if (!ops_.at(v)) throw ValidationError("vertex " + std::to_string(v) + " has no op");
    return *ops_[v];
  }
  bool has_op(VertexId v) const { return ops_.at(v).has_value(); }
  std::span<const VertexId> inputs() const { return inputs_; }
  VertexId output() const { return output_; }
  std::span<const VertexId> topological_order() const { return topo_; }
  std::size_t edge_count() const {
    std::size_t n = 0;
    for (const auto& in : incoming_) n += in.size();
    return n;
  }

  bool operator==(const CompGraph& other) const {
    return vertices_ == other.vertices_ && incoming_ == other.incoming_ && ops_ == other.ops_;
  }

 private:
  void validate_and_index() {
    const std::size_t n = vertices_.size();
    auto fail = [](const std::string& what) { throw ValidationError("invalid graph: " + what); };
    if (incoming_.size() != n || ops_.size() != n) fail("vertex, adjacency and op tables differ in size");
    outgoing_.assign(n, {});
    bool have_output = false;
    for (VertexId v = 0; v < n; ++v) {
      const auto& vx = vertices_[v];
      for (VertexId u : incoming_[v]) {
        if (u >= n) fail("edge from unknown vertex " + std::to_string(u));
        if (u == v) fail("self loop at vertex " + std::to_string(v));
        outgoing_[u].push_back(v);
      }
      if (vx.kind == VertexKind::Input) {
        if (!incoming_[v].empty()) fail("input vertex " + std::to_string(v) + " has incoming edges");
        if (ops_[v]) fail("input vertex " + std::to_string(v) + " has an op");
        inputs_.push_back(v);
        continue;
      }
      if (incoming_[v].empty())
        fail("non-input vertex " + std::to_string(v) + " has no incoming edges");
      if (!ops_[v]) fail("vertex " + std::to_string(v) + " has no op");
      if (!ops_[v]->accepts_arity(incoming_[v].size()))
        fail(std::string("vertex ") + std::to_string(v) + ": " + to_string(ops_[v]->code) +
             " does not accept in-degree " + std::to_string(incoming_[v].size()));
      if (vx.kind == VertexKind::Output) {
        if (have_output) fail("more than one output vertex");
        have_output = true;
        output_ = v;
      }
    }
    if (!have_output) fail("no output vertex");
    if (!outgoing_[output_].empty()) fail("output vertex has outgoing edges");

    // Kahn's algorithm, lowest id first among ready vertices.
    std::vector<std::size_t> indegree(n);
    for (VertexId v = 0; v < n; ++v) indegree[v] = incoming_[v].size();
    std::vector<VertexId> ready;
    for (VertexId v = n; v-- > 0;)
      if (indegree[v] == 0) ready.push_back(v);
    topo_.reserve(n);
    while (!ready.empty()) {
      const VertexId v = ready.back();
      ready.pop_back();
      topo_.push_back(v);
      for (VertexId w : outgoing_[v])
        if (--indegree[w] == 0) ready.push_back(w);
    }
    if (topo_.size() != n) fail("graph has a cycle");
  }

  std::vector<Vertex> vertices_;
  std::vector<std::vector<VertexId>> incoming_;
  std::vector<std::optional<OpSpec>> ops_;
  std::vector<std::vector<VertexId>> outgoing_;
  std::vector<VertexId> inputs_;
  VertexId output_ = 0;
  std::vector<VertexId> topo_;
};

class GraphBuilder {
 public:
  VertexId add_input(std::string name = {}) {
    vertices_.push_back({VertexKind::Input, std::move(name)});
    incoming_.emplace_back();
    ops_.emplace_back();
    return vertices_.size() - 1;
  }
  VertexId add(OpSpec op, std::vector<VertexId> args, std::string name = {}) {
    return push(VertexKind::Internal, std::move(op), std::move(args), std::move(name));
  }
  VertexId add_output(OpSpec op, std::vector<VertexId> args, std::string name = "t") {
    return push(VertexKind::Output, std::move(op), std::move(args), std::move(name));
  }
  CompGraph build() && {
    return CompGraph(std::move(vertices_), std::move(incoming_), std::move(ops_));
  }
  CompGraph build() const& { return CompGraph(vertices_, incoming_, ops_); }

 private:
  VertexId push(VertexKind kind, OpSpec op, std::vector<VertexId> args, std::string name) {
    vertices_.push_back({kind, std::move(name)});
    incoming_.push_back(std::move(args));
    ops_.emplace_back(std::move(op));
    return vertices_.size() - 1;
  }

  std::vector<CompGraph::Vertex> vertices_;
  std::vector<std::vector<VertexId>> incoming_;
  std::vector<std::optional<OpSpec>> ops_;
};

struct Evaluation {
  double output = 0.0;
  std::vector<double> values;  // indexed by vertex id
};

namespace detail {

inline double apply_checked(const CompGraph& graph, VertexId v, std::vector<double>& scratch,
                            const std::vector<double>& values) {
  scratch.clear();
  for (VertexId u : graph.incoming(v)) scratch.push_back(values[u]);
  const double value = graph.op(v).apply(scratch);
  if (std::isnan(value)) throw NumericError("NaN produced at vertex " + std::to_string(v));
  return value;
}

}  // namespace detail

// `input[k]` is the value of the k-th input vertex (ascending id order).
inline Evaluation evaluate(const CompGraph& graph, std::span<const double> input) {
  const auto inputs = graph.inputs();
  if (input.size() != inputs.size())
    throw InputArityError("graph has " + std::to_string(inputs.size()) + " inputs, got " +
                          std::to_string(input.size()) + " values");
  Evaluation ev;
  ev.values.assign(graph.size(), 0.0);
  for (std::size_t k = 0; k < inputs.size(); ++k) ev.values[inputs[k]] = input[k];
  std::vector<double> scratch;
  for (VertexId v : graph.topological_order()) {
    if (graph.kind(v) == VertexKind::Input) continue;
    ev.values[v] = detail::apply_checked(graph, v, scratch, ev.values);
  }
  ev.output = ev.values[graph.output()];
  return ev;
}

enum class Side : unsigned char { S, T };

struct Cut {
  std::vector<Side> side;  // indexed by vertex id

  // C = (V \ {t}, {t}).
  static Cut output_only(const CompGraph& graph) {
    Cut cut{std::vector<Side>(graph.size(), Side::S)};
    cut.side[graph.output()] = Side::T;
    return cut;
  }
  // C = (I, V \ I).
  static Cut inputs_only(const CompGraph& graph) {
    Cut cut{std::vector<Side>(graph.size(), Side::T)};
    for (VertexId v : graph.inputs()) cut.side[v] = Side::S;
    return cut;
  }
  bool in_s(VertexId v) const { return side[v] == Side::S; }
  bool operator==(const Cut&) const = default;
};

inline void validate_cut(const CompGraph& graph, const Cut& cut) {
  if (cut.side.size() != graph.size())
    throw InvalidCutError("partition", "cut assigns " + std::to_string(cut.side.size()) +
                                           " vertices, graph has " + std::to_string(graph.size()));
  for (std::size_t v = 0; v < cut.side.size(); ++v)
    if (cut.side[v] != Side::S && cut.side[v] != Side::T)
      throw InvalidCutError("partition", "vertex " + std::to_string(v) + " has no side");
  for (VertexId v : graph.inputs())
    if (cut.side[v] != Side::S)
      throw InvalidCutError("inputs-in-S", "input vertex " + std::to_string(v) + " is in T");
  if (cut.side[graph.output()] != Side::T)
    throw InvalidCutError("output-in-T", "output vertex is in S");
}

// V_C: vertices of S with at least one edge into T, ascending.
inline std::vector<VertexId> boundary(const CompGraph& graph, const Cut& cut) {
  validate_cut(graph, cut);
  std::vector<VertexId> out;
  for (VertexId v = 0; v < graph.size(); ++v) {
    if (!cut.in_s(v)) continue;
    const auto succ = graph.outgoing(v);
    if (std::any_of(succ.begin(), succ.end(), [&](VertexId w) { return !cut.in_s(w); }))
      out.push_back(v);
  }
  return out;
}

struct ExplanationEntry {
  VertexId vertex = 0;
  double value = 0.0;
  bool operator==(const ExplanationEntry&) const = default;
};

struct Explanation {
  std::vector<ExplanationEntry> entries;  // ascending vertex id

  std::optional<double> value_of(VertexId v) const {
    for (const auto& e : entries)
      if (e.vertex == v) return e.value;
    return std::nullopt;
  }
  bool operator==(const Explanation&) const = default;
};

inline Explanation explain(const CompGraph& graph, const Cut& cut, std::span<const double> input) {
  const auto border = boundary(graph, cut);
  const Evaluation ev = evaluate(graph, input);
  Explanation ex;
  ex.entries.reserve(border.size());
  for (VertexId v : border) ex.entries.push_back({v, ev.values[v]});
  return ex;
}

// Recompute the T side from the explanation alone and return the output.
inline double replay(const CompGraph& graph, const Cut& cut, const Explanation& explanation) {
  const auto border = boundary(graph, cut);
  std::vector<double> values(graph.size(), std::nan(""));
  std::vector<char> known(graph.size(), 0);
  for (const auto& e : explanation.entries) {
    if (e.vertex >= graph.size())
      throw ValidationError("explanation names unknown vertex " + std::to_string(e.vertex));
    if (known[e.vertex])
      throw ValidationError("explanation repeats vertex " + std::to_string(e.vertex));
    if (!std::binary_search(border.begin(), border.end(), e.vertex))
      throw ValidationError("explanation vertex " + std::to_string(e.vertex) +
                            " is not on the cut boundary");
    known[e.vertex] = 1;
    values[e.vertex] = e.value;
  }
  for (VertexId v : border)
    if (!known[v])
      throw IncompleteExplanationError(
          v, "explanation is missing boundary vertex " + std::to_string(v));
  std::vector<double> scratch;
  for (VertexId v : graph.topological_order()) {
    if (cut.in_s(v)) continue;
    values[v] = detail::apply_checked(graph, v, scratch, values);
  }
  return values[graph.output()];
}

// ---------------------------------------------------------------------------
// Decision trees.

struct TreeNode {
  bool leaf = true;
  std::size_t feature = 0;
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  double value = 0.0;

  static TreeNode make_leaf(double value) {
    TreeNode n;
    n.value = value;
    return n;
  }
  static TreeNode make_split(std::size_t feature, double threshold, std::size_t left,
                             std::size_t right) {
    TreeNode n;
    n.leaf = false;
    n.feature = feature;
    n.threshold = threshold;
    n.left = left;
    n.right = right;
    return n;
  }
};

// Binary tree; x[feature] <= threshold goes left.
struct DecisionTree {
  std::size_t input_dim = 0;
  std::vector<TreeNode> nodes;
  std::size_t root = 0;

  void validate() const {
    auto fail = [](const std::string& what) { throw ValidationError("invalid tree: " + what); };
    if (nodes.empty()) fail("no nodes");
    if (root >= nodes.size()) fail("root out of range");
    std::vector<int> parents(nodes.size(), 0);
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      const auto& n = nodes[i];
      if (n.leaf) continue;
      if (n.feature >= input_dim) fail("node " + std::to_string(i) + " reads feature out of range");
      if (n.left >= nodes.size() || n.right >= nodes.size())
        fail("node " + std::to_string(i) + " has a child out of range");
      if (n.left == n.right) fail("node " + std::to_string(i) + " has identical children");
      ++parents[n.left];
      ++parents[n.right];
    }
    if (parents[root] != 0) fail("root has a parent");
    // Reachability from the root with every other node having one parent
    // rules out cycles and forests.
    std::vector<char> seen(nodes.size(), 0);
    std::vector<std::size_t> stack{root};
    std::size_t reached = 0;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      if (seen[i]) fail("node " + std::to_string(i) + " reached twice");
      seen[i] = 1;
      ++reached;
      if (!nodes[i].leaf) {
        stack.push_back(nodes[i].right);
        stack.push_back(nodes[i].left);
      }
    }
    if (reached != nodes.size()) fail("unreachable nodes");
    for (std::size_t i = 0; i < nodes.size(); ++i)
      if (i != root && parents[i] != 1) fail("node " + std::to_string(i) + " has several parents");
  }

  std::size_t leaf_for(std::span<const double> x) const {
    std::size_t i = root;
    while (!nodes[i].leaf) i = x[nodes[i].feature] <= nodes[i].threshold ? nodes[i].left : nodes[i].right;
    return i;
  }
  double predict(std::span<const double> x) const { return nodes[leaf_for(x)].value; }
};

struct TreeGraph {
  CompGraph graph;
  Cut cut;
  std::vector<VertexId> node_vertex;  // tree node index -> vertex id
};

// One vertex per tree node whose value is 1 iff the node is on the decision
// path. The output sums leaf activation times leaf value; the returned cut is
// (V \ {t}, {t}) so the explanation lists the leaf activations.
inline TreeGraph tree_to_graph(const DecisionTree& tree) {
  tree.validate();
  if (tree.input_dim == 0) throw ValidationError("invalid tree: zero input dimension");
  GraphBuilder b;
  std::vector<VertexId> x(tree.input_dim);
  for (std::size_t f = 0; f < tree.input_dim; ++f) x[f] = b.add_input("x" + std::to_string(f));

  std::vector<VertexId> node_vertex(tree.nodes.size());
  const auto& root = tree.nodes[tree.root];
  // The root is always active: a constant 1 read off an input so that only
  // input vertices lack incoming edges.
  node_vertex[tree.root] =
      b.add(OpSpec::affine({0.0}, 1.0), {x[root.leaf ? 0 : root.feature]}, "node" + std::to_string(tree.root));

  std::vector<VertexId> leaf_vertices;
  std::vector<double> leaf_values;
  std::deque<std::size_t> queue{tree.root};
  while (!queue.empty()) {
    const std::size_t i = queue.front();
    queue.pop_front();
    const auto& n = tree.nodes[i];
    if (n.leaf) {
      leaf_vertices.push_back(node_vertex[i]);
      leaf_values.push_back(n.value);
      continue;
    }
    node_vertex[n.left] = b.add(OpSpec::threshold(n.threshold, ThresholdDirection::LessEqual),
                                {node_vertex[i], x[n.feature]}, "node" + std::to_string(n.left));
    node_vertex[n.right] = b.add(OpSpec::threshold(n.threshold, ThresholdDirection::Greater),
                                 {node_vertex[i], x[n.feature]}, "node" + std::to_string(n.right));
    queue.push_back(n.left);
    queue.push_back(n.right);
  }
  b.add_output(OpSpec::affine(std::move(leaf_values), 0.0), std::move(leaf_vertices));
  CompGraph graph = std::move(b).build();
  Cut cut = Cut::output_only(graph);
  return {std::move(graph), std::move(cut), std::move(node_vertex)};
}

// ---------------------------------------------------------------------------
// Binary input masks.

struct MaskedGraph {
  CompGraph graph;
  Cut cut;
  std::vector<VertexId> gate_vertex;  // k-th input -> its gate vertex
};

// Route every input through a gate vertex (coefficient 1 when selected, 0
// otherwise). Consumers of unselected inputs read a zero vertex on the T side
// that depends only on the selected gates, so the boundary is exactly the
// selected gates. With an empty selection the zero vertex has to read
// something; it reads the first (constant-zero) gate.
inline MaskedGraph mask_cut(const CompGraph& graph, std::span<const VertexId> selected) {
  const auto inputs = graph.inputs();
  const std::size_t n = graph.size();
  std::vector<int> input_pos(n, -1);
  for (std::size_t k = 0; k < inputs.size(); ++k) input_pos[inputs[k]] = static_cast<int>(k);
  std::vector<char> chosen(inputs.size(), 0);
  for (VertexId v : selected) {
    if (v >= n || input_pos[v] < 0)
      throw ValidationError("invalid selection: vertex " + std::to_string(v) + " is not an input");
    chosen[static_cast<std::size_t>(input_pos[v])] = 1;
  }

  bool need_zero = false;
  for (std::size_t k = 0; k < inputs.size(); ++k)
    if (!chosen[k] && !graph.outgoing(inputs[k]).empty()) need_zero = true;

  std::vector<CompGraph::Vertex> vertices;
  std::vector<std::vector<VertexId>> incoming;
  std::vector<std::optional<OpSpec>> ops;
  std::vector<Side> side;
  auto push = [&](VertexKind kind, std::string name, std::vector<VertexId> args,
                  std::optional<OpSpec> op, Side s) {
    vertices.push_back({kind, std::move(name)});
    incoming.push_back(std::move(args));
    ops.push_back(std::move(op));
    side.push_back(s);
    return vertices.size() - 1;
  };

  std::vector<VertexId> remap(n, 0);
  for (VertexId v : inputs) remap[v] = push(VertexKind::Input, graph.name(v), {}, std::nullopt, Side::S);
  std::vector<VertexId> gate(inputs.size());
  std::vector<VertexId> selected_gates;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    gate[k] = push(VertexKind::Internal, "gate:" + graph.name(inputs[k]), {remap[inputs[k]]},
                   OpSpec::affine({chosen[k] ? 1.0 : 0.0}), Side::S);
    if (chosen[k]) selected_gates.push_back(gate[k]);
  }
  VertexId zero = 0;
  if (need_zero) {
    std::vector<VertexId> anchor = selected_gates;
    if (anchor.empty()) anchor.push_back(gate[0]);
    std::vector<double> zeros(anchor.size(), 0.0);
    zero = push(VertexKind::Internal, "zero", std::move(anchor), OpSpec::affine(std::move(zeros)),
                Side::T);
  }
  for (VertexId v = 0; v < n; ++v)
    if (graph.kind(v) != VertexKind::Input)
      remap[v] = push(graph.kind(v), graph.name(v), {}, graph.op(v), Side::T);
  for (VertexId v = 0; v < n; ++v) {
    if (graph.kind(v) == VertexKind::Input) continue;
    auto& args = incoming[remap[v]];
    for (VertexId u : graph.incoming(v)) {
      if (input_pos[u] < 0) {
        args.push_back(remap[u]);
      } else {
        const auto k = static_cast<std::size_t>(input_pos[u]);
        args.push_back(chosen[k] ? gate[k] : zero);
      }
    }
  }
  CompGraph masked(std::move(vertices), std::move(incoming), std::move(ops));
  return {std::move(masked), Cut{std::move(side)}, std::move(gate)};
}

// ---------------------------------------------------------------------------
// JSON document: {"format", "version", "vertices", "edges", "op_table", "cut"?}.
// Edges are listed grouped by target in argument order.

inline constexpr int kGraphFormatVersion = 1;
inline constexpr const char* kGraphFormatName = "soundexpl.compgraph";

inline nlohmann::json op_to_json(const OpSpec& op) {
  nlohmann::json j;
  j["op"] = to_string(op.code);
  switch (op.code) {
    case Opcode::Affine:
      j["coefficients"] = op.coefficients;
      j["bias"] = op.bias;
      break;
    case Opcode::Threshold:
      j["constant"] = op.constant;
      j["direction"] = op.direction == ThresholdDirection::LessEqual ? "le" : "gt";
      break;
    case Opcode::Mux: j["selector_arity"] = op.selector_arity; break;
    default: break;
  }
  return j;
}

inline OpSpec op_from_json(const nlohmann::json& j) {
  const std::string name = j.at("op").get<std::string>();
  for (Opcode code : {Opcode::Affine, Opcode::Tanh, Opcode::Sigmoid, Opcode::Sum, Opcode::Product,
                      Opcode::Threshold, Opcode::Mux, Opcode::Negate, Opcode::Max}) {
    if (name != to_string(code)) continue;
    OpSpec op = OpSpec::unary(code);
    if (code == Opcode::Affine) {
      op.coefficients = j.at("coefficients").get<std::vector<double>>();
      op.bias = j.at("bias").get<double>();
    } else if (code == Opcode::Threshold) {
      op.constant = j.at("constant").get<double>();
      const std::string dir = j.at("direction").get<std::string>();
      if (dir != "le" && dir != "gt") throw ValidationError("unknown threshold direction " + dir);
      op.direction = dir == "le" ? ThresholdDirection::LessEqual : ThresholdDirection::Greater;
    } else if (code == Opcode::Mux) {
      op.selector_arity = j.at("selector_arity").get<std::size_t>();
    }
    return op;
  }
  throw ValidationError("unknown opcode " + name);
}

inline nlohmann::json graph_to_json(const CompGraph& graph, const Cut* cut = nullptr) {
  nlohmann::json doc;
  doc["format"] = kGraphFormatName;
  doc["version"] = kGraphFormatVersion;
  auto vertices = nlohmann::json::array();
  auto edges = nlohmann::json::array();
  auto ops = nlohmann::json::object();
  for (VertexId v = 0; v < graph.size(); ++v) {
    vertices.push_back({{"id", v}, {"kind", to_string(graph.kind(v))}, {"name", graph.name(v)}});
    for (VertexId u : graph.incoming(v)) edges.push_back({u, v});
    if (graph.has_op(v)) ops[std::to_string(v)] = op_to_json(graph.op(v));
  }
  doc["vertices"] = std::move(vertices);
  doc["edges"] = std::move(edges);
  doc["op_table"] = std::move(ops);
  if (cut != nullptr) {
    validate_cut(graph, *cut);
    auto sides = nlohmann::json::array();
    for (Side s : cut->side) sides.push_back(s == Side::S ? "S" : "T");
    doc["cut"] = {{"side", std::move(sides)}};
  }
  return doc;
}

struct GraphDocument {
  CompGraph graph;
  std::optional<Cut> cut;
};

inline GraphDocument graph_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format").get<std::string>() != kGraphFormatName)
      throw ValidationError("not a compgraph document");
    if (doc.at("version").get<int>() != kGraphFormatVersion)
      throw ValidationError("unsupported compgraph version " + doc.at("version").dump());
    const auto& jv = doc.at("vertices");
    const std::size_t n = jv.size();
    std::vector<CompGraph::Vertex> vertices(n);
    for (std::size_t i = 0; i < n; ++i) {
      if (jv[i].at("id").get<std::size_t>() != i) throw ValidationError("vertex ids must be 0..n-1 in order");
      const std::string kind = jv[i].at("kind").get<std::string>();
      if (kind == "input") vertices[i].kind = VertexKind::Input;
      else if (kind == "internal") vertices[i].kind = VertexKind::Internal;
      else if (kind == "output") vertices[i].kind = VertexKind::Output;
      else throw ValidationError("unknown vertex kind " + kind);
      vertices[i].name = jv[i].value("name", std::string{});
    }
    std::vector<std::vector<VertexId>> incoming(n);
    for (const auto& e : doc.at("edges")) {
      const auto src = e.at(0).get<std::size_t>();
      const auto dst = e.at(1).get<std::size_t>();
      if (dst >= n) throw ValidationError("edge into unknown vertex " + std::to_string(dst));
      incoming[dst].push_back(src);
    }
    std::vector<std::optional<OpSpec>> ops(n);
    for (const auto& [key, value] : doc.at("op_table").items()) {
      const std::size_t v = std::stoul(key);
      if (v >= n) throw ValidationError("op for unknown vertex " + key);
      ops[v] = op_from_json(value);
    }
    GraphDocument out{CompGraph(std::move(vertices), std::move(incoming), std::move(ops)), std::nullopt};
    if (doc.contains("cut")) {
      Cut cut;
      for (const auto& s : doc.at("cut").at("side")) {
        const std::string tag = s.get<std::string>();
        if (tag != "S" && tag != "T") throw InvalidCutError("partition", "side must be S or T");
        cut.side.push_back(tag == "S" ? Side::S : Side::T);
      }
      validate_cut(out.graph, cut);
      out.cut = std::move(cut);
    }
    return out;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("malformed compgraph document: ") + e.what());
  }
}

inline nlohmann::json explanation_to_json(const CompGraph& graph, const Explanation& ex) {
  auto entries = nlohmann::json::array();
  for (const auto& e : ex.entries)
    entries.push_back({{"vertex", e.vertex}, {"name", graph.name(e.vertex)}, {"value", e.value}});
  return entries;
}

}  // namespace soundexpl
