#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "incepse/tensor.hpp"

namespace incepse {

class Tape;

/// Receives per-input gradient contributions during the backward sweep.
/// Contributions to the same node are summed in sweep order.
class GradSink {
public:
  void add(NodeId node, Tensor grad);

private:
  friend class Tape;
  explicit GradSink(std::vector<Tensor>& slots) : slots_(slots) {}
  std::vector<Tensor>& slots_;
};

/// node id -> gradient tensor of identical shape. Leaves without a path to
/// the loss read back as exact zeros.
class GradientMap {
public:
  /// Gradient for a tensor tracked on the originating tape.
  Tensor grad(const Tensor& t) const;

  /// True when some contribution reached this tensor's node.
  bool has(const Tensor& t) const;

private:
  friend class Tape;
  std::uint64_t gen_ = 0;
  std::vector<Tensor> by_node_;
};

using BackwardFn = std::function<void(const Tensor& grad_out, GradSink& sink)>;

/// Per-forward-pass computation tape. Ops append nodes in execution order,
/// so input nodes always precede their consumers; `backward` runs one
/// reverse sweep and is single-threaded. The tape is meant to be discarded
/// after backward.
class Tape {
public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Register a leaf (parameters, inputs under gradient test). Overwrites
  /// any stale handle from a previous tape.
  void watch(Tensor& t);

  /// Record an op node. `inputs` lists the tracked input node ids (callers
  /// pass only ids valid on this tape).
  NodeId record(std::vector<NodeId> inputs, BackwardFn backward);

  bool tracks(const Tensor& t) const {
    return t.node != kNoNode && t.tape_gen == gen_ &&
           t.node < static_cast<NodeId>(entries_.size());
  }

  std::uint64_t generation() const { return gen_; }
  std::size_t size() const { return entries_.size(); }

  /// Reverse-topological accumulation sweep from a scalar loss.
  GradientMap backward(const Tensor& loss) const;

private:
  struct Entry {
    std::vector<NodeId> inputs;
    BackwardFn backward; // empty for leaves
  };

  std::uint64_t gen_;
  std::vector<Entry> entries_;
};

} // namespace incepse
