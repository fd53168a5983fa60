#include "incepse/tape.hpp"

#include <atomic>

#include "incepse/errors.hpp"

namespace incepse {

namespace {
std::atomic<std::uint64_t> g_tape_gen{1};

// a += b, elementwise, into fresh storage (the first contribution may share
// storage with a forward tensor, so accumulation never mutates in place).
Tensor add_fresh(const Tensor& a, const Tensor& b) {
  Tensor out = Tensor::zeros(a.shape());
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.mutable_data();
  const std::int64_t n = a.size();
  for (std::int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  return out;
}
} // namespace

void GradSink::add(NodeId node, Tensor grad) {
  Tensor& slot = slots_[static_cast<std::size_t>(node)];
  if (!slot.defined()) {
    slot = std::move(grad);
  } else {
    slot = add_fresh(slot, grad);
  }
}

Tensor GradientMap::grad(const Tensor& t) const {
  if (t.node == kNoNode || t.tape_gen != gen_ ||
      t.node >= static_cast<NodeId>(by_node_.size()))
    fail_validation("tensor is not tracked on the tape this GradientMap came from");
  const Tensor& g = by_node_[static_cast<std::size_t>(t.node)];
  if (g.defined()) return g;
  return Tensor::zeros(t.shape());
}

bool GradientMap::has(const Tensor& t) const {
  return t.node != kNoNode && t.tape_gen == gen_ &&
         t.node < static_cast<NodeId>(by_node_.size()) &&
         by_node_[static_cast<std::size_t>(t.node)].defined();
}

Tape::Tape() : gen_(g_tape_gen.fetch_add(1)) {}

void Tape::watch(Tensor& t) {
  if (!t.defined()) fail_validation("cannot watch an undefined tensor");
  t.requires_grad = true;
  t.tape_gen = gen_;
  t.node = static_cast<NodeId>(entries_.size());
  entries_.push_back(Entry{{}, BackwardFn{}});
}

NodeId Tape::record(std::vector<NodeId> inputs, BackwardFn backward) {
  NodeId id = static_cast<NodeId>(entries_.size());
  entries_.push_back(Entry{std::move(inputs), std::move(backward)});
  return id;
}

GradientMap Tape::backward(const Tensor& loss) const {
  if (loss.size() != 1) fail_validation("backward requires a scalar loss, got shape " +
                                        shape_to_string(loss.shape()));
  if (entries_.empty()) fail_validation("backward on an empty tape");
  if (!tracks(loss)) fail_validation("loss tensor is not recorded on this tape");

  GradientMap map;
  map.gen_ = gen_;
  map.by_node_.resize(entries_.size());
  map.by_node_[static_cast<std::size_t>(loss.node)] = Tensor::full(loss.shape(), 1.0);

  GradSink sink(map.by_node_);
  for (NodeId id = loss.node; id >= 0; --id) {
    const Entry& e = entries_[static_cast<std::size_t>(id)];
    if (!e.backward) continue; // leaf
    const Tensor& gout = map.by_node_[static_cast<std::size_t>(id)];
    if (!gout.defined()) continue; // no path to the loss
    e.backward(gout, sink);
  }
  return map;
}

} // namespace incepse
