#include "onsetsurv/graph.hpp"

#include <stdexcept>

namespace onsetsurv::nn {

ParamStore::Entry& ParamStore::add(std::string name, Tensor value, bool trainable) {
  if (index_.contains(name)) throw std::invalid_argument("duplicate parameter name '" + name + "'");
  Entry e;
  e.grad = Tensor(value.shape());
  e.momentum = Tensor(value.shape());
  e.value = std::move(value);
  e.name = name;
  e.trainable = trainable;
  index_.emplace(std::move(name), entries_.size());
  entries_.push_back(std::move(e));
  return entries_.back();
}

std::size_t ParamStore::index_of(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::out_of_range("unknown parameter '" + std::string(name) + "'");
  return it->second;
}

ParamStore::Entry& ParamStore::get(std::string_view name) { return entries_[index_of(name)]; }
const ParamStore::Entry& ParamStore::get(std::string_view name) const { return entries_[index_of(name)]; }
bool ParamStore::contains(std::string_view name) const { return index_.contains(std::string(name)); }

std::size_t ParamStore::parameter_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_)
    if (e.trainable) n += e.value.size();
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.fill(0.0);
}

const Graph::Node& Graph::node(Var v) const {
  if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this graph");
  return nodes_[v.id];
}

Graph::Node& Graph::node(Var v) {
  if (v.id >= nodes_.size()) throw std::out_of_range("variable does not belong to this graph");
  return nodes_[v.id];
}

Var Graph::constant(Tensor value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::parameter(ParamStore& store, std::string_view name) {
  const auto idx = store.index_of(name);
  Node n;
  n.value = store.at(idx).value;
  n.requires_grad = store.at(idx).trainable;
  n.store = &store;
  n.param_index = idx;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Graph::record(Tensor value, std::vector<Var> inputs, Backward backward) {
  bool needs = false;
  for (auto in : inputs) needs = needs || node(in).requires_grad;
  Node n;
  n.value = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Graph::value(Var v) const { return node(v).value; }

bool Graph::requires_grad(Var v) const { return node(v).requires_grad; }

Tensor& Graph::grad_slot(Var v) {
  auto& n = node(v);
  if (n.grad.empty()) n.grad = Tensor(n.value.shape());
  return n.grad;
}

const Tensor& Graph::grad(Var v) { return grad_slot(v); }

void Graph::accumulate(Var v, const Tensor& g) {
  auto& n = node(v);
  if (!n.requires_grad) return;
  require_same_shape(n.value, g, "gradient accumulation");
  auto& slot = grad_slot(v);
  for (std::size_t i = 0; i < g.size(); ++i) slot[i] += g[i];
}

void Graph::backward(Var loss) {
  if (nodes_.empty()) throw std::logic_error("backward called before any forward pass was recorded");
  if (backward_done_) throw std::logic_error("backward already ran on this graph");
  auto& root = node(loss);
  if (root.value.size() != 1)
    throw std::invalid_argument("backward needs a scalar loss, got " + shape_string(root.value.shape()));
  backward_done_ = true;
  if (!root.requires_grad) return;
  grad_slot(loss)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.requires_grad || n.grad.empty()) continue;
    if (n.backward) {
      n.backward(*this, n.grad);
    } else if (n.store) {
      auto& dst = n.store->at(n.param_index).grad;
      for (std::size_t k = 0; k < n.grad.size(); ++k) dst[k] += n.grad[k];
    }
  }
}

}  // namespace onsetsurv::nn
