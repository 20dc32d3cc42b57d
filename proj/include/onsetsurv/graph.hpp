#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "onsetsurv/tensor.hpp"

namespace onsetsurv::nn {

/// Learnable parameters plus non-trainable state (batchnorm running statistics).
/// Entries keep declaration order, which is also the checkpoint order.
class ParamStore {
 public:
  struct Entry {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor momentum;
    bool trainable = true;
  };

  Entry& add(std::string name, Tensor value, bool trainable = true);
  Entry& get(std::string_view name);
  const Entry& get(std::string_view name) const;
  bool contains(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;

  Entry& at(std::size_t i) { return entries_.at(i); }
  const Entry& at(std::size_t i) const { return entries_.at(i); }
  std::size_t size() const noexcept { return entries_.size(); }
  std::vector<Entry>& entries() noexcept { return entries_; }
  const std::vector<Entry>& entries() const noexcept { return entries_; }

  /// Number of trainable scalars.
  std::size_t parameter_count() const;
  void zero_grad();

 private:
  std::vector<Entry> entries_;
  std::unordered_map<std::string, std::size_t> index_;
};

enum class Mode { train, infer };

struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

/// Tape of recorded operations. Each op stores its output value and a closure that
/// pushes the output gradient to its inputs. backward() walks the tape in reverse.
class Graph {
 public:
  using Backward = std::function<void(Graph&, const Tensor& out_grad)>;

  Var constant(Tensor value);
  /// Leaf bound to a ParamStore entry; backward() adds the gradient into entry.grad.
  Var parameter(ParamStore& store, std::string_view name);
  Var record(Tensor value, std::vector<Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  /// Gradient of the last backward() target w.r.t. v (zeros if v did not influence it).
  const Tensor& grad(Var v);
  bool requires_grad(Var v) const;

  /// Adds g into the gradient slot of v. No-op for constants.
  void accumulate(Var v, const Tensor& g);
  Tensor& grad_slot(Var v);

  void backward(Var loss);

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Backward backward;
    bool requires_grad = false;
    ParamStore* store = nullptr;
    std::size_t param_index = 0;
  };

  const Node& node(Var v) const;
  Node& node(Var v);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

}  // namespace onsetsurv::nn
