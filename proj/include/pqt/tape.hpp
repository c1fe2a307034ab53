#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "pqt/matrix.hpp"
#include "pqt/pqt_layer.hpp"

namespace pqt {

// Optimizable tensor. `data` points at externally owned storage (a Matrix or a
// BlockGrid values vector); grad and Adam state live here.
struct Param {
  enum class Decay { None, Weight, Bi };

  std::string name;
  std::vector<double>* data = nullptr;
  std::size_t rows = 0, cols = 0;
  Decay decay = Decay::None;
  std::vector<double> grad;
  std::vector<double> adam_m, adam_v;

  void ensure_state() {
    grad.assign(data->size(), 0.0);
    if (adam_m.size() != data->size()) {
      adam_m.assign(data->size(), 0.0);
      adam_v.assign(data->size(), 0.0);
    }
  }

  Matrix as_matrix() const { return Matrix::from(rows, cols, *data); }
};

// Reverse-mode tape over Matrix-valued nodes. A fresh tape is built per step;
// node creation order is the topological order.
class Tape {
 public:
  using NodeId = std::size_t;

  NodeId constant(Matrix v);
  NodeId param(Param& p);
  NodeId pqt_weight(PqtLayerState& state, const PqtConfig& cfg, std::uint64_t step, Param& w,
                    Param& b_i);

  NodeId matmul(NodeId a, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId add_bias(NodeId a, NodeId bias);  // bias is 1 x n, broadcast over rows
  NodeId tanh_act(NodeId a);
  NodeId gelu(NodeId a);  // tanh approximation
  NodeId layernorm(NodeId x, NodeId gain, NodeId bias);
  NodeId softmax(NodeId a);  // per row
  NodeId cross_entropy(NodeId logits, std::vector<int> targets);  // 1x1 mean CE
  NodeId mse(NodeId pred, Matrix target);                         // 1x1 mean squared error
  NodeId embedding(Param& table, std::vector<int> ids);
  // qkv is (B*T x 3d); causal multi-head self-attention, output (B*T x d).
  NodeId causal_attention(NodeId qkv, std::size_t heads, std::size_t batch, std::size_t seqlen);

  const Matrix& value(NodeId id) const { return nodes_[id].value; }
  Matrix& grad(NodeId id) { return nodes_[id].grad; }

  // Seeds d(loss)/d(loss) = 1 and runs all node backwards in reverse order.
  void backward(NodeId loss);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void()> back;  // empty for leaves without gradient
  };

  NodeId push(Matrix value, std::function<void()> back = {});

  std::vector<Node> nodes_;
};

}  // namespace pqt
