#include "pqt/tape.hpp"

#include <cmath>
#include <memory>
#include <stdexcept>

#include "pqt/linalg.hpp"

namespace pqt {

Tape::NodeId Tape::push(Matrix value, std::function<void()> back) {
  nodes_.push_back(Node{std::move(value), Matrix(), std::move(back)});
  return nodes_.size() - 1;
}

Tape::NodeId Tape::constant(Matrix v) { return push(std::move(v)); }

Tape::NodeId Tape::param(Param& p) {
  p.ensure_state();
  const NodeId id = nodes_.size();
  return push(p.as_matrix(), [this, id, &p] {
    const Matrix& g = nodes_[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) p.grad[i] += g.data()[i];
  });
}

Tape::NodeId Tape::pqt_weight(PqtLayerState& state, const PqtConfig& cfg, std::uint64_t step,
                              Param& w, Param& b_i) {
  w.ensure_state();
  b_i.ensure_state();
  const NodeId id = nodes_.size();
  Matrix w_hat = sample_weights(state, cfg, step);
  return push(std::move(w_hat), [this, id, &state, &cfg, step, &w, &b_i] {
    const PqtGrads g = pqt_backward(nodes_[id].grad, state, cfg, step);
    for (std::size_t i = 0; i < g.grad_w.size(); ++i) w.grad[i] += g.grad_w.data()[i];
    for (std::size_t i = 0; i < g.grad_bi.size(); ++i) b_i.grad[i] += g.grad_bi.values[i];
  });
}

Tape::NodeId Tape::matmul(NodeId a, NodeId b) {
  const NodeId id = nodes_.size();
  return push(pqt::matmul(nodes_[a].value, nodes_[b].value), [this, id, a, b] {
    const Matrix& g = nodes_[id].grad;
    const Matrix ga = matmul_nt(g, nodes_[b].value);  // g * B^T
    const Matrix gb = matmul_tn(nodes_[a].value, g);  // A^T * g
    for (std::size_t i = 0; i < ga.size(); ++i) nodes_[a].grad.data()[i] += ga.data()[i];
    for (std::size_t i = 0; i < gb.size(); ++i) nodes_[b].grad.data()[i] += gb.data()[i];
  });
}

Tape::NodeId Tape::add(NodeId a, NodeId b) {
  if (!nodes_[a].value.same_shape(nodes_[b].value))
    throw std::invalid_argument("Tape::add: shape mismatch");
  const NodeId id = nodes_.size();
  Matrix v = nodes_[a].value;
  for (std::size_t i = 0; i < v.size(); ++i) v.data()[i] += nodes_[b].value.data()[i];
  return push(std::move(v), [this, id, a, b] {
    const Matrix& g = nodes_[id].grad;
    for (std::size_t i = 0; i < g.size(); ++i) {
      nodes_[a].grad.data()[i] += g.data()[i];
      nodes_[b].grad.data()[i] += g.data()[i];
    }
  });
}

Tape::NodeId Tape::add_bias(NodeId a, NodeId bias) {
  const Matrix& av = nodes_[a].value;
  const Matrix& bv = nodes_[bias].value;
  if (bv.rows() != 1 || bv.cols() != av.cols())
    throw std::invalid_argument("Tape::add_bias: bias must be 1 x cols");
  const NodeId id = nodes_.size();
  Matrix v = av;
  for (std::size_t i = 0; i < v.rows(); ++i)
    for (std::size_t j = 0; j < v.cols(); ++j) v.at(i, j) += bv.at(0, j);
  return push(std::move(v), [this, id, a, bias] {
    const Matrix& g = nodes_[id].grad;
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < g.cols(); ++j) {
        nodes_[a].grad.at(i, j) += g.at(i, j);
        nodes_[bias].grad.at(0, j) += g.at(i, j);
      }
  });
}

Tape::NodeId Tape::tanh_act(NodeId a) {
  const NodeId id = nodes_.size();
  Matrix v = nodes_[a].value;
  for (double& x : v.data()) x = std::tanh(x);
  return push(std::move(v), [this, id, a] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& y = nodes_[id].value;
    for (std::size_t i = 0; i < g.size(); ++i)
      nodes_[a].grad.data()[i] += g.data()[i] * (1.0 - y.data()[i] * y.data()[i]);
  });
}

Tape::NodeId Tape::gelu(NodeId a) {
  constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
  constexpr double kA = 0.044715;
  const NodeId id = nodes_.size();
  Matrix v = nodes_[a].value;
  for (double& x : v.data()) x = 0.5 * x * (1.0 + std::tanh(kC * (x + kA * x * x * x)));
  return push(std::move(v), [this, id, a] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& x = nodes_[a].value;
    for (std::size_t i = 0; i < g.size(); ++i) {
      const double xi = x.data()[i];
      const double t = std::tanh(kC * (xi + kA * xi * xi * xi));
      const double d =
          0.5 * (1.0 + t) + 0.5 * xi * (1.0 - t * t) * kC * (1.0 + 3.0 * kA * xi * xi);
      nodes_[a].grad.data()[i] += g.data()[i] * d;
    }
  });
}

Tape::NodeId Tape::layernorm(NodeId x, NodeId gain, NodeId bias) {
  constexpr double kEps = 1e-5;
  const Matrix& xv = nodes_[x].value;
  const Matrix& gv = nodes_[gain].value;
  const Matrix& bv = nodes_[bias].value;
  if (gv.rows() != 1 || gv.cols() != xv.cols() || bv.rows() != 1 || bv.cols() != xv.cols())
    throw std::invalid_argument("Tape::layernorm: gain/bias must be 1 x cols");
  const std::size_t n = xv.rows(), d = xv.cols();
  auto xhat = std::make_shared<Matrix>(n, d);
  auto inv_s = std::make_shared<std::vector<double>>(n);
  Matrix v(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xv.at(i, j);
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double c = xv.at(i, j) - mu;
      var += c * c;
    }
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + kEps);
    (*inv_s)[i] = is;
    for (std::size_t j = 0; j < d; ++j) {
      const double h = (xv.at(i, j) - mu) * is;
      xhat->at(i, j) = h;
      v.at(i, j) = h * gv.at(0, j) + bv.at(0, j);
    }
  }
  const NodeId id = nodes_.size();
  return push(std::move(v), [this, id, x, gain, bias, xhat, inv_s] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& gv = nodes_[gain].value;
    const std::size_t n = g.rows(), d = g.cols();
    for (std::size_t i = 0; i < n; ++i) {
      double sum_gh = 0.0, sum_gh_xhat = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double gh = g.at(i, j) * gv.at(0, j);
        sum_gh += gh;
        sum_gh_xhat += gh * xhat->at(i, j);
        nodes_[gain].grad.at(0, j) += g.at(i, j) * xhat->at(i, j);
        nodes_[bias].grad.at(0, j) += g.at(i, j);
      }
      const double inv_d = 1.0 / static_cast<double>(d);
      for (std::size_t j = 0; j < d; ++j) {
        const double gh = g.at(i, j) * gv.at(0, j);
        nodes_[x].grad.at(i, j) +=
            (*inv_s)[i] * (gh - inv_d * sum_gh - xhat->at(i, j) * inv_d * sum_gh_xhat);
      }
    }
  });
}

Tape::NodeId Tape::softmax(NodeId a) {
  const Matrix& xv = nodes_[a].value;
  Matrix v(xv.rows(), xv.cols());
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mx = xv.at(i, 0);
    for (std::size_t j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) {
      const double e = std::exp(xv.at(i, j) - mx);
      v.at(i, j) = e;
      z += e;
    }
    for (std::size_t j = 0; j < xv.cols(); ++j) v.at(i, j) /= z;
  }
  const NodeId id = nodes_.size();
  return push(std::move(v), [this, id, a] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& y = nodes_[id].value;
    for (std::size_t i = 0; i < g.rows(); ++i) {
      double dot = 0.0;
      for (std::size_t j = 0; j < g.cols(); ++j) dot += g.at(i, j) * y.at(i, j);
      for (std::size_t j = 0; j < g.cols(); ++j)
        nodes_[a].grad.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
    }
  });
}

Tape::NodeId Tape::cross_entropy(NodeId logits, std::vector<int> targets) {
  const Matrix& xv = nodes_[logits].value;
  if (targets.size() != xv.rows())
    throw std::invalid_argument("Tape::cross_entropy: one target per row required");
  auto probs = std::make_shared<Matrix>(xv.rows(), xv.cols());
  double loss = 0.0;
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    double mx = xv.at(i, 0);
    for (std::size_t j = 1; j < xv.cols(); ++j) mx = std::max(mx, xv.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < xv.cols(); ++j) z += std::exp(xv.at(i, j) - mx);
    const double logz = std::log(z) + mx;
    loss -= xv.at(i, targets[i]) - logz;
    for (std::size_t j = 0; j < xv.cols(); ++j)
      probs->at(i, j) = std::exp(xv.at(i, j) - logz);
  }
  const double n = static_cast<double>(xv.rows());
  Matrix v(1, 1, loss / n);
  const NodeId id = nodes_.size();
  return push(std::move(v), [this, id, logits, probs, targets = std::move(targets), n] {
    const double gs = nodes_[id].grad.at(0, 0) / n;
    for (std::size_t i = 0; i < probs->rows(); ++i)
      for (std::size_t j = 0; j < probs->cols(); ++j) {
        const double oh = (static_cast<int>(j) == targets[i]) ? 1.0 : 0.0;
        nodes_[logits].grad.at(i, j) += gs * (probs->at(i, j) - oh);
      }
  });
}

Tape::NodeId Tape::mse(NodeId pred, Matrix target) {
  const Matrix& pv = nodes_[pred].value;
  if (!pv.same_shape(target)) throw std::invalid_argument("Tape::mse: shape mismatch");
  auto t = std::make_shared<Matrix>(std::move(target));
  double loss = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double d = pv.data()[i] - t->data()[i];
    loss += d * d;
  }
  const double n = static_cast<double>(pv.size());
  Matrix v(1, 1, loss / n);
  const NodeId id = nodes_.size();
  return push(std::move(v), [this, id, pred, t, n] {
    const double gs = nodes_[id].grad.at(0, 0) * 2.0 / n;
    const Matrix& pv = nodes_[pred].value;
    for (std::size_t i = 0; i < pv.size(); ++i)
      nodes_[pred].grad.data()[i] += gs * (pv.data()[i] - t->data()[i]);
  });
}

Tape::NodeId Tape::embedding(Param& table, std::vector<int> ids) {
  table.ensure_state();
  const std::size_t d = table.cols;
  Matrix v(ids.size(), d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= table.rows)
      throw std::out_of_range("Tape::embedding: id out of vocabulary");
    for (std::size_t j = 0; j < d; ++j)
      v.at(i, j) = (*table.data)[static_cast<std::size_t>(ids[i]) * d + j];
  }
  const NodeId id = nodes_.size();
  return push(std::move(v), [this, id, &table, ids = std::move(ids), d] {
    const Matrix& g = nodes_[id].grad;
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t j = 0; j < d; ++j)
        table.grad[static_cast<std::size_t>(ids[i]) * d + j] += g.at(i, j);
  });
}

Tape::NodeId Tape::causal_attention(NodeId qkv, std::size_t heads, std::size_t batch,
                                    std::size_t seqlen) {
  const Matrix& xv = nodes_[qkv].value;
  if (xv.rows() != batch * seqlen || xv.cols() % (3 * heads) != 0)
    throw std::invalid_argument("Tape::causal_attention: bad qkv shape");
  const std::size_t d = xv.cols() / 3;
  const std::size_t dk = d / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
  auto probs = std::make_shared<std::vector<Matrix>>();  // per (b, h): T x T
  probs->reserve(batch * heads);
  Matrix out(batch * seqlen, d, 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t r0 = b * seqlen;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t q0 = h * dk, k0 = d + h * dk, v0 = 2 * d + h * dk;
      Matrix P(seqlen, seqlen, 0.0);
      for (std::size_t i = 0; i < seqlen; ++i) {
        double mx = -1e300;
        for (std::size_t j = 0; j <= i; ++j) {
          double s = 0.0;
          for (std::size_t c = 0; c < dk; ++c)
            s += xv.at(r0 + i, q0 + c) * xv.at(r0 + j, k0 + c);
          P.at(i, j) = s * scale;
          mx = std::max(mx, P.at(i, j));
        }
        double z = 0.0;
        for (std::size_t j = 0; j <= i; ++j) {
          P.at(i, j) = std::exp(P.at(i, j) - mx);
          z += P.at(i, j);
        }
        for (std::size_t j = 0; j <= i; ++j) P.at(i, j) /= z;
        for (std::size_t j = 0; j <= i; ++j) {
          const double p = P.at(i, j);
          for (std::size_t c = 0; c < dk; ++c)
            out.at(r0 + i, h * dk + c) += p * xv.at(r0 + j, v0 + c);
        }
      }
      probs->push_back(std::move(P));
    }
  }
  const NodeId id = nodes_.size();
  return push(std::move(out), [this, id, qkv, probs, heads, batch, seqlen] {
    const Matrix& g = nodes_[id].grad;
    const Matrix& xv = nodes_[qkv].value;
    Matrix& gx = nodes_[qkv].grad;
    const std::size_t d = xv.cols() / 3;
    const std::size_t dk = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dk));
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t r0 = b * seqlen;
      for (std::size_t h = 0; h < heads; ++h) {
        const Matrix& P = (*probs)[b * heads + h];
        const std::size_t q0 = h * dk, k0 = d + h * dk, v0 = 2 * d + h * dk;
        for (std::size_t i = 0; i < seqlen; ++i) {
          // gV and gP
          double gp_dot = 0.0;
          std::vector<double> gp(i + 1, 0.0);
          for (std::size_t j = 0; j <= i; ++j) {
            double s = 0.0;
            for (std::size_t c = 0; c < dk; ++c)
              s += g.at(r0 + i, h * dk + c) * xv.at(r0 + j, v0 + c);
            gp[j] = s;
            gp_dot += s * P.at(i, j);
            const double p = P.at(i, j);
            for (std::size_t c = 0; c < dk; ++c)
              gx.at(r0 + j, v0 + c) += p * g.at(r0 + i, h * dk + c);
          }
          // gS through softmax, then gQ / gK
          for (std::size_t j = 0; j <= i; ++j) {
            const double gs = P.at(i, j) * (gp[j] - gp_dot) * scale;
            for (std::size_t c = 0; c < dk; ++c) {
              gx.at(r0 + i, q0 + c) += gs * xv.at(r0 + j, k0 + c);
              gx.at(r0 + j, k0 + c) += gs * xv.at(r0 + i, q0 + c);
            }
          }
        }
      }
    }
  });
}

void Tape::backward(NodeId loss) {
  if (nodes_[loss].value.rows() != 1 || nodes_[loss].value.cols() != 1)
    throw std::invalid_argument("Tape::backward: loss must be scalar");
  for (Node& n : nodes_) n.grad = Matrix(n.value.rows(), n.value.cols(), 0.0);
  nodes_[loss].grad.at(0, 0) = 1.0;
  for (std::size_t i = nodes_.size(); i-- > 0;)
    if (nodes_[i].back) nodes_[i].back();
}

}  // namespace pqt
