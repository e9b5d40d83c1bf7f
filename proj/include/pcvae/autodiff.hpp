#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "pcvae/error.hpp"
#include "pcvae/tensor.hpp"

namespace pcvae {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid until Tape::clear().
struct Var {
  Tape* tape = nullptr;
  std::size_t idx = 0;
  bool valid() const { return tape != nullptr; }
};

/// Reverse-mode autodiff over tensor-valued nodes. Values are computed
/// eagerly at node creation; creation order is a topological order, so
/// backward() is a single reverse sweep. A tape is owned by one run and is
/// not shared across threads.
class Tape {
  struct Node {
    Tensor value;
    Tensor grad;                      // allocated only when grads flow here
    std::function<void(Tape&)> back;  // empty for leaves/constants
    const char* op = "";
    bool requires_grad = false;
  };

 public:
  Var constant(Tensor value) { return push(std::move(value), "const", false); }

  /// Trainable leaf. Gradients accumulate here during backward().
  Var leaf(Tensor value) { return push(std::move(value), "leaf", true); }

  const Tensor& val(Var x) const { return nodes_[x.idx].value; }

  /// Gradient of the last backward() loss w.r.t. this node.
  const Tensor& grad(Var x) const { return nodes_[x.idx].grad; }

  bool tracks_grad(Var x) const { return nodes_[x.idx].requires_grad; }

  std::size_t size() const { return nodes_.size(); }

  void clear() { nodes_.clear(); }

  /// Reverse sweep from a scalar loss. Leaves untouched by the loss keep
  /// zero gradients.
  void backward(Var loss) {
    check_mine(loss);
    if (!nodes_[loss.idx].value.is_scalar())
      throw ContractError("backward: loss must be scalar, got shape " +
                          nodes_[loss.idx].value.shape_str());
    for (Node& n : nodes_)
      if (n.requires_grad) {
        n.grad.shape = n.value.shape;
        n.grad.v.assign(n.value.size(), 0.0);
      }
    if (!nodes_[loss.idx].requires_grad) return;
    nodes_[loss.idx].grad.v[0] = 1.0;
    for (std::size_t i = loss.idx + 1; i-- > 0;) {
      Node& n = nodes_[i];
      if (n.requires_grad && n.back) n.back(*this);
    }
  }

  // ----- elementwise arithmetic -------------------------------------------

  Var add(Var a, Var b) {
    auto [ta, tb] = pair_vals(a, b, "add");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] += tb.v[i];
    return binary(std::move(out), "add", a, b, [](Tape& t, Var a, Var b, Var o) {
      const Tensor& g = t.gref(o);
      t.accumulate(a, [&](std::size_t i) { return g.v[i]; });
      t.accumulate(b, [&](std::size_t i) { return g.v[i]; });
    });
  }

  Var sub(Var a, Var b) {
    auto [ta, tb] = pair_vals(a, b, "sub");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] -= tb.v[i];
    return binary(std::move(out), "sub", a, b, [](Tape& t, Var a, Var b, Var o) {
      const Tensor& g = t.gref(o);
      t.accumulate(a, [&](std::size_t i) { return g.v[i]; });
      t.accumulate(b, [&](std::size_t i) { return -g.v[i]; });
    });
  }

  Var mul(Var a, Var b) {
    auto [ta, tb] = pair_vals(a, b, "mul");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
    return binary(std::move(out), "mul", a, b, [](Tape& t, Var a, Var b, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      t.accumulate(a, [&](std::size_t i) { return g.v[i] * vb.v[i]; });
      t.accumulate(b, [&](std::size_t i) { return g.v[i] * va.v[i]; });
    });
  }

  Var div(Var a, Var b) {
    auto [ta, tb] = pair_vals(a, b, "div");
    Tensor out = ta;
    for (std::size_t i = 0; i < out.size(); ++i) out.v[i] /= tb.v[i];
    return binary(std::move(out), "div", a, b, [](Tape& t, Var a, Var b, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& va = t.val(a);
      const Tensor& vb = t.val(b);
      t.accumulate(a, [&](std::size_t i) { return g.v[i] / vb.v[i]; });
      t.accumulate(b, [&](std::size_t i) {
        return -g.v[i] * va.v[i] / (vb.v[i] * vb.v[i]);
      });
    });
  }

  /// k*x + c, elementwise.
  Var affine(Var x, double k, double c) {
    Tensor out = val(x);
    for (double& e : out.v) e = k * e + c;
    return unary(std::move(out), "affine", x, [k](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      t.accumulate(x, [&](std::size_t i) { return k * g.v[i]; });
    });
  }

  Var neg(Var x) { return affine(x, -1.0, 0.0); }

  // ----- transcendental / nonlinearities ----------------------------------

  Var exp(Var x) {
    Tensor out = val(x);
    for (double& e : out.v) e = std::exp(e);
    return unary(std::move(out), "exp", x, [](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& vo = t.val(o);
      t.accumulate(x, [&](std::size_t i) { return g.v[i] * vo.v[i]; });
    });
  }

  Var log(Var x) {
    Tensor out = val(x);
    for (double& e : out.v) e = std::log(e);
    return unary(std::move(out), "log", x, [](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& vx = t.val(x);
      t.accumulate(x, [&](std::size_t i) { return g.v[i] / vx.v[i]; });
    });
  }

  Var sigmoid(Var x) {
    Tensor out = val(x);
    for (double& e : out.v) e = sigmoid_scalar(e);
    return unary(std::move(out), "sigmoid", x, [](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& s = t.val(o);
      t.accumulate(x, [&](std::size_t i) {
        return g.v[i] * s.v[i] * (1.0 - s.v[i]);
      });
    });
  }

  Var relu(Var x) {
    Tensor out = val(x);
    for (double& e : out.v) e = e > 0.0 ? e : 0.0;
    return unary(std::move(out), "relu", x, [](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& vx = t.val(x);
      t.accumulate(x, [&](std::size_t i) {
        return vx.v[i] > 0.0 ? g.v[i] : 0.0;
      });
    });
  }

  Var elu(Var x) {
    Tensor out = val(x);
    for (double& e : out.v) e = e > 0.0 ? e : std::expm1(e);
    return unary(std::move(out), "elu", x, [](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& vx = t.val(x);
      const Tensor& vo = t.val(o);
      t.accumulate(x, [&](std::size_t i) {
        return vx.v[i] > 0.0 ? g.v[i] : g.v[i] * (vo.v[i] + 1.0);
      });
    });
  }

  /// Hard clamp; gradient passes only where the input is strictly inside.
  Var clamp(Var x, double lo, double hi) {
    Tensor out = val(x);
    for (double& e : out.v) e = e < lo ? lo : (e > hi ? hi : e);
    return unary(std::move(out), "clamp", x, [lo, hi](Tape& t, Var x, Var o) {
      const Tensor& g = t.gref(o);
      const Tensor& vx = t.val(x);
      t.accumulate(x, [&](std::size_t i) {
        return (vx.v[i] > lo && vx.v[i] < hi) ? g.v[i] : 0.0;
      });
    });
  }

  // ----- reductions / reshaping -------------------------------------------

  Var sum(Var x) {
    double s = 0.0;
    for (double e : val(x).v) s += e;
    return unary(Tensor::scalar(s), "sum", x, [](Tape& t, Var x, Var o) {
      double g = t.gref(o).v[0];
      t.accumulate(x, [&](std::size_t) { return g; });
    });
  }

  Var concat(Var a, Var b) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    Tensor out({ta.size() + tb.size()});
    for (std::size_t i = 0; i < ta.size(); ++i) out.v[i] = ta.v[i];
    for (std::size_t i = 0; i < tb.size(); ++i) out.v[ta.size() + i] = tb.v[i];
    std::size_t na = ta.size();
    return binary(std::move(out), "concat", a, b,
                  [na](Tape& t, Var a, Var b, Var o) {
                    const Tensor& g = t.gref(o);
                    t.accumulate(a, [&](std::size_t i) { return g.v[i]; });
                    t.accumulate(b, [&](std::size_t i) { return g.v[na + i]; });
                  });
  }

  Var gather(Var x, std::vector<std::size_t> idx) {
    const Tensor& tx = val(x);
    Tensor out({idx.size()});
    for (std::size_t i = 0; i < idx.size(); ++i) {
      if (idx[i] >= tx.size())
        throw DimensionError("gather: index out of range");
      out.v[i] = tx.v[idx[i]];
    }
    return unary(std::move(out), "gather", x,
                 [idx = std::move(idx)](Tape& t, Var x, Var o) {
                   const Tensor& g = t.gref(o);
                   Tensor& gx = t.gmut(x);
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     gx.v[idx[i]] += g.v[i];
                 });
  }

  /// Inverse of two complementary gathers: place a at idx_a and b at idx_b
  /// inside a vector of length n.
  Var scatter_pair(Var a, std::vector<std::size_t> idx_a, Var b,
                   std::vector<std::size_t> idx_b, std::size_t n) {
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    if (ta.size() != idx_a.size() || tb.size() != idx_b.size())
      throw DimensionError("scatter_pair: index/value count mismatch");
    Tensor out({n});
    for (std::size_t i = 0; i < idx_a.size(); ++i) out.v[idx_a[i]] = ta.v[i];
    for (std::size_t i = 0; i < idx_b.size(); ++i) out.v[idx_b[i]] = tb.v[i];
    return binary(std::move(out), "scatter_pair", a, b,
                  [ia = std::move(idx_a), ib = std::move(idx_b)](
                      Tape& t, Var a, Var b, Var o) {
                    const Tensor& g = t.gref(o);
                    t.accumulate(a, [&](std::size_t i) { return g.v[ia[i]]; });
                    t.accumulate(b, [&](std::size_t i) { return g.v[ib[i]]; });
                  });
  }

  // ----- linear algebra -----------------------------------------------------

  /// y = W x for W of shape [m,n] and x of shape [n].
  Var matvec(Var w, Var x) {
    const Tensor& tw = val(w);
    const Tensor& tx = val(x);
    if (tw.rank() != 2 || tx.rank() != 1 || tw.cols() != tx.size())
      throw DimensionError("matvec: " + tw.shape_str() + " x " +
                           tx.shape_str());
    std::size_t m = tw.rows(), n = tw.cols();
    Tensor out({m});
    for (std::size_t i = 0; i < m; ++i) {
      const double* row = tw.v.data() + i * n;
      double s = 0.0;
      for (std::size_t j = 0; j < n; ++j) s += row[j] * tx.v[j];
      out.v[i] = s;
    }
    return binary(std::move(out), "matvec", w, x,
                  [m, n](Tape& t, Var w, Var x, Var o) {
                    const Tensor& g = t.gref(o);
                    const Tensor& tw = t.val(w);
                    const Tensor& tx = t.val(x);
                    if (t.tracks_grad(w)) {
                      Tensor& gw = t.gmut(w);
                      for (std::size_t i = 0; i < m; ++i) {
                        double gi = g.v[i];
                        double* grow = gw.v.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j)
                          grow[j] += gi * tx.v[j];
                      }
                    }
                    if (t.tracks_grad(x)) {
                      Tensor& gx = t.gmut(x);
                      for (std::size_t i = 0; i < m; ++i) {
                        double gi = g.v[i];
                        const double* row = tw.v.data() + i * n;
                        for (std::size_t j = 0; j < n; ++j)
                          gx.v[j] += gi * row[j];
                      }
                    }
                  });
  }

  /// Softmax over contiguous groups of length group for a vector of length
  /// groups*group (probabilities per coupling dimension).
  Var softmax_groups(Var x, std::size_t group) {
    const Tensor& tx = val(x);
    if (group == 0 || tx.size() % group != 0)
      throw DimensionError("softmax_groups: bad group length");
    Tensor out = tx;
    for (std::size_t base = 0; base < tx.size(); base += group) {
      double mx = out.v[base];
      for (std::size_t k = 1; k < group; ++k)
        mx = std::max(mx, out.v[base + k]);
      double z = 0.0;
      for (std::size_t k = 0; k < group; ++k) {
        out.v[base + k] = std::exp(out.v[base + k] - mx);
        z += out.v[base + k];
      }
      for (std::size_t k = 0; k < group; ++k) out.v[base + k] /= z;
    }
    return unary(std::move(out), "softmax", x,
                 [group](Tape& t, Var x, Var o) {
                   const Tensor& g = t.gref(o);
                   const Tensor& s = t.val(o);
                   Tensor& gx = t.gmut(x);
                   for (std::size_t base = 0; base < s.size(); base += group) {
                     double dot = 0.0;
                     for (std::size_t k = 0; k < group; ++k)
                       dot += g.v[base + k] * s.v[base + k];
                     for (std::size_t k = 0; k < group; ++k)
                       gx.v[base + k] +=
                           s.v[base + k] * (g.v[base + k] - dot);
                   }
                 });
  }

  /// Custom node with a caller-supplied backward. The closure receives the
  /// tape and the output var; inputs must be captured by the caller.
  Var custom(Tensor value, const char* op, std::vector<Var> inputs,
             std::function<void(Tape&, Var)> back) {
    bool needs = false;
    for (Var in : inputs) {
      check_mine(in);
      needs = needs || nodes_[in.idx].requires_grad;
    }
    Var out = push(std::move(value), op, needs);
    if (needs)
      nodes_[out.idx].back = [out, back = std::move(back)](Tape& t) {
        back(t, out);
      };
    return out;
  }

  static double sigmoid_scalar(double x) {
    return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                    : std::exp(x) / (1.0 + std::exp(x));
  }

  /// Gradient accumulation helper for custom backward closures; skips nodes
  /// that do not track gradients.
  template <typename F>
  void accumulate(Var x, F&& per_index) {
    Node& n = nodes_[x.idx];
    if (!n.requires_grad) return;
    for (std::size_t i = 0; i < n.grad.size(); ++i) n.grad.v[i] += per_index(i);
  }

  Tensor& gmut(Var x) { return nodes_[x.idx].grad; }
  const Tensor& gref(Var x) const { return nodes_[x.idx].grad; }

 private:
  Var push(Tensor value, const char* op, bool requires_grad) {
    Node n;
    n.value = std::move(value);
    n.op = op;
    n.requires_grad = requires_grad;
    nodes_.push_back(std::move(n));
    return Var{this, nodes_.size() - 1};
  }

  void check_mine(Var x) const {
    if (x.tape != this) throw ContractError("var belongs to another tape");
  }

  std::pair<const Tensor&, const Tensor&> pair_vals(Var a, Var b,
                                                    const char* op) {
    check_mine(a);
    check_mine(b);
    const Tensor& ta = val(a);
    const Tensor& tb = val(b);
    require_same_shape(ta, tb, op);
    return {ta, tb};
  }

  template <typename F>
  Var unary(Tensor out, const char* op, Var x, F back) {
    check_mine(x);
    bool needs = nodes_[x.idx].requires_grad;
    Var o = push(std::move(out), op, needs);
    if (needs)
      nodes_[o.idx].back = [x, o, back = std::move(back)](Tape& t) {
        back(t, x, o);
      };
    return o;
  }

  template <typename F>
  Var binary(Tensor out, const char* op, Var a, Var b, F back) {
    check_mine(a);
    check_mine(b);
    bool needs = nodes_[a.idx].requires_grad || nodes_[b.idx].requires_grad;
    Var o = push(std::move(out), op, needs);
    if (needs)
      nodes_[o.idx].back = [a, b, o, back = std::move(back)](Tape& t) {
        back(t, a, b, o);
      };
    return o;
  }

  std::vector<Node> nodes_;
};

inline Var operator+(Var a, Var b) { return a.tape->add(a, b); }
inline Var operator-(Var a, Var b) { return a.tape->sub(a, b); }
inline Var operator*(Var a, Var b) { return a.tape->mul(a, b); }
inline Var operator/(Var a, Var b) { return a.tape->div(a, b); }
inline Var operator-(Var a) { return a.tape->neg(a); }

}  // namespace pcvae
