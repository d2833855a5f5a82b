#include "cfd/autograd.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

namespace cfd::ag {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

ConstMatMap mat(const Tensor& t) {
  return ConstMatMap(t.data(), t.dim(0), t.dim(1));
}

MatMap mat(Tensor& t) {
  return MatMap(t.data(), t.dim(0), t.dim(1));
}

bool any_requires(const std::vector<NodePtr>& parents) {
  for (const auto& p : parents) {
    if (p->requires_grad) return true;
  }
  return false;
}

NodePtr make(Tensor value, std::vector<NodePtr> parents, std::function<void(Node&)> backprop) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->parents = std::move(parents);
  node->requires_grad = any_requires(node->parents);
  if (node->requires_grad) node->backprop = std::move(backprop);
  return node;
}

}  // namespace

NodePtr constant(Tensor value) { return leaf(std::move(value), false); }

NodePtr leaf(Tensor value, bool requires_grad, std::string name) {
  auto node = std::make_shared<Node>();
  node->value = std::move(value);
  node->requires_grad = requires_grad;
  node->name = std::move(name);
  return node;
}

void backward(const NodePtr& root) {
  check(root->value.size() == 1, "backward expects a scalar root");

  // Iterative post-order DFS; parents precede the node in `order`.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, size_t>> stack{{root.get(), 0}};
  visited.insert(root.get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->grad_ref()[0] = 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* node = *it;
    if (node->backprop && !node->grad.empty()) node->backprop(*node);
  }
}

// ---------------------------------------------------------------------------
// elementwise / broadcast
// ---------------------------------------------------------------------------

NodePtr add(NodePtr a, NodePtr b) {
  check(a->value.same_shape(b->value), "add: shape mismatch " + a->value.shape_str() +
                                           " vs " + b->value.shape_str());
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] += b->value[i];
  return make(std::move(out), {a, b}, [](Node& self) {
    const Tensor& g = self.grad;
    for (int s = 0; s < 2; ++s) {
      auto& p = self.parents[s];
      if (!p->requires_grad) continue;
      Tensor& pg = p->grad_ref();
      for (int64_t i = 0; i < g.size(); ++i) pg[i] += g[i];
    }
  });
}

NodePtr add_row(NodePtr m, NodePtr row_vec) {
  check(m->value.rank() == 2 && row_vec->value.rank() == 2 && row_vec->value.dim(0) == 1 &&
            row_vec->value.dim(1) == m->value.dim(1),
        "add_row: incompatible shapes");
  const int rows = m->value.dim(0), cols = m->value.dim(1);
  Tensor out = m->value;
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < cols; ++j) out.at(i, j) += row_vec->value.at(0, j);
  return make(std::move(out), {m, row_vec}, [rows, cols](Node& self) {
    const Tensor& g = self.grad;
    if (self.parents[0]->requires_grad) {
      Tensor& mg = self.parents[0]->grad_ref();
      for (int64_t i = 0; i < g.size(); ++i) mg[i] += g[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& vg = self.parents[1]->grad_ref();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) vg.at(0, j) += g.at(i, j);
    }
  });
}

NodePtr scale(NodePtr a, double s) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= s;
  return make(std::move(out), {a}, [s](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int64_t i = 0; i < self.grad.size(); ++i) pg[i] += s * self.grad[i];
  });
}

NodePtr relu(NodePtr a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = out[i] > 0.0 ? out[i] : 0.0;
  return make(std::move(out), {a}, [](Node& self) {
    const Tensor& x = self.parents[0]->value;
    Tensor& pg = self.parents[0]->grad_ref();
    for (int64_t i = 0; i < x.size(); ++i) {
      if (x[i] > 0.0) pg[i] += self.grad[i];
    }
  });
}

NodePtr sigmoid(NodePtr a) {
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-out[i]));
  Tensor y = out;
  return make(std::move(out), {a}, [y = std::move(y)](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int64_t i = 0; i < y.size(); ++i) pg[i] += self.grad[i] * y[i] * (1.0 - y[i]);
  });
}

NodePtr dropout(NodePtr a, double rate, Rng& rng) {
  if (rate <= 0.0) return a;
  check(rate < 1.0, "dropout rate must be < 1");
  const double keep_scale = 1.0 / (1.0 - rate);
  Tensor mask(a->value.dims());
  for (int64_t i = 0; i < mask.size(); ++i) {
    mask[i] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  Tensor out = a->value;
  for (int64_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  return make(std::move(out), {a}, [mask = std::move(mask)](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int64_t i = 0; i < mask.size(); ++i) pg[i] += self.grad[i] * mask[i];
  });
}

// ---------------------------------------------------------------------------
// linear algebra
// ---------------------------------------------------------------------------

NodePtr matmul(NodePtr a, NodePtr b) {
  check(a->value.rank() == 2 && b->value.rank() == 2 && a->value.dim(1) == b->value.dim(0),
        "matmul: incompatible shapes " + a->value.shape_str() + " * " + b->value.shape_str());
  Tensor out({a->value.dim(0), b->value.dim(1)});
  mat(out).noalias() = mat(a->value) * mat(b->value);
  return make(std::move(out), {a, b}, [](Node& self) {
    const Tensor& g = self.grad;
    const Tensor& av = self.parents[0]->value;
    const Tensor& bv = self.parents[1]->value;
    if (self.parents[0]->requires_grad) {
      mat(self.parents[0]->grad_ref()).noalias() += mat(g) * mat(bv).transpose();
    }
    if (self.parents[1]->requires_grad) {
      mat(self.parents[1]->grad_ref()).noalias() += mat(av).transpose() * mat(g);
    }
  });
}

NodePtr transpose(NodePtr a) {
  check(a->value.rank() == 2, "transpose expects rank-2");
  Tensor out({a->value.dim(1), a->value.dim(0)});
  mat(out) = mat(a->value).transpose();
  return make(std::move(out), {a}, [](Node& self) {
    mat(self.parents[0]->grad_ref()).noalias() += mat(self.grad).transpose();
  });
}

NodePtr slice_cols(NodePtr a, int start, int count) {
  check(a->value.rank() == 2 && start >= 0 && count > 0 && start + count <= a->value.dim(1),
        "slice_cols: range out of bounds");
  const int rows = a->value.dim(0);
  Tensor out({rows, count});
  for (int i = 0; i < rows; ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = a->value.at(i, start + j);
  return make(std::move(out), {a}, [start, count, rows](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < count; ++j) pg.at(i, start + j) += self.grad.at(i, j);
  });
}

NodePtr concat_cols(NodePtr a, NodePtr b) {
  check(a->value.rank() == 2 && b->value.rank() == 2 && a->value.dim(0) == b->value.dim(0),
        "concat_cols: row mismatch");
  const int rows = a->value.dim(0), na = a->value.dim(1), nb = b->value.dim(1);
  Tensor out({rows, na + nb});
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < na; ++j) out.at(i, j) = a->value.at(i, j);
    for (int j = 0; j < nb; ++j) out.at(i, na + j) = b->value.at(i, j);
  }
  return make(std::move(out), {a, b}, [rows, na, nb](Node& self) {
    if (self.parents[0]->requires_grad) {
      Tensor& ga = self.parents[0]->grad_ref();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < na; ++j) ga.at(i, j) += self.grad.at(i, j);
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gb = self.parents[1]->grad_ref();
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < nb; ++j) gb.at(i, j) += self.grad.at(i, na + j);
    }
  });
}

NodePtr gather_rows(NodePtr table, const std::vector<int>& ids) {
  check(table->value.rank() == 2, "gather_rows expects rank-2 table");
  const int width = table->value.dim(1);
  const int rows = static_cast<int>(ids.size());
  Tensor out({rows, width});
  for (int i = 0; i < rows; ++i) {
    check(ids[i] >= 0 && ids[i] < table->value.dim(0), "gather_rows: id out of range");
    for (int j = 0; j < width; ++j) out.at(i, j) = table->value.at(ids[i], j);
  }
  return make(std::move(out), {table}, [ids, width, rows](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int i = 0; i < rows; ++i)
      for (int j = 0; j < width; ++j) pg.at(ids[i], j) += self.grad.at(i, j);
  });
}

NodePtr mean_rows(NodePtr a, int row_count) {
  check(a->value.rank() == 2, "mean_rows expects rank-2");
  check(row_count >= 1 && row_count <= a->value.dim(0),
        "mean_rows: row count out of range");
  const int cols = a->value.dim(1);
  Tensor out({1, cols});
  for (int i = 0; i < row_count; ++i)
    for (int j = 0; j < cols; ++j) out.at(0, j) += a->value.at(i, j);
  for (int j = 0; j < cols; ++j) out.at(0, j) /= row_count;
  return make(std::move(out), {a}, [row_count, cols](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    const double inv = 1.0 / row_count;
    for (int i = 0; i < row_count; ++i)
      for (int j = 0; j < cols; ++j) pg.at(i, j) += inv * self.grad.at(0, j);
  });
}

NodePtr row_softmax_masked(NodePtr a, int valid_cols) {
  check(a->value.rank() == 2, "row_softmax_masked expects rank-2");
  check(valid_cols >= 1 && valid_cols <= a->value.dim(1),
        "row_softmax_masked: invalid column count");
  const int rows = a->value.dim(0), cols = a->value.dim(1);
  Tensor out({rows, cols});
  for (int i = 0; i < rows; ++i) {
    double mx = a->value.at(i, 0);
    for (int j = 1; j < valid_cols; ++j) mx = std::max(mx, a->value.at(i, j));
    double denom = 0.0;
    for (int j = 0; j < valid_cols; ++j) {
      const double e = std::exp(a->value.at(i, j) - mx);
      out.at(i, j) = e;
      denom += e;
    }
    for (int j = 0; j < valid_cols; ++j) out.at(i, j) /= denom;
  }
  Tensor y = out;
  return make(std::move(out), {a}, [y = std::move(y), rows, valid_cols](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int i = 0; i < rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < valid_cols; ++j) dot += self.grad.at(i, j) * y.at(i, j);
      for (int j = 0; j < valid_cols; ++j) {
        pg.at(i, j) += y.at(i, j) * (self.grad.at(i, j) - dot);
      }
    }
  });
}

NodePtr layer_norm_rows(NodePtr x, NodePtr gain, NodePtr bias, double eps) {
  check(x->value.rank() == 2 && gain->value.rank() == 1 && bias->value.rank() == 1,
        "layer_norm_rows: bad ranks");
  const int rows = x->value.dim(0), cols = x->value.dim(1);
  check(gain->value.dim(0) == cols && bias->value.dim(0) == cols,
        "layer_norm_rows: gain/bias width mismatch");
  Tensor out({rows, cols});
  Tensor xhat({rows, cols});
  std::vector<double> inv_std(static_cast<size_t>(rows));
  for (int i = 0; i < rows; ++i) {
    double mean = 0.0;
    for (int j = 0; j < cols; ++j) mean += x->value.at(i, j);
    mean /= cols;
    double var = 0.0;
    for (int j = 0; j < cols; ++j) {
      const double d = x->value.at(i, j) - mean;
      var += d * d;
    }
    var /= cols;
    const double inv = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(i)] = inv;
    for (int j = 0; j < cols; ++j) {
      const double h = (x->value.at(i, j) - mean) * inv;
      xhat.at(i, j) = h;
      out.at(i, j) = gain->value[j] * h + bias->value[j];
    }
  }
  return make(std::move(out), {x, gain, bias},
              [xhat = std::move(xhat), inv_std = std::move(inv_std), rows, cols](Node& self) {
                const Tensor& g = self.grad;
                const Tensor& gainv = self.parents[1]->value;
                if (self.parents[1]->requires_grad) {
                  Tensor& gg = self.parents[1]->grad_ref();
                  for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) gg[j] += g.at(i, j) * xhat.at(i, j);
                }
                if (self.parents[2]->requires_grad) {
                  Tensor& gb = self.parents[2]->grad_ref();
                  for (int i = 0; i < rows; ++i)
                    for (int j = 0; j < cols; ++j) gb[j] += g.at(i, j);
                }
                if (self.parents[0]->requires_grad) {
                  Tensor& gx = self.parents[0]->grad_ref();
                  for (int i = 0; i < rows; ++i) {
                    double mean_dh = 0.0, mean_dh_xhat = 0.0;
                    for (int j = 0; j < cols; ++j) {
                      const double dh = g.at(i, j) * gainv[j];
                      mean_dh += dh;
                      mean_dh_xhat += dh * xhat.at(i, j);
                    }
                    mean_dh /= cols;
                    mean_dh_xhat /= cols;
                    const double inv = inv_std[static_cast<size_t>(i)];
                    for (int j = 0; j < cols; ++j) {
                      const double dh = g.at(i, j) * gainv[j];
                      gx.at(i, j) += inv * (dh - mean_dh - xhat.at(i, j) * mean_dh_xhat);
                    }
                  }
                }
              });
}

// ---------------------------------------------------------------------------
// rank-3 / conv path
// ---------------------------------------------------------------------------

NodePtr stack_mats(const std::vector<NodePtr>& mats) {
  check(!mats.empty(), "stack_mats: empty input");
  const int rows = mats[0]->value.dim(0), cols = mats[0]->value.dim(1);
  for (const auto& m : mats) {
    check(m->value.rank() == 2 && m->value.dim(0) == rows && m->value.dim(1) == cols,
          "stack_mats: shape mismatch");
  }
  const int n = static_cast<int>(mats.size());
  Tensor out({n, rows, cols});
  const int64_t plane = static_cast<int64_t>(rows) * cols;
  for (int h = 0; h < n; ++h) {
    std::copy_n(mats[h]->value.data(), plane, out.data() + h * plane);
  }
  return make(std::move(out), mats, [n, plane](Node& self) {
    for (int h = 0; h < n; ++h) {
      auto& p = self.parents[static_cast<size_t>(h)];
      if (!p->requires_grad) continue;
      Tensor& pg = p->grad_ref();
      const double* src = self.grad.data() + h * plane;
      for (int64_t i = 0; i < plane; ++i) pg[i] += src[i];
    }
  });
}

NodePtr concat_stacks(NodePtr a, NodePtr b) {
  check(a->value.rank() == 3 && b->value.rank() == 3 && a->value.dim(1) == b->value.dim(1) &&
            a->value.dim(2) == b->value.dim(2),
        "concat_stacks: shape mismatch");
  const int ha = a->value.dim(0), hb = b->value.dim(0);
  Tensor out({ha + hb, a->value.dim(1), a->value.dim(2)});
  std::copy_n(a->value.data(), a->value.size(), out.data());
  std::copy_n(b->value.data(), b->value.size(), out.data() + a->value.size());
  return make(std::move(out), {a, b}, [](Node& self) {
    const int64_t na = self.parents[0]->value.size();
    if (self.parents[0]->requires_grad) {
      Tensor& ga = self.parents[0]->grad_ref();
      for (int64_t i = 0; i < na; ++i) ga[i] += self.grad[i];
    }
    if (self.parents[1]->requires_grad) {
      Tensor& gb = self.parents[1]->grad_ref();
      for (int64_t i = 0; i < gb.size(); ++i) gb[i] += self.grad[na + i];
    }
  });
}

NodePtr flatten(NodePtr a) {
  Tensor out({1, static_cast<int>(a->value.size())});
  std::copy_n(a->value.data(), a->value.size(), out.data());
  return make(std::move(out), {a}, [](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int64_t i = 0; i < pg.size(); ++i) pg[i] += self.grad[i];
  });
}

NodePtr pad_grid(NodePtr a, int grid) {
  check(a->value.rank() == 3, "pad_grid expects rank-3");
  const int c = a->value.dim(0), r = a->value.dim(1), w = a->value.dim(2);
  if (r == grid && w == grid) return a;
  const int cr = std::min(r, grid), cw = std::min(w, grid);
  Tensor out({c, grid, grid});
  for (int ch = 0; ch < c; ++ch)
    for (int i = 0; i < cr; ++i)
      for (int j = 0; j < cw; ++j) out.at(ch, i, j) = a->value.at(ch, i, j);
  return make(std::move(out), {a}, [c, cr, cw](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int ch = 0; ch < c; ++ch)
      for (int i = 0; i < cr; ++i)
        for (int j = 0; j < cw; ++j) pg.at(ch, i, j) += self.grad.at(ch, i, j);
  });
}

namespace {

struct ConvGeom {
  int out_h, out_w, pad_top, pad_left;
};

ConvGeom same_geometry(int in_h, int in_w, int kh, int kw, int stride) {
  ConvGeom g;
  g.out_h = (in_h + stride - 1) / stride;
  g.out_w = (in_w + stride - 1) / stride;
  const int pad_h = std::max((g.out_h - 1) * stride + kh - in_h, 0);
  const int pad_w = std::max((g.out_w - 1) * stride + kw - in_w, 0);
  g.pad_top = pad_h / 2;
  g.pad_left = pad_w / 2;
  return g;
}

}  // namespace

NodePtr conv2d_same(NodePtr x, NodePtr weight, NodePtr bias, int stride) {
  check(x->value.rank() == 3 && weight->value.rank() == 4 && bias->value.rank() == 1,
        "conv2d_same: bad ranks");
  const int c_in = x->value.dim(0), in_h = x->value.dim(1), in_w = x->value.dim(2);
  const int c_out = weight->value.dim(0), kh = weight->value.dim(2), kw = weight->value.dim(3);
  check(weight->value.dim(1) == c_in, "conv2d_same: channel mismatch");
  check(bias->value.dim(0) == c_out, "conv2d_same: bias width mismatch");
  const ConvGeom geom = same_geometry(in_h, in_w, kh, kw, stride);

  Tensor out({c_out, geom.out_h, geom.out_w});
  for (int f = 0; f < c_out; ++f) {
    for (int oh = 0; oh < geom.out_h; ++oh) {
      for (int ow = 0; ow < geom.out_w; ++ow) {
        double acc = bias->value[f];
        for (int c = 0; c < c_in; ++c) {
          for (int i = 0; i < kh; ++i) {
            const int ih = oh * stride - geom.pad_top + i;
            if (ih < 0 || ih >= in_h) continue;
            for (int j = 0; j < kw; ++j) {
              const int iw = ow * stride - geom.pad_left + j;
              if (iw < 0 || iw >= in_w) continue;
              acc += x->value.at(c, ih, iw) * weight->value.at(f, c, i, j);
            }
          }
        }
        out.at(f, oh, ow) = acc;
      }
    }
  }
  return make(std::move(out), {x, weight, bias},
              [c_in, in_h, in_w, c_out, kh, kw, stride, geom](Node& self) {
                const Tensor& g = self.grad;
                const Tensor& xv = self.parents[0]->value;
                const Tensor& wv = self.parents[1]->value;
                const bool need_x = self.parents[0]->requires_grad;
                const bool need_w = self.parents[1]->requires_grad;
                const bool need_b = self.parents[2]->requires_grad;
                Tensor* gx = need_x ? &self.parents[0]->grad_ref() : nullptr;
                Tensor* gw = need_w ? &self.parents[1]->grad_ref() : nullptr;
                Tensor* gb = need_b ? &self.parents[2]->grad_ref() : nullptr;
                for (int f = 0; f < c_out; ++f) {
                  for (int oh = 0; oh < geom.out_h; ++oh) {
                    for (int ow = 0; ow < geom.out_w; ++ow) {
                      const double go = g.at(f, oh, ow);
                      if (gb) (*gb)[f] += go;
                      for (int c = 0; c < c_in; ++c) {
                        for (int i = 0; i < kh; ++i) {
                          const int ih = oh * stride - geom.pad_top + i;
                          if (ih < 0 || ih >= in_h) continue;
                          for (int j = 0; j < kw; ++j) {
                            const int iw = ow * stride - geom.pad_left + j;
                            if (iw < 0 || iw >= in_w) continue;
                            if (gw) gw->at(f, c, i, j) += go * xv.at(c, ih, iw);
                            if (gx) gx->at(c, ih, iw) += go * wv.at(f, c, i, j);
                          }
                        }
                      }
                    }
                  }
                }
              });
}

NodePtr batch_norm(const std::vector<NodePtr>& xs, NodePtr gain, NodePtr bias,
                   Tensor& running_mean, Tensor& running_var, bool training,
                   double momentum, double eps) {
  check(!xs.empty(), "batch_norm: empty batch");
  const int n = static_cast<int>(xs.size());
  const int c = xs[0]->value.dim(0), h = xs[0]->value.dim(1), w = xs[0]->value.dim(2);
  for (const auto& x : xs) {
    check(x->value.rank() == 3 && x->value.dim(0) == c && x->value.dim(1) == h &&
              x->value.dim(2) == w,
          "batch_norm: shape mismatch across batch");
  }
  check(gain->value.dim(0) == c && bias->value.dim(0) == c &&
            running_mean.dim(0) == c && running_var.dim(0) == c,
        "batch_norm: channel width mismatch");

  const bool use_batch_stats = training && n >= 2;
  const int64_t plane = static_cast<int64_t>(h) * w;
  const int64_t count = static_cast<int64_t>(n) * plane;

  std::vector<double> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  if (use_batch_stats) {
    for (int ch = 0; ch < c; ++ch) {
      double m = 0.0;
      for (int s = 0; s < n; ++s) {
        const double* base = xs[static_cast<size_t>(s)]->value.data() + ch * plane;
        for (int64_t i = 0; i < plane; ++i) m += base[i];
      }
      m /= static_cast<double>(count);
      double v = 0.0;
      for (int s = 0; s < n; ++s) {
        const double* base = xs[static_cast<size_t>(s)]->value.data() + ch * plane;
        for (int64_t i = 0; i < plane; ++i) {
          const double d = base[i] - m;
          v += d * d;
        }
      }
      v /= static_cast<double>(count);
      mean[static_cast<size_t>(ch)] = m;
      var[static_cast<size_t>(ch)] = v;
      // Running buffers track batch statistics (unbiased variance).
      const double unbiased =
          count > 1 ? v * static_cast<double>(count) / static_cast<double>(count - 1) : v;
      running_mean[ch] = (1.0 - momentum) * running_mean[ch] + momentum * m;
      running_var[ch] = (1.0 - momentum) * running_var[ch] + momentum * unbiased;
    }
  } else {
    for (int ch = 0; ch < c; ++ch) {
      mean[static_cast<size_t>(ch)] = running_mean[ch];
      var[static_cast<size_t>(ch)] = running_var[ch];
    }
  }

  Tensor out({n, c, h, w});
  Tensor xhat({n, c, h, w});
  std::vector<double> inv_std(static_cast<size_t>(c));
  for (int ch = 0; ch < c; ++ch) {
    inv_std[static_cast<size_t>(ch)] = 1.0 / std::sqrt(var[static_cast<size_t>(ch)] + eps);
  }
  for (int s = 0; s < n; ++s) {
    for (int ch = 0; ch < c; ++ch) {
      const double* base = xs[static_cast<size_t>(s)]->value.data() + ch * plane;
      const double m = mean[static_cast<size_t>(ch)];
      const double inv = inv_std[static_cast<size_t>(ch)];
      const double gv = gain->value[ch], bv = bias->value[ch];
      double* xh = xhat.data() + (static_cast<int64_t>(s) * c + ch) * plane;
      double* o = out.data() + (static_cast<int64_t>(s) * c + ch) * plane;
      for (int64_t i = 0; i < plane; ++i) {
        xh[i] = (base[i] - m) * inv;
        o[i] = gv * xh[i] + bv;
      }
    }
  }

  std::vector<NodePtr> parents = xs;
  parents.push_back(gain);
  parents.push_back(bias);
  return make(std::move(out), std::move(parents),
              [xhat = std::move(xhat), inv_std = std::move(inv_std), use_batch_stats, n, c,
               plane, count](Node& self) {
                const Tensor& g = self.grad;
                NodePtr gain_p = self.parents[static_cast<size_t>(n)];
                NodePtr bias_p = self.parents[static_cast<size_t>(n) + 1];
                for (int ch = 0; ch < c; ++ch) {
                  // Channel-wise reductions over the whole batch.
                  double sum_dy = 0.0, sum_dy_xhat = 0.0;
                  for (int s = 0; s < n; ++s) {
                    const int64_t off = (static_cast<int64_t>(s) * c + ch) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                      sum_dy += g[off + i];
                      sum_dy_xhat += g[off + i] * xhat[off + i];
                    }
                  }
                  if (gain_p->requires_grad) gain_p->grad_ref()[ch] += sum_dy_xhat;
                  if (bias_p->requires_grad) bias_p->grad_ref()[ch] += sum_dy;
                  const double gv = gain_p->value[ch];
                  const double inv = inv_std[static_cast<size_t>(ch)];
                  const double mean_dy = sum_dy / static_cast<double>(count);
                  const double mean_dy_xhat = sum_dy_xhat / static_cast<double>(count);
                  for (int s = 0; s < n; ++s) {
                    auto& xp = self.parents[static_cast<size_t>(s)];
                    if (!xp->requires_grad) continue;
                    Tensor& gx = xp->grad_ref();
                    const int64_t off = (static_cast<int64_t>(s) * c + ch) * plane;
                    const int64_t xoff = static_cast<int64_t>(ch) * plane;
                    for (int64_t i = 0; i < plane; ++i) {
                      if (use_batch_stats) {
                        gx[xoff + i] += gv * inv *
                                        (g[off + i] - mean_dy - xhat[off + i] * mean_dy_xhat);
                      } else {
                        gx[xoff + i] += gv * inv * g[off + i];
                      }
                    }
                  }
                }
              });
}

NodePtr select_sample(NodePtr stacked, int index) {
  check(stacked->value.rank() == 4, "select_sample expects rank-4");
  check(index >= 0 && index < stacked->value.dim(0), "select_sample: index out of range");
  const int c = stacked->value.dim(1), h = stacked->value.dim(2), w = stacked->value.dim(3);
  const int64_t block = static_cast<int64_t>(c) * h * w;
  Tensor out({c, h, w});
  std::copy_n(stacked->value.data() + index * block, block, out.data());
  return make(std::move(out), {stacked}, [index, block](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    double* dst = pg.data() + index * block;
    for (int64_t i = 0; i < block; ++i) dst[i] += self.grad[i];
  });
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

NodePtr bce(NodePtr p, int label, double eps) {
  check(p->value.size() == 1, "bce expects scalar probability");
  check(label == 0 || label == 1, "bce: label must be 0 or 1");
  const double raw = p->value[0];
  const double pc = std::clamp(raw, eps, 1.0 - eps);
  Tensor out({1, 1});
  out[0] = label == 1 ? -std::log(pc) : -std::log(1.0 - pc);
  const bool clamped = raw < eps || raw > 1.0 - eps;
  return make(std::move(out), {p}, [label, pc, clamped](Node& self) {
    if (clamped) return;  // flat region of the clamp
    const double d = label == 1 ? -1.0 / pc : 1.0 / (1.0 - pc);
    self.parents[0]->grad_ref()[0] += self.grad[0] * d;
  });
}

NodePtr smooth_l1(NodePtr pred, const Tensor& target) {
  check(pred->value.rank() == 2 && pred->value.dim(0) == 1, "smooth_l1 expects [1 x k]");
  check(pred->value.same_shape(target), "smooth_l1: target shape mismatch");
  const int k = pred->value.dim(1);
  double total = 0.0;
  std::vector<double> dcoef(static_cast<size_t>(k));
  for (int i = 0; i < k; ++i) {
    const double x = pred->value.at(0, i) - target.at(0, i);
    const double ax = std::fabs(x);
    if (ax < 1.0) {
      total += 0.5 * x * x;
      dcoef[static_cast<size_t>(i)] = x;
    } else {
      total += ax - 0.5;
      dcoef[static_cast<size_t>(i)] = x > 0.0 ? 1.0 : -1.0;
    }
  }
  Tensor out({1, 1});
  out[0] = total / k;
  return make(std::move(out), {pred}, [dcoef = std::move(dcoef), k](Node& self) {
    Tensor& pg = self.parents[0]->grad_ref();
    for (int i = 0; i < k; ++i) {
      pg.at(0, i) += self.grad[0] * dcoef[static_cast<size_t>(i)] / k;
    }
  });
}

NodePtr mean_of(const std::vector<NodePtr>& scalars) {
  check(!scalars.empty(), "mean_of: empty input");
  const int n = static_cast<int>(scalars.size());
  double total = 0.0;
  for (const auto& s : scalars) {
    check(s->value.size() == 1, "mean_of expects scalars");
    total += s->value[0];
  }
  Tensor out({1, 1});
  out[0] = total / n;
  return make(std::move(out), scalars, [n](Node& self) {
    const double share = self.grad[0] / n;
    for (auto& p : self.parents) {
      if (p->requires_grad) p->grad_ref()[0] += share;
    }
  });
}

// ---------------------------------------------------------------------------
// parameters
// ---------------------------------------------------------------------------

NodePtr ParameterStore::create(const std::string& name, std::vector<int> dims, Init init,
                               Rng& rng, double init_std) {
  check(by_name_.find(name) == by_name_.end(), "duplicate parameter name: " + name);
  Tensor value(std::move(dims));
  switch (init) {
    case Init::kZeros:
      break;
    case Init::kOnes:
      value.fill(1.0);
      break;
    case Init::kTruncNormal:
      for (int64_t i = 0; i < value.size(); ++i) value[i] = rng.truncated_normal(init_std);
      break;
  }
  auto node = leaf(std::move(value), true, name);
  params_.push_back(node);
  by_name_[name] = node;
  return node;
}

NodePtr ParameterStore::find(const std::string& name) const {
  auto it = by_name_.find(name);
  return it == by_name_.end() ? nullptr : it->second;
}

Tensor& ParameterStore::buffer(const std::string& name, std::vector<int> dims, double fill) {
  auto it = buffers_.find(name);
  if (it == buffers_.end()) {
    it = buffers_.emplace(name, Tensor(std::move(dims), fill)).first;
  }
  return it->second;
}

Tensor& ParameterStore::buffer(const std::string& name) {
  auto it = buffers_.find(name);
  check(it != buffers_.end(), "unknown buffer: " + name);
  return it->second;
}

void ParameterStore::zero_grads() {
  for (auto& p : params_) p->zero_grad();
}

bool ParameterStore::all_finite() const {
  for (const auto& p : params_) {
    if (!p->value.all_finite()) return false;
  }
  return true;
}

namespace {

void fnv_mix(uint64_t& hash, const void* bytes, size_t len) {
  const auto* b = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < len; ++i) {
    hash ^= b[i];
    hash *= 1099511628211ULL;
  }
}

void fnv_mix_tensor(uint64_t& hash, const std::string& name, const Tensor& t) {
  fnv_mix(hash, name.data(), name.size());
  for (int d : t.dims()) fnv_mix(hash, &d, sizeof(d));
  fnv_mix(hash, t.data(), static_cast<size_t>(t.size()) * sizeof(double));
}

}  // namespace

uint64_t digest(const ParameterStore& store,
                const std::function<bool(const std::string&)>& keep) {
  std::map<std::string, const Tensor*> entries;
  for (const auto& p : store.params()) {
    if (keep(p->name)) entries[p->name] = &p->value;
  }
  for (const auto& [name, buf] : store.buffers()) {
    if (keep(name)) entries[name] = &buf;
  }
  uint64_t hash = 14695981039346656037ULL;
  for (const auto& [name, tensor] : entries) fnv_mix_tensor(hash, name, *tensor);
  return hash;
}

}  // namespace cfd::ag
