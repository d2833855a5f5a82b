#pragma once

#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "cfd/rng.hpp"
#include "cfd/tensor.hpp"

// Reverse-mode tape over dense double tensors. Graphs are built per forward
// call (define-by-run) and freed when the last NodePtr goes out of scope;
// parameters are the only nodes that live across graphs.
namespace cfd::ag {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
  Tensor value;
  Tensor grad;  // allocated on first accumulation, same shape as value
  bool requires_grad = false;
  std::string name;  // set for parameters, used in diagnostics
  std::vector<NodePtr> parents;
  std::function<void(Node&)> backprop;  // scatters grad into parents

  Tensor& grad_ref() {
    if (grad.empty()) grad = Tensor(value.dims());
    return grad;
  }
  void zero_grad() {
    if (!grad.empty()) grad.fill(0.0);
  }
};

NodePtr constant(Tensor value);
NodePtr leaf(Tensor value, bool requires_grad, std::string name = {});

// Runs backpropagation from a scalar [1x1] root.
void backward(const NodePtr& root);

// ---- elementwise / broadcast ----
NodePtr add(NodePtr a, NodePtr b);              // same shape
NodePtr add_row(NodePtr m, NodePtr row_vec);    // [r x n] + [1 x n]
NodePtr scale(NodePtr a, double s);
NodePtr relu(NodePtr a);
NodePtr sigmoid(NodePtr a);
// Inverted dropout; the mask is drawn once at build time.
NodePtr dropout(NodePtr a, double rate, Rng& rng);

// ---- linear algebra ----
NodePtr matmul(NodePtr a, NodePtr b);           // [m x k] * [k x n]
NodePtr transpose(NodePtr a);                   // [m x n] -> [n x m]
NodePtr slice_cols(NodePtr a, int start, int count);
NodePtr concat_cols(NodePtr a, NodePtr b);
NodePtr gather_rows(NodePtr table, const std::vector<int>& ids);
NodePtr mean_rows(NodePtr a, int row_count);    // mean over first rows -> [1 x n]

// Softmax over the first valid_cols entries of every row; remaining columns
// are exactly zero in the output.
NodePtr row_softmax_masked(NodePtr a, int valid_cols);

// Per-row layer normalization with learned gain/bias (rank-1, width n).
NodePtr layer_norm_rows(NodePtr x, NodePtr gain, NodePtr bias, double eps);

// ---- rank-3 / conv path ----
NodePtr stack_mats(const std::vector<NodePtr>& mats);   // H x [R x C] -> [H x R x C]
NodePtr concat_stacks(NodePtr a, NodePtr b);            // along dim 0
NodePtr flatten(NodePtr a);                             // [...] -> [1 x numel]
// Zero-pads (or truncates) both trailing axes of a [C x T x T] stack to grid.
NodePtr pad_grid(NodePtr a, int grid);

// 2-D convolution, stride `stride`, SAME padding (output ceil(H/stride)).
// x [C x H x W], weight [F x C x kh x kw], bias rank-1 [F].
NodePtr conv2d_same(NodePtr x, NodePtr weight, NodePtr bias, int stride);

// Batch normalization over a list of [C x H x W] inputs, one per sample.
// Returns the stacked [N x C x H x W] result; recover per-sample values with
// select_sample. Training with N >= 2 normalizes with batch statistics and
// updates the running buffers; training with N == 1 and eval mode both
// normalize with the (frozen) running statistics.
NodePtr batch_norm(const std::vector<NodePtr>& xs, NodePtr gain, NodePtr bias,
                   Tensor& running_mean, Tensor& running_var, bool training,
                   double momentum, double eps);
NodePtr select_sample(NodePtr stacked, int index);

// ---- losses ----
// p [1x1] probability, label in {0,1}; p is clamped to [eps, 1-eps].
NodePtr bce(NodePtr p, int label, double eps);
// pred [1x4], target [1x4] constant; mean of the per-coordinate Huber terms.
NodePtr smooth_l1(NodePtr pred, const Tensor& target);
NodePtr mean_of(const std::vector<NodePtr>& scalars);

// ---- parameters ----
enum class Init { kZeros, kOnes, kTruncNormal };

// Named parameter tensors plus non-trainable buffers (running statistics).
// Creation order is fixed by the model constructors, which makes
// initialization and serialization deterministic.
class ParameterStore {
 public:
  NodePtr create(const std::string& name, std::vector<int> dims, Init init, Rng& rng,
                 double init_std = 0.02);
  NodePtr find(const std::string& name) const;  // nullptr when absent
  const std::vector<NodePtr>& params() const { return params_; }

  Tensor& buffer(const std::string& name, std::vector<int> dims, double fill);
  Tensor& buffer(const std::string& name);
  const std::map<std::string, Tensor>& buffers() const { return buffers_; }

  void zero_grads();
  bool all_finite() const;

 private:
  std::vector<NodePtr> params_;
  std::map<std::string, NodePtr> by_name_;
  std::map<std::string, Tensor> buffers_;
};

// FNV-1a over names, shapes and raw values of parameters and buffers whose
// name passes `keep`; used to certify that fine-tuning really started from
// the donor weights.
uint64_t digest(const ParameterStore& store,
                const std::function<bool(const std::string&)>& keep);

}  // namespace cfd::ag
