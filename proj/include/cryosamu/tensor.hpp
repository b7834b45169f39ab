#ifndef CRYOSAMU_TENSOR_HPP
#define CRYOSAMU_TENSOR_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "cryosamu/common.hpp"

namespace cryosamu {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

/// One node of the reverse-mode graph. Ops record parents and a backward
/// function only when some input requires gradients; otherwise values flow
/// through without retaining the graph.
struct TensorNode {
    Shape shape;
    std::vector<float> value;
    std::vector<float> grad;  // allocated lazily, same length as value
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void(TensorNode&)> backward_fn;

    int64_t numel() const { return int64_t(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0f);
    }
};

/// Value-semantics handle to a graph node.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, float fill, bool requires_grad = false);
    static Tensor from_data(Shape shape, std::vector<float> data, bool requires_grad = false);

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t dim(int i) const { return node_->shape[size_t(i)]; }
    int ndim() const { return int(node_->shape.size()); }
    int64_t numel() const { return node_->numel(); }

    std::vector<float>& data() { return node_->value; }
    const std::vector<float>& data() const { return node_->value; }
    std::vector<float>& grad() { return node_->grad; }
    const std::vector<float>& grad() const { return node_->grad; }

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    void zero_grad() {
        if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0f);
    }

    /// Scalar value; throws unless numel() == 1.
    float item() const;

    /// Reverse-mode accumulation from a scalar root.
    void backward() const;

    std::shared_ptr<TensorNode>& node() { return node_; }
    const std::shared_ptr<TensorNode>& node() const { return node_; }

private:
    std::shared_ptr<TensorNode> node_;
};

// ---- differentiable ops ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul_scalar(const Tensor& a, double s);

Tensor silu(const Tensor& x);

/// Inverted-scaling dropout with a per-call seed; identity when p == 0.
Tensor dropout(const Tensor& x, double p, uint64_t seed);

/// Cross-correlation with zero padding; cubic kernels of any odd size.
/// x: (B, Cin, D, H, W), w: (Cout, Cin, kd, kh, kw), bias: (Cout) or empty.
Tensor conv3d(const Tensor& x, const Tensor& w, const Tensor& bias, int64_t stride = 1,
              int64_t pad = 0);

Tensor group_norm(const Tensor& x, int64_t groups, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

Tensor softmax_lastdim(const Tensor& x);

/// Batched matmul: (B,M,K) x (B,K,N) -> (B,M,N); trans flags reinterpret
/// the operand's last two axes.
Tensor bmm(const Tensor& a, const Tensor& b, bool trans_a = false, bool trans_b = false);

Tensor reshape(const Tensor& x, Shape shape);
Tensor permute(const Tensor& x, const std::vector<int>& axes);
/// View of `len` entries starting at `start` along dim `dim` (copying).
Tensor narrow(const Tensor& x, int dim, int64_t start, int64_t len);
Tensor concat(const Tensor& a, const Tensor& b, int dim);

/// Nearest-neighbor 2x upsampling of the last three axes of (B,C,D,H,W).
Tensor upsample_nearest2(const Tensor& x);

Tensor mean_all(const Tensor& x);

/// Smooth L1 with mean reduction: 0.5 d^2 for |d| < 1 else |d| - 0.5.
/// per_element, when given, receives the unreduced per-entry losses.
Tensor smooth_l1(const Tensor& x, const Tensor& y, std::vector<float>* per_element = nullptr);

}  // namespace cryosamu

#endif
