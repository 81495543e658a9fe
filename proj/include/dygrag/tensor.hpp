#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "dygrag/rng.hpp"

namespace dygrag {

using Shape = std::vector<std::size_t>;

std::string shape_str(const Shape& s);

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first accumulation
    bool requires_grad = false;
    std::vector<std::shared_ptr<TensorNode>> parents;
    // Takes this node's per-pass gradient and pointers to the parents'
    // per-pass buffers (null when a parent does not require grad).
    std::function<void(const std::vector<double>&, std::vector<double>* const*)> backward_fn;

    std::size_t size() const { return data.size(); }
    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0);
    }
};

}  // namespace detail

// Dense float64 tensor participating in reverse-mode differentiation.
// Value-like: copies share the underlying node, which is what ties the
// computation graph together. Rank 1 and 2 cover everything this project
// needs; a scalar is shape {1}.
class Tensor {
public:
    Tensor() : Tensor(Shape{1}, 0.0, false) {}
    Tensor(Shape shape, double fill, bool requires_grad = false);
    Tensor(Shape shape, std::vector<double> data, bool requires_grad = false);

    static Tensor scalar(double v, bool requires_grad = false);
    static Tensor randn(Shape shape, Rng& rng, double sigma, bool requires_grad = true);

    const Shape& shape() const { return node_->shape; }
    std::size_t size() const { return node_->data.size(); }
    std::size_t rows() const;
    std::size_t cols() const;
    bool is_scalar() const { return size() == 1; }
    double value() const;  // scalar only

    std::vector<double>& data() { return node_->data; }
    const std::vector<double>& data() const { return node_->data; }
    double& at(std::size_t i) { return node_->data[i]; }
    double at(std::size_t i) const { return node_->data[i]; }
    double& at(std::size_t r, std::size_t c);
    double at(std::size_t r, std::size_t c) const;

    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool v) { node_->requires_grad = v; }
    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const;
    void zero_grad() { node_->grad.assign(node_->data.size(), 0.0); }

    // Reverse pass from a scalar root. Gradients accumulate by sum into
    // every requires_grad tensor reachable in the graph; calling twice
    // without zeroing doubles leaf gradients exactly.
    void backward() const;

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    std::shared_ptr<detail::TensorNode> node_;
};

// --- primitives -----------------------------------------------------------
// Each forward registers its backward rule on the result node. Shape
// mismatches throw with the operation name and both shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
// same shape, or b a vector broadcast across a's rows
Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);  // elementwise, same shape
Tensor scale(const Tensor& a, double k);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor gelu(const Tensor& a);  // tanh approximation
Tensor softmax_rows(const Tensor& a);
// Normalizes each row to zero mean / unit variance, then applies the
// affine gain and bias (both length = row width).
Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias,
                       double eps = 1e-12);
Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids);
// mean over rows (axis 0) restricted to mask==1 rows; 1-D input reduces to scalar
Tensor masked_mean(const Tensor& a, const std::vector<double>& mask);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor stack_rows(const std::vector<Tensor>& rows);  // 1-D tensors -> matrix
Tensor sum(const Tensor& a);                         // -> scalar
Tensor reshape(const Tensor& a, Shape shape);        // same element count
Tensor pick(const Tensor& a, std::size_t flat_index);  // -> scalar
Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end);
Tensor dot(const Tensor& a, const Tensor& b);  // 1-D x 1-D -> scalar

// Mean negative log-likelihood over rows whose target != ignore_index.
// Throws if every position is ignored.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets,
                     int ignore_index);

// log(sum(exp(v))) of a 1-D tensor, max-shifted for stability
Tensor logsumexp(const Tensor& v);

}  // namespace dygrag
