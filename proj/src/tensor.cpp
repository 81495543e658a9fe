#include "dygrag/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

namespace dygrag {

using detail::TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << ",";
        os << s[i];
    }
    os << ")";
    return os.str();
}

namespace {

std::size_t shape_size(const Shape& s) {
    std::size_t n = 1;
    for (auto d : s) n *= d;
    return n;
}

[[noreturn]] void fail(const std::string& op, const std::string& msg) {
    throw std::invalid_argument(op + ": " + msg);
}

void require(bool cond, const std::string& op, const std::string& msg) {
    if (!cond) fail(op, msg);
}

void require_same_shape(const std::string& op, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
}

}  // namespace

Tensor::Tensor(Shape shape, double fill, bool requires_grad) {
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data.assign(shape_size(node_->shape), fill);
    node_->requires_grad = requires_grad;
}

Tensor::Tensor(Shape shape, std::vector<double> data, bool requires_grad) {
    if (shape_size(shape) != data.size()) {
        fail("tensor", "shape " + shape_str(shape) + " does not cover " +
                           std::to_string(data.size()) + " values");
    }
    node_ = std::make_shared<TensorNode>();
    node_->shape = std::move(shape);
    node_->data = std::move(data);
    node_->requires_grad = requires_grad;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    return Tensor(Shape{1}, std::vector<double>{v}, requires_grad);
}

Tensor Tensor::randn(Shape shape, Rng& rng, double sigma, bool requires_grad) {
    Tensor t(std::move(shape), 0.0, requires_grad);
    for (auto& x : t.data()) x = rng.normal(0.0, sigma);
    return t;
}

std::size_t Tensor::rows() const {
    return node_->shape.size() == 2 ? node_->shape[0] : 1;
}

std::size_t Tensor::cols() const {
    return node_->shape.empty() ? 1 : node_->shape.back();
}

double Tensor::value() const {
    require(is_scalar(), "value", "tensor of shape " + shape_str(shape()) + " is not scalar");
    return node_->data[0];
}

double& Tensor::at(std::size_t r, std::size_t c) { return node_->data[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return node_->data[r * cols() + c]; }

const std::vector<double>& Tensor::grad() const {
    require(has_grad(), "grad", "gradient not populated; run backward first");
    return node_->grad;
}

// --- op construction --------------------------------------------------------

namespace {

// Per-pass gradient callback: gout is the result's gradient for this pass,
// pgrads[i] points at parent i's pass buffer (nullptr when that parent does
// not require grad).
using BackpropFn =
    std::function<void(const TensorNode& self, const std::vector<double>& gout,
                       const std::vector<std::vector<double>*>& pgrads)>;

Tensor make_result(Shape shape, std::vector<double> data, std::vector<Tensor> parents,
                   BackpropFn backprop) {
    Tensor out(std::move(shape), std::move(data), false);
    bool needs = false;
    for (const auto& p : parents) needs |= p.requires_grad();
    if (needs) {
        auto node = out.node();
        node->requires_grad = true;
        for (const auto& p : parents) node->parents.push_back(p.node());
        TensorNode* self = node.get();
        node->backward_fn = [self, fn = std::move(backprop)](
                                const std::vector<double>& gout,
                                std::vector<double>* const* pgrads) {
            std::vector<std::vector<double>*> pg(self->parents.size());
            for (std::size_t i = 0; i < pg.size(); ++i) pg[i] = pgrads[i];
            fn(*self, gout, pg);
        };
    }
    return out;
}

}  // namespace

namespace detail {
void run_backward(const NodePtr& root);
}

void Tensor::backward() const {
    require(is_scalar(), "backward", "root must be scalar, got shape " + shape_str(shape()));
    detail::run_backward(node_);
}

namespace detail {

void run_backward(const NodePtr& root) {
    if (!root->requires_grad) return;

    // iterative post-order DFS: topo holds parents before children
    std::vector<TensorNode*> topo;
    std::unordered_set<TensorNode*> visited;
    std::vector<std::pair<TensorNode*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    visited.insert(root.get());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->parents.size()) {
            TensorNode* p = node->parents[next++].get();
            if (p->requires_grad && !visited.count(p)) {
                visited.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            topo.push_back(node);
            stack.pop_back();
        }
    }

    std::unordered_map<TensorNode*, std::vector<double>> pass;
    pass[root.get()] = {1.0};

    for (auto it = topo.rbegin(); it != topo.rend(); ++it) {
        TensorNode* n = *it;
        auto found = pass.find(n);
        if (found == pass.end()) continue;
        if (n->backward_fn) {
            std::vector<std::vector<double>*> pgrads(n->parents.size(), nullptr);
            for (std::size_t i = 0; i < n->parents.size(); ++i) {
                TensorNode* p = n->parents[i].get();
                if (!p->requires_grad) continue;
                auto& buf = pass[p];
                if (buf.size() != p->data.size()) buf.assign(p->data.size(), 0.0);
                pgrads[i] = &buf;
            }
            n->backward_fn(found->second, pgrads.data());
        }
    }

    for (auto& [n, g] : pass) {
        if (!n->requires_grad) continue;
        n->ensure_grad();
        for (std::size_t i = 0; i < g.size(); ++i) n->grad[i] += g[i];
    }
}

}  // namespace detail

// --- primitives -------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 2 && b.shape().size() == 2, "matmul",
            "needs rank-2 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    const std::size_t m = a.shape()[0], k = a.shape()[1], k2 = b.shape()[0], n = b.shape()[1];
    require(k == k2, "matmul",
            "inner dimensions differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));

    std::vector<double> out(m * n, 0.0);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double av = pa[i * k + p];
            if (av == 0.0) continue;
            const double* brow = pb + p * n;
            double* orow = out.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    }
    return make_result(
        {m, n}, std::move(out), {a, b},
        [m, k, n](const TensorNode& self, const std::vector<double>& g,
                  const std::vector<std::vector<double>*>& pg) {
            const auto& adata = self.parents[0]->data;
            const auto& bdata = self.parents[1]->data;
            if (pg[0]) {  // dA = g . B^T
                auto& da = *pg[0];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                        const double gv = g[i * n + j];
                        if (gv == 0.0) continue;
                        for (std::size_t p = 0; p < k; ++p) da[i * k + p] += gv * bdata[p * n + j];
                    }
            }
            if (pg[1]) {  // dB = A^T . g
                auto& db = *pg[1];
                for (std::size_t i = 0; i < m; ++i)
                    for (std::size_t p = 0; p < k; ++p) {
                        const double av = adata[i * k + p];
                        if (av == 0.0) continue;
                        for (std::size_t j = 0; j < n; ++j) db[p * n + j] += av * g[i * n + j];
                    }
            }
        });
}

Tensor transpose(const Tensor& a) {
    require(a.shape().size() == 2, "transpose", "needs rank-2, got " + shape_str(a.shape()));
    const std::size_t m = a.shape()[0], n = a.shape()[1];
    std::vector<double> out(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a.data()[i * n + j];
    return make_result({n, m}, std::move(out), {a},
                       [m, n](const TensorNode&, const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t i = 0; i < m; ++i)
                               for (std::size_t j = 0; j < n; ++j)
                                   da[i * n + j] += g[j * m + i];
                       });
}

Tensor add(const Tensor& a, const Tensor& b) {
    if (a.shape() == b.shape()) {
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
        return make_result(a.shape(), std::move(out), {a, b},
                           [](const TensorNode&, const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& pg) {
                               for (int s = 0; s < 2; ++s) {
                                   if (!pg[s]) continue;
                                   auto& d = *pg[s];
                                   for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
                               }
                           });
    }
    // row broadcast: (m,n) + (n)
    if (a.shape().size() == 2 && b.shape().size() == 1 && b.shape()[0] == a.shape()[1]) {
        const std::size_t m = a.shape()[0], n = a.shape()[1];
        std::vector<double> out(a.size());
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) out[i * n + j] = a.data()[i * n + j] + b.data()[j];
        return make_result(a.shape(), std::move(out), {a, b},
                           [m, n](const TensorNode&, const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                               if (pg[0]) {
                                   auto& da = *pg[0];
                                   for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                               }
                               if (pg[1]) {
                                   auto& db = *pg[1];
                                   for (std::size_t i = 0; i < m; ++i)
                                       for (std::size_t j = 0; j < n; ++j) db[j] += g[i * n + j];
                               }
                           });
    }
    fail("add", "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape("mul", a, b);
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
    return make_result(a.shape(), std::move(out), {a, b},
                       [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           const auto& ad = self.parents[0]->data;
                           const auto& bd = self.parents[1]->data;
                           if (pg[0]) {
                               auto& da = *pg[0];
                               for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * bd[i];
                           }
                           if (pg[1]) {
                               auto& db = *pg[1];
                               for (std::size_t i = 0; i < g.size(); ++i) db[i] += g[i] * ad[i];
                           }
                       });
}

Tensor scale(const Tensor& a, double k) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * k;
    return make_result(a.shape(), std::move(out), {a},
                       [k](const TensorNode&, const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * k;
                       });
}

Tensor exp(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::exp(a.data()[i]);
    return make_result(a.shape(), std::move(out), {a},
                       [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] * self.data[i];
                       });
}

Tensor log(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::log(a.data()[i]);
    return make_result(a.shape(), std::move(out), {a},
                       [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           const auto& ad = self.parents[0]->data;
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i] / ad[i];
                       });
}

Tensor relu(const Tensor& a) {
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] > 0.0 ? a.data()[i] : 0.0;
    return make_result(a.shape(), std::move(out), {a},
                       [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           const auto& ad = self.parents[0]->data;
                           for (std::size_t i = 0; i < g.size(); ++i)
                               if (ad[i] > 0.0) da[i] += g[i];
                       });
}

Tensor gelu(const Tensor& a) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double k = 0.044715;
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < out.size(); ++i) {
        const double x = a.data()[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(c * (x + k * x * x * x)));
    }
    return make_result(
        a.shape(), std::move(out), {a},
        [](const TensorNode& self, const std::vector<double>& g,
           const std::vector<std::vector<double>*>& pg) {
            if (!pg[0]) return;
            auto& da = *pg[0];
            const auto& ad = self.parents[0]->data;
            for (std::size_t i = 0; i < g.size(); ++i) {
                const double x = ad[i];
                const double u = c * (x + k * x * x * x);
                const double t = std::tanh(u);
                const double du = c * (1.0 + 3.0 * k * x * x);
                da[i] += g[i] * (0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du);
            }
        });
}

Tensor softmax_rows(const Tensor& a) {
    require(a.shape().size() <= 2, "softmax_rows", "needs rank 1 or 2, got " + shape_str(a.shape()));
    const std::size_t rows = a.rows(), cols = a.cols();
    std::vector<double> out(a.size());
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = a.data().data() + r * cols;
        double* o = out.data() + r * cols;
        double mx = in[0];
        for (std::size_t j = 1; j < cols; ++j) mx = std::max(mx, in[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < cols; ++j) {
            o[j] = std::exp(in[j] - mx);
            s += o[j];
        }
        for (std::size_t j = 0; j < cols; ++j) o[j] /= s;
    }
    return make_result(a.shape(), std::move(out), {a},
                       [rows, cols](const TensorNode& self, const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t r = 0; r < rows; ++r) {
                               const double* y = self.data.data() + r * cols;
                               const double* gr = g.data() + r * cols;
                               double dotv = 0.0;
                               for (std::size_t j = 0; j < cols; ++j) dotv += gr[j] * y[j];
                               for (std::size_t j = 0; j < cols; ++j)
                                   da[r * cols + j] += y[j] * (gr[j] - dotv);
                           }
                       });
}

Tensor layer_norm_rows(const Tensor& a, const Tensor& gain, const Tensor& bias, double eps) {
    require(a.shape().size() <= 2, "layer_norm", "needs rank 1 or 2, got " + shape_str(a.shape()));
    const std::size_t rows = a.rows(), cols = a.cols();
    require(gain.shape() == Shape{cols} && bias.shape() == Shape{cols}, "layer_norm",
            "gain/bias must have shape (" + std::to_string(cols) + ")");
    std::vector<double> out(a.size());
    std::vector<double> xhat(a.size());
    std::vector<double> inv(rows);
    for (std::size_t r = 0; r < rows; ++r) {
        const double* in = a.data().data() + r * cols;
        double mu = 0.0;
        for (std::size_t j = 0; j < cols; ++j) mu += in[j];
        mu /= static_cast<double>(cols);
        double var = 0.0;
        for (std::size_t j = 0; j < cols; ++j) var += (in[j] - mu) * (in[j] - mu);
        var /= static_cast<double>(cols);
        inv[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < cols; ++j) {
            xhat[r * cols + j] = (in[j] - mu) * inv[r];
            out[r * cols + j] = gain.data()[j] * xhat[r * cols + j] + bias.data()[j];
        }
    }
    return make_result(
        a.shape(), std::move(out), {a, gain, bias},
        [rows, cols, xhat = std::move(xhat), inv = std::move(inv)](
            const TensorNode& self, const std::vector<double>& g,
            const std::vector<std::vector<double>*>& pg) {
            const auto& gdata = self.parents[1]->data;
            for (std::size_t r = 0; r < rows; ++r) {
                const double* xh = xhat.data() + r * cols;
                const double* gr = g.data() + r * cols;
                if (pg[1] || pg[2]) {
                    for (std::size_t j = 0; j < cols; ++j) {
                        if (pg[1]) (*pg[1])[j] += gr[j] * xh[j];
                        if (pg[2]) (*pg[2])[j] += gr[j];
                    }
                }
                if (pg[0]) {
                    double mean_q = 0.0, mean_qx = 0.0;
                    for (std::size_t j = 0; j < cols; ++j) {
                        const double q = gr[j] * gdata[j];
                        mean_q += q;
                        mean_qx += q * xh[j];
                    }
                    mean_q /= static_cast<double>(cols);
                    mean_qx /= static_cast<double>(cols);
                    auto& da = *pg[0];
                    for (std::size_t j = 0; j < cols; ++j) {
                        const double q = gr[j] * gdata[j];
                        da[r * cols + j] += inv[r] * (q - mean_q - xh[j] * mean_qx);
                    }
                }
            }
        });
}

Tensor embedding_lookup(const Tensor& table, const std::vector<std::size_t>& ids) {
    require(table.shape().size() == 2, "embedding_lookup",
            "table must be rank-2, got " + shape_str(table.shape()));
    const std::size_t v = table.shape()[0], d = table.shape()[1];
    for (auto id : ids)
        require(id < v, "embedding_lookup",
                "index " + std::to_string(id) + " out of range for table with " +
                    std::to_string(v) + " rows");
    std::vector<double> out(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy_n(table.data().data() + ids[i] * d, d, out.data() + i * d);
    return make_result({ids.size(), d}, std::move(out), {table},
                       [ids, d](const TensorNode&, const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& dt = *pg[0];
                           for (std::size_t i = 0; i < ids.size(); ++i)
                               for (std::size_t j = 0; j < d; ++j)
                                   dt[ids[i] * d + j] += g[i * d + j];
                       });
}

Tensor masked_mean(const Tensor& a, const std::vector<double>& mask) {
    require(a.shape().size() <= 2, "masked_mean", "needs rank 1 or 2, got " + shape_str(a.shape()));
    const std::size_t rows = a.shape()[0];
    const std::size_t cols = a.shape().size() == 2 ? a.shape()[1] : 1;
    require(mask.size() == rows, "masked_mean",
            "mask length " + std::to_string(mask.size()) + " != rows " + std::to_string(rows));
    double cnt = 0.0;
    for (double m : mask) cnt += m;
    require(cnt > 0.0, "masked_mean", "mask selects no rows");
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
        if (mask[r] == 0.0) continue;
        for (std::size_t j = 0; j < cols; ++j) out[j] += a.data()[r * cols + j];
    }
    for (auto& x : out) x /= cnt;
    Shape oshape = a.shape().size() == 2 ? Shape{cols} : Shape{1};
    return make_result(std::move(oshape), std::move(out), {a},
                       [mask, rows, cols, cnt](const TensorNode&, const std::vector<double>& g,
                                               const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t r = 0; r < rows; ++r) {
                               if (mask[r] == 0.0) continue;
                               for (std::size_t j = 0; j < cols; ++j)
                                   da[r * cols + j] += g[j] / cnt;
                           }
                       });
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    require(!parts.empty(), "concat", "empty part list");
    require(axis == 0 || axis == 1, "concat", "axis must be 0 or 1");
    if (parts[0].shape().size() == 1) {
        require(axis == 0, "concat", "rank-1 tensors concatenate along axis 0");
        std::size_t total = 0;
        for (const auto& p : parts) {
            require(p.shape().size() == 1, "concat", "mixed ranks");
            total += p.size();
        }
        std::vector<double> out;
        out.reserve(total);
        std::vector<std::size_t> offsets;
        for (const auto& p : parts) {
            offsets.push_back(out.size());
            out.insert(out.end(), p.data().begin(), p.data().end());
        }
        std::vector<Tensor> ps(parts);
        return make_result({total}, std::move(out), std::move(ps),
                           [offsets](const TensorNode& self, const std::vector<double>& g,
                                     const std::vector<std::vector<double>*>& pg) {
                               for (std::size_t i = 0; i < self.parents.size(); ++i) {
                                   if (!pg[i]) continue;
                                   auto& d = *pg[i];
                                   for (std::size_t j = 0; j < d.size(); ++j)
                                       d[j] += g[offsets[i] + j];
                               }
                           });
    }
    const std::size_t fixed = axis == 0 ? parts[0].shape()[1] : parts[0].shape()[0];
    std::size_t varying = 0;
    for (const auto& p : parts) {
        require(p.shape().size() == 2, "concat", "mixed ranks");
        const std::size_t f = axis == 0 ? p.shape()[1] : p.shape()[0];
        require(f == fixed, "concat",
                "incompatible part " + shape_str(p.shape()) + " along axis " + std::to_string(axis));
        varying += axis == 0 ? p.shape()[0] : p.shape()[1];
    }
    const std::size_t orows = axis == 0 ? varying : fixed;
    const std::size_t ocols = axis == 0 ? fixed : varying;
    std::vector<double> out(orows * ocols);
    std::vector<std::size_t> offsets;
    std::size_t off = 0;
    for (const auto& p : parts) {
        offsets.push_back(off);
        const std::size_t pr = p.shape()[0], pc = p.shape()[1];
        for (std::size_t r = 0; r < pr; ++r)
            for (std::size_t c = 0; c < pc; ++c) {
                if (axis == 0)
                    out[(off + r) * ocols + c] = p.at(r, c);
                else
                    out[r * ocols + off + c] = p.at(r, c);
            }
        off += axis == 0 ? pr : pc;
    }
    std::vector<Tensor> ps(parts);
    return make_result(
        {orows, ocols}, std::move(out), std::move(ps),
        [offsets, axis, ocols](const TensorNode& self, const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& pg) {
            for (std::size_t i = 0; i < self.parents.size(); ++i) {
                if (!pg[i]) continue;
                auto& d = *pg[i];
                const auto& pshape = self.parents[i]->shape;
                const std::size_t pr = pshape[0], pc = pshape[1];
                for (std::size_t r = 0; r < pr; ++r)
                    for (std::size_t c = 0; c < pc; ++c) {
                        if (axis == 0)
                            d[r * pc + c] += g[(offsets[i] + r) * ocols + c];
                        else
                            d[r * pc + c] += g[r * ocols + offsets[i] + c];
                    }
            }
        });
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
    require(!rows.empty(), "stack_rows", "empty row list");
    const std::size_t d = rows[0].size();
    for (const auto& r : rows)
        require(r.shape().size() == 1 && r.size() == d, "stack_rows",
                "rows must be rank-1 of equal length");
    std::vector<double> out;
    out.reserve(rows.size() * d);
    for (const auto& r : rows) out.insert(out.end(), r.data().begin(), r.data().end());
    std::vector<Tensor> ps(rows);
    return make_result({rows.size(), d}, std::move(out), std::move(ps),
                       [d](const TensorNode& self, const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& pg) {
                           for (std::size_t i = 0; i < self.parents.size(); ++i) {
                               if (!pg[i]) continue;
                               auto& dr = *pg[i];
                               for (std::size_t j = 0; j < d; ++j) dr[j] += g[i * d + j];
                           }
                       });
}

Tensor sum(const Tensor& a) {
    double s = 0.0;
    for (double x : a.data()) s += x;
    return make_result({1}, {s}, {a},
                       [](const TensorNode&, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (auto& x : da) x += g[0];
                       });
}

Tensor reshape(const Tensor& a, Shape shape) {
    std::size_t total = 1;
    for (auto d : shape) total *= d;
    require(total == a.size(), "reshape",
            "shape " + shape_str(shape) + " does not cover " + std::to_string(a.size()) +
                " values");
    std::vector<double> out = a.data();
    return make_result(std::move(shape), std::move(out), {a},
                       [](const TensorNode&, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) da[i] += g[i];
                       });
}

Tensor pick(const Tensor& a, std::size_t flat_index) {
    require(flat_index < a.size(), "pick",
            "index " + std::to_string(flat_index) + " out of range for size " +
                std::to_string(a.size()));
    return make_result({1}, {a.data()[flat_index]}, {a},
                       [flat_index](const TensorNode&, const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& pg) {
                           if (pg[0]) (*pg[0])[flat_index] += g[0];
                       });
}

Tensor slice_rows(const Tensor& a, std::size_t begin, std::size_t end) {
    require(a.shape().size() == 2, "slice_rows", "needs rank-2, got " + shape_str(a.shape()));
    require(begin <= end && end <= a.shape()[0], "slice_rows",
            "range [" + std::to_string(begin) + "," + std::to_string(end) + ") out of " +
                std::to_string(a.shape()[0]) + " rows");
    const std::size_t d = a.shape()[1];
    std::vector<double> out(a.data().begin() + begin * d, a.data().begin() + end * d);
    return make_result({end - begin, d}, std::move(out), {a},
                       [begin, d](const TensorNode&, const std::vector<double>& g,
                                  const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& da = *pg[0];
                           for (std::size_t i = 0; i < g.size(); ++i) da[begin * d + i] += g[i];
                       });
}

Tensor dot(const Tensor& a, const Tensor& b) {
    require(a.shape().size() == 1 && b.shape().size() == 1 && a.size() == b.size(), "dot",
            "needs equal-length rank-1 operands, got " + shape_str(a.shape()) + " and " +
                shape_str(b.shape()));
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a.data()[i] * b.data()[i];
    return make_result({1}, {s}, {a, b},
                       [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& pg) {
                           const auto& ad = self.parents[0]->data;
                           const auto& bd = self.parents[1]->data;
                           if (pg[0]) {
                               auto& da = *pg[0];
                               for (std::size_t i = 0; i < da.size(); ++i) da[i] += g[0] * bd[i];
                           }
                           if (pg[1]) {
                               auto& db = *pg[1];
                               for (std::size_t i = 0; i < db.size(); ++i) db[i] += g[0] * ad[i];
                           }
                       });
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets, int ignore_index) {
    require(logits.shape().size() == 2, "cross_entropy",
            "logits must be rank-2, got " + shape_str(logits.shape()));
    const std::size_t n = logits.shape()[0], v = logits.shape()[1];
    require(targets.size() == n, "cross_entropy",
            "targets length " + std::to_string(targets.size()) + " != logits rows " +
                std::to_string(n));
    std::vector<std::size_t> kept;
    for (std::size_t r = 0; r < n; ++r) {
        if (targets[r] == ignore_index) continue;
        require(targets[r] >= 0 && static_cast<std::size_t>(targets[r]) < v, "cross_entropy",
                "target " + std::to_string(targets[r]) + " out of range at row " +
                    std::to_string(r));
        kept.push_back(r);
    }
    require(!kept.empty(), "cross_entropy", "all positions ignored; mean undefined");

    double loss = 0.0;
    std::vector<double> probs(kept.size() * v);
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const std::size_t r = kept[i];
        const double* row = logits.data().data() + r * v;
        double mx = row[0];
        for (std::size_t j = 1; j < v; ++j) mx = std::max(mx, row[j]);
        double s = 0.0;
        for (std::size_t j = 0; j < v; ++j) {
            probs[i * v + j] = std::exp(row[j] - mx);
            s += probs[i * v + j];
        }
        for (std::size_t j = 0; j < v; ++j) probs[i * v + j] /= s;
        loss -= std::log(probs[i * v + targets[r]]);
    }
    loss /= static_cast<double>(kept.size());

    return make_result(
        {1}, {loss}, {logits},
        [kept, targets, v, probs = std::move(probs)](const TensorNode&,
                                                     const std::vector<double>& g,
                                                     const std::vector<std::vector<double>*>& pg) {
            if (!pg[0]) return;
            auto& dl = *pg[0];
            const double gscale = g[0] / static_cast<double>(kept.size());
            for (std::size_t i = 0; i < kept.size(); ++i) {
                const std::size_t r = kept[i];
                for (std::size_t j = 0; j < v; ++j) {
                    double p = probs[i * v + j];
                    if (static_cast<int>(j) == targets[r]) p -= 1.0;
                    dl[r * v + j] += gscale * p;
                }
            }
        });
}

Tensor logsumexp(const Tensor& v) {
    require(v.shape().size() == 1, "logsumexp", "needs rank-1, got " + shape_str(v.shape()));
    double mx = v.data()[0];
    for (double x : v.data()) mx = std::max(mx, x);
    double s = 0.0;
    std::vector<double> soft(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        soft[i] = std::exp(v.data()[i] - mx);
        s += soft[i];
    }
    for (auto& x : soft) x /= s;
    const double out = mx + std::log(s);
    return make_result({1}, {out}, {v},
                       [soft = std::move(soft)](const TensorNode&, const std::vector<double>& g,
                                                const std::vector<std::vector<double>*>& pg) {
                           if (!pg[0]) return;
                           auto& dv = *pg[0];
                           for (std::size_t i = 0; i < dv.size(); ++i) dv[i] += g[0] * soft[i];
                       });
}

}  // namespace dygrag
