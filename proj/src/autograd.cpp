#include "zsar/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <unordered_set>
#include <utility>

#include <fmt/format.h>

#include "eigen_view.hpp"
#include "zsar/errors.hpp"

namespace zsar::ag {

namespace {

thread_local bool t_grad_enabled = true;
thread_local double t_kink = std::numeric_limits<double>::infinity();

Var make(Tensor value, std::initializer_list<Var> inputs, const char* op, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
        node->requires_grad = true;
        for (const auto& v : inputs) node->inputs.push_back(v.shared());
        node->backward = std::move(bw);
    }
    return Var(std::move(node));
}

Var make_many(Tensor value, std::span<const Var> inputs, const char* op, std::function<void(Node&)> bw) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->op = op;
    if (t_grad_enabled && std::any_of(inputs.begin(), inputs.end(), [](const Var& v) { return v.requires_grad(); })) {
        node->requires_grad = true;
        for (const auto& v : inputs) node->inputs.push_back(v.shared());
        node->backward = std::move(bw);
    }
    return Var(std::move(node));
}

// Gradient buffer of input i, or nullptr when it needs none.
Tensor* in_grad(Node& self, std::size_t i) {
    auto& in = self.inputs[i];
    return in->requires_grad ? &in->grad_buffer() : nullptr;
}

const Tensor& in_value(const Node& self, std::size_t i) { return self.inputs[i]->value; }

void require_matrix(const Tensor& t, const char* op) {
    if (t.rank() != 2) throw DimensionError(fmt::format("{}: expected a matrix, got {}", op, shape_str(t.shape())));
}

template <class F>
Var unary(const Var& x, const char* op, F forward, std::function<double(double x, double y)> deriv) {
    Tensor out(x.shape());
    const auto in = x.value().data();
    auto o = out.data();
    for (std::size_t i = 0; i < in.size(); ++i) o[i] = forward(in[i]);
    return make(std::move(out), {x}, op, [deriv = std::move(deriv)](Node& self) {
        Tensor* gx = in_grad(self, 0);
        if (!gx) return;
        const auto xv = in_value(self, 0).data();
        const auto yv = self.value.data();
        const auto g = self.grad.data();
        auto d = gx->data();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * deriv(xv[i], yv[i]);
    });
}

}  // namespace

Tensor& Node::grad_buffer() {
    if (grad.empty()) grad = Tensor(value.shape());
    return grad;
}

Tensor& Var::mutable_value() const {
    if (!node_->inputs.empty() || node_->backward) throw std::logic_error("mutable_value() on a non-leaf node");
    return node_->value;
}

Var constant(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    return Var(std::move(node));
}

Var parameter(Tensor value) {
    auto node = std::make_shared<Node>();
    node->value = std::move(value);
    node->requires_grad = true;
    node->op = "parameter";
    return Var(std::move(node));
}

void backward(const Var& root) {
    if (root.value().size() != 1) {
        throw DimensionError("backward: root must be a single value, got " + shape_str(root.shape()));
    }
    if (!root.requires_grad()) return;

    // Iterative post-order DFS gives a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<std::pair<Node*, std::size_t>> stack{{root.node(), 0}};
    seen.insert(root.node());
    while (!stack.empty()) {
        auto& [node, next] = stack.back();
        if (next < node->inputs.size()) {
            Node* child = node->inputs[next++].get();
            if (child->requires_grad && seen.insert(child).second) stack.emplace_back(child, 0);
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root.node()->grad_buffer()[0] += 1.0;
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* node = *it;
        if (node->backward && !node->grad.empty()) node->backward(*node);
    }
}

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }
bool grad_enabled() { return t_grad_enabled; }

namespace kink {
void reset() { t_kink = std::numeric_limits<double>::infinity(); }
double min_distance() { return t_kink; }
void note(double distance) { t_kink = std::min(t_kink, distance); }
}  // namespace kink

// ---------------------------------------------------------------- elementwise

Var add(const Var& a, const Var& b) {
    Tensor out = zsar::add(a.value(), b.value());
    return make(std::move(out), {a, b}, "add", [](Node& self) {
        const auto g = self.grad.data();
        for (std::size_t k = 0; k < 2; ++k) {
            if (Tensor* gi = in_grad(self, k)) {
                auto d = gi->data();
                for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
            }
        }
    });
}

Var sub(const Var& a, const Var& b) {
    Tensor out = zsar::sub(a.value(), b.value());
    return make(std::move(out), {a, b}, "sub", [](Node& self) {
        const auto g = self.grad.data();
        if (Tensor* ga = in_grad(self, 0)) {
            auto d = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
        if (Tensor* gb = in_grad(self, 1)) {
            auto d = gb->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    Tensor out = zsar::hadamard(a.value(), b.value());
    return make(std::move(out), {a, b}, "mul", [](Node& self) {
        const auto g = self.grad.data();
        const auto av = in_value(self, 0).data();
        const auto bv = in_value(self, 1).data();
        if (Tensor* ga = in_grad(self, 0)) {
            auto d = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
        }
        if (Tensor* gb = in_grad(self, 1)) {
            auto d = gb->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
        }
    });
}

Var scale(const Var& a, double s) {
    return make(zsar::scale(a.value(), s), {a}, "scale", [s](Node& self) {
        if (Tensor* ga = in_grad(self, 0)) {
            const auto g = self.grad.data();
            auto d = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * s;
        }
    });
}

Var add_scalar(const Var& a, double s) {
    Tensor out = a.value();
    for (auto& v : out.data()) v += s;
    return make(std::move(out), {a}, "add_scalar", [](Node& self) {
        if (Tensor* ga = in_grad(self, 0)) {
            const auto g = self.grad.data();
            auto d = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

Var sigmoid(const Var& x) {
    return unary(
        x, "sigmoid", [](double v) { return zsar::sigmoid(v); }, [](double, double y) { return y * (1.0 - y); });
}

Var tanh(const Var& x) {
    return unary(
        x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Var gelu(const Var& x) {
    static constexpr double k = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr double c = 0.044715;
    return unary(
        x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::tanh(k * (v + c * v * v * v))); },
        [](double v, double) {
            const double t = std::tanh(k * (v + c * v * v * v));
            return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * k * (1.0 + 3.0 * c * v * v);
        });
}

Var log(const Var& x) {
    return unary(
        x, "log", [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

Var clamp(const Var& x, double lo, double hi) {
    if (!(lo <= hi)) throw ParameterError("clamp: lo must not exceed hi");
    Tensor out(x.shape());
    const auto in = x.value().data();
    for (std::size_t i = 0; i < in.size(); ++i) {
        out[i] = std::min(std::max(in[i], lo), hi);
        kink::note(std::min(std::abs(in[i] - lo), std::abs(in[i] - hi)));
    }
    return make(std::move(out), {x}, "clamp", [lo, hi](Node& self) {
        Tensor* gx = in_grad(self, 0);
        if (!gx) return;
        const auto in = in_value(self, 0).data();
        const auto g = self.grad.data();
        auto d = gx->data();
        for (std::size_t i = 0; i < g.size(); ++i) {
            if (in[i] >= lo && in[i] <= hi) d[i] += g[i];
        }
    });
}

// ------------------------------------------------------ linear algebra/layout

Var matmul(const Var& a, const Var& b) {
    Tensor out = zsar::matmul(a.value(), b.value());
    return make(std::move(out), {a, b}, "matmul", [](Node& self) {
        const ConstMatrixView g = matrix_map(std::as_const(self.grad));
        if (Tensor* ga = in_grad(self, 0)) matrix_map(*ga).noalias() += g * matrix_map(in_value(self, 1)).transpose();
        if (Tensor* gb = in_grad(self, 1)) matrix_map(*gb).noalias() += matrix_map(in_value(self, 0)).transpose() * g;
    });
}

Var transpose(const Var& a) {
    return make(zsar::transpose(a.value()), {a}, "transpose", [](Node& self) {
        if (Tensor* ga = in_grad(self, 0)) {
            const Tensor gt = zsar::transpose(self.grad);
            auto d = ga->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += gt[i];
        }
    });
}

Var reshape(const Var& a, Shape shape) {
    return make(a.value().reshaped(std::move(shape)), {a}, "reshape", [](Node& self) {
        if (Tensor* ga = in_grad(self, 0)) {
            const auto g = self.grad.data();
            auto d = ga->data();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

Var add_row_bias(const Var& x, const Var& bias) {
    const std::size_t c = x.value().cols();
    if (bias.value().size() != c) {
        throw DimensionError(fmt::format("add_row_bias: x {} vs bias {}", shape_str(x.shape()), shape_str(bias.shape())));
    }
    Tensor out = x.value();
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t j = 0; j < c; ++j) row[j] += bias.value()[j];
    }
    return make(std::move(out), {x, bias}, "add_row_bias", [](Node& self) {
        const Tensor& g = self.grad;
        if (Tensor* gx = in_grad(self, 0)) {
            auto d = gx->data();
            for (std::size_t i = 0; i < d.size(); ++i) d[i] += g[i];
        }
        if (Tensor* gb = in_grad(self, 1)) {
            for (std::size_t r = 0; r < g.rows(); ++r) {
                auto row = g.row(r);
                for (std::size_t j = 0; j < row.size(); ++j) (*gb)[j] += row[j];
            }
        }
    });
}

Var concat_cols(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    const std::size_t rows = parts[0].value().rows();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.value().rows() != rows) throw DimensionError("concat_cols: row count mismatch");
        total += p.value().cols();
    }
    Tensor out({rows, total});
    std::size_t offset = 0;
    for (const auto& p : parts) {
        const std::size_t c = p.value().cols();
        for (std::size_t r = 0; r < rows; ++r) std::copy_n(p.value().row(r).begin(), c, out.row(r).begin() + offset);
        offset += c;
    }
    return make_many(std::move(out), parts, "concat_cols", [](Node& self) {
        std::size_t offset = 0;
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            const std::size_t c = in_value(self, k).cols();
            if (Tensor* gk = in_grad(self, k)) {
                for (std::size_t r = 0; r < self.grad.rows(); ++r) {
                    auto src = self.grad.row(r).subspan(offset, c);
                    auto dst = gk->row(r);
                    for (std::size_t j = 0; j < c; ++j) dst[j] += src[j];
                }
            }
            offset += c;
        }
    });
}

Var concat_rows(std::span<const Var> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    const std::size_t cols = parts[0].value().cols();
    std::size_t total = 0;
    for (const auto& p : parts) {
        if (p.value().cols() != cols) {
            throw DimensionError(fmt::format("concat_rows: column mismatch {} vs {}", cols, p.value().cols()));
        }
        total += p.value().rows();
    }
    std::vector<double> data;
    data.reserve(total * cols);
    for (const auto& p : parts) data.insert(data.end(), p.value().data().begin(), p.value().data().end());
    return make_many(Tensor({total, cols}, std::move(data)), parts, "concat_rows", [](Node& self) {
        std::size_t offset = 0;
        const auto g = self.grad.data();
        for (std::size_t k = 0; k < self.inputs.size(); ++k) {
            const std::size_t n = in_value(self, k).size();
            if (Tensor* gk = in_grad(self, k)) {
                auto d = gk->data();
                for (std::size_t i = 0; i < n; ++i) d[i] += g[offset + i];
            }
            offset += n;
        }
    });
}

Var slice_rows(const Var& x, std::size_t begin, std::size_t count) {
    const Tensor& xv = x.value();
    if (count == 0 || begin + count > xv.rows()) {
        throw IndexError(fmt::format("slice_rows: [{}, {}) outside {} rows", begin, begin + count, xv.rows()));
    }
    const std::size_t c = xv.cols();
    std::vector<double> data(xv.data().begin() + begin * c, xv.data().begin() + (begin + count) * c);
    return make(Tensor({count, c}, std::move(data)), {x}, "slice_rows", [begin](Node& self) {
        if (Tensor* gx = in_grad(self, 0)) {
            const auto g = self.grad.data();
            auto d = gx->data().subspan(begin * self.value.cols(), g.size());
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
        }
    });
}

Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
    const Tensor& xv = x.value();
    const std::size_t c = xv.cols();
    Tensor out({rows.size(), c});
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i] >= xv.rows()) throw IndexError(fmt::format("gather_rows: row {} of {}", rows[i], xv.rows()));
        std::copy_n(xv.row(rows[i]).begin(), c, out.row(i).begin());
    }
    std::vector<std::size_t> idx(rows.begin(), rows.end());
    return make(std::move(out), {x}, "gather_rows", [idx = std::move(idx)](Node& self) {
        if (Tensor* gx = in_grad(self, 0)) {
            for (std::size_t i = 0; i < idx.size(); ++i) {
                auto src = self.grad.row(i);
                auto dst = gx->row(idx[i]);
                for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j];
            }
        }
    });
}

Var gather_elements(const Var& x, std::span<const std::size_t> flat) {
    const Tensor& xv = x.value();
    Tensor out({flat.size()});
    for (std::size_t i = 0; i < flat.size(); ++i) {
        if (flat[i] >= xv.size()) throw IndexError(fmt::format("gather_elements: index {} of {}", flat[i], xv.size()));
        out[i] = xv[flat[i]];
    }
    std::vector<std::size_t> idx(flat.begin(), flat.end());
    return make(std::move(out), {x}, "gather_elements", [idx = std::move(idx)](Node& self) {
        if (Tensor* gx = in_grad(self, 0)) {
            for (std::size_t i = 0; i < idx.size(); ++i) (*gx)[idx[i]] += self.grad[i];
        }
    });
}

// ----------------------------------------------------------------- reductions

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return make(Tensor::scalar(s), {x}, "sum", [](Node& self) {
        if (Tensor* gx = in_grad(self, 0)) {
            const double g = self.grad[0];
            for (auto& d : gx->data()) d += g;
        }
    });
}

Var mean(const Var& x) { return scale(sum(x), 1.0 / static_cast<double>(x.value().size())); }

Var mean_row_groups(const Var& x, std::size_t group) {
    const Tensor& xv = x.value();
    if (group == 0 || xv.rows() % group != 0) {
        throw DimensionError(fmt::format("mean_row_groups: {} rows not divisible into groups of {}", xv.rows(), group));
    }
    const std::size_t groups = xv.rows() / group, c = xv.cols();
    const double inv = 1.0 / static_cast<double>(group);
    Tensor out({groups, c});
    for (std::size_t gi = 0; gi < groups; ++gi) {
        auto o = out.row(gi);
        for (std::size_t r = 0; r < group; ++r) {
            auto in = xv.row(gi * group + r);
            for (std::size_t j = 0; j < c; ++j) o[j] += in[j];
        }
        for (double& v : o) v *= inv;
    }
    return make(std::move(out), {x}, "mean_row_groups", [group, inv](Node& self) {
        if (Tensor* gx = in_grad(self, 0)) {
            for (std::size_t r = 0; r < gx->rows(); ++r) {
                auto src = self.grad.row(r / group);
                auto dst = gx->row(r);
                for (std::size_t j = 0; j < src.size(); ++j) dst[j] += src[j] * inv;
            }
        }
    });
}

// ---------------------------------------------------- normalization/probability

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    Tensor out = zsar::layer_norm(x.value(), gain.value(), bias.value(), eps);
    return make(std::move(out), {x, gain, bias}, "layer_norm", [eps](Node& self) {
        const Tensor& xv = in_value(self, 0);
        const Tensor& gv = in_value(self, 1);
        Tensor* gx = in_grad(self, 0);
        Tensor* gg = in_grad(self, 1);
        Tensor* gb = in_grad(self, 2);
        const std::size_t c = xv.cols();
        const double n = static_cast<double>(c);
        std::vector<double> xhat(c), dxhat(c);
        for (std::size_t r = 0; r < xv.rows(); ++r) {
            auto in = xv.row(r);
            auto g = self.grad.row(r);
            double mu = 0.0;
            for (double v : in) mu += v;
            mu /= n;
            double var = 0.0;
            for (double v : in) var += (v - mu) * (v - mu);
            var /= n;
            const double rstd = 1.0 / std::sqrt(var + eps);
            double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
            for (std::size_t j = 0; j < c; ++j) {
                xhat[j] = (in[j] - mu) * rstd;
                dxhat[j] = g[j] * gv[j];
                mean_dxhat += dxhat[j];
                mean_dxhat_xhat += dxhat[j] * xhat[j];
                if (gg) (*gg)[j] += g[j] * xhat[j];
                if (gb) (*gb)[j] += g[j];
            }
            mean_dxhat /= n;
            mean_dxhat_xhat /= n;
            if (gx) {
                auto d = gx->row(r);
                for (std::size_t j = 0; j < c; ++j) d[j] += rstd * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
            }
        }
    });
}

Var softmax(const Var& x) {
    return make(zsar::softmax(x.value()), {x}, "softmax", [](Node& self) {
        Tensor* gx = in_grad(self, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            auto y = self.value.row(r);
            auto g = self.grad.row(r);
            auto d = gx->row(r);
            const double s = dot(g, y);
            for (std::size_t j = 0; j < y.size(); ++j) d[j] += y[j] * (g[j] - s);
        }
    });
}

Var block_attention(const Var& q, const Var& k, const Var& v, std::size_t block, double scale) {
    const Tensor& qv = q.value();
    const Tensor& kv = k.value();
    const Tensor& vv = v.value();
    require_matrix(qv, "block_attention");
    if (kv.shape() != qv.shape() || vv.rank() != 2 || vv.dim(0) != qv.dim(0)) {
        throw DimensionError(fmt::format("block_attention: q {}, k {}, v {}", shape_str(qv.shape()),
                                         shape_str(kv.shape()), shape_str(vv.shape())));
    }
    const std::size_t n = qv.dim(0), d = qv.dim(1), dv = vv.dim(1);
    if (block == 0 || n % block != 0) {
        throw DimensionError(fmt::format("block_attention: {} rows do not split into blocks of {}", n, block));
    }
    const std::size_t blocks = n / block;
    // attention weights of every block, stacked: [n x block]
    Tensor attn({n, block});
    Tensor out({n, dv});
    for (std::size_t b = 0; b < blocks; ++b) {
        const std::size_t r0 = b * block;
        auto a = block_map(attn.data().data(), r0, block, block);
        a.noalias() = block_map(qv.data().data(), r0, block, d) * block_map(kv.data().data(), r0, block, d).transpose();
        a *= scale;
        for (std::size_t i = 0; i < block; ++i) {
            auto row = a.row(static_cast<Eigen::Index>(i));
            row = (row.array() - row.maxCoeff()).exp().matrix();
            row /= row.sum();
        }
        block_map(out.data().data(), r0, block, dv).noalias() = a * block_map(vv.data().data(), r0, block, dv);
    }
    return make(std::move(out), {q, k, v}, "block_attention", [attn = std::move(attn), block, blocks, d, dv, scale](Node& self) {
        const double* pq = in_value(self, 0).data().data();
        const double* pk = in_value(self, 1).data().data();
        const double* pv = in_value(self, 2).data().data();
        Tensor* gq = in_grad(self, 0);
        Tensor* gk = in_grad(self, 1);
        Tensor* gv = in_grad(self, 2);
        const double* g = self.grad.data().data();
        RowMatrix ds(block, block);
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::size_t r0 = b * block;
            const auto a = block_map(attn.data().data(), r0, block, block);
            const auto gb = block_map(g, r0, block, dv);
            if (gv) block_map(gv->data().data(), r0, block, dv).noalias() += a.transpose() * gb;
            if (!gq && !gk) continue;
            ds.noalias() = gb * block_map(pv, r0, block, dv).transpose();
            const Eigen::VectorXd inner = (ds.array() * a.array()).rowwise().sum();
            ds = (a.array() * (ds.colwise() - inner).array() * scale).matrix();
            if (gq) block_map(gq->data().data(), r0, block, d).noalias() += ds * block_map(pk, r0, block, d);
            if (gk) block_map(gk->data().data(), r0, block, d).noalias() += ds.transpose() * block_map(pq, r0, block, d);
        }
    });
}

Var log_softmax(const Var& x) {
    const Tensor& xv = x.value();
    Tensor out(xv.shape());
    for (std::size_t r = 0; r < xv.rows(); ++r) {
        auto in = xv.row(r);
        const double mx = *std::max_element(in.begin(), in.end());
        double s = 0.0;
        for (double v : in) s += std::exp(v - mx);
        const double lse = mx + std::log(s);
        auto o = out.row(r);
        for (std::size_t j = 0; j < in.size(); ++j) o[j] = in[j] - lse;
    }
    return make(std::move(out), {x}, "log_softmax", [](Node& self) {
        Tensor* gx = in_grad(self, 0);
        if (!gx) return;
        for (std::size_t r = 0; r < self.value.rows(); ++r) {
            auto y = self.value.row(r);
            auto g = self.grad.row(r);
            auto d = gx->row(r);
            double gs = 0.0;
            for (double v : g) gs += v;
            for (std::size_t j = 0; j < y.size(); ++j) d[j] += g[j] - std::exp(y[j]) * gs;
        }
    });
}

Var cosine_matrix(const Var& a, const Var& b) {
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    if (av.cols() != bv.cols()) {
        throw DimensionError(fmt::format("cosine_matrix: {} vs {}", shape_str(av.shape()), shape_str(bv.shape())));
    }
    const std::size_t n = av.rows(), k = bv.rows();
    std::vector<double> na(n), nb(k);
    for (std::size_t i = 0; i < n; ++i) na[i] = l2_norm(av.row(i));
    for (std::size_t j = 0; j < k; ++j) nb[j] = l2_norm(bv.row(j));
    if (std::any_of(na.begin(), na.end(), [](double v) { return v == 0.0; }) ||
        std::any_of(nb.begin(), nb.end(), [](double v) { return v == 0.0; })) {
        throw DegenerateInputError("cosine_matrix: zero-norm embedding");
    }
    Tensor out({n, k});
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < k; ++j) out.at(i, j) = dot(av.row(i), bv.row(j)) / (na[i] * nb[j]);
    return make(std::move(out), {a, b}, "cosine_matrix",
                [na = std::move(na), nb = std::move(nb)](Node& self) {
                    const Tensor& av = in_value(self, 0);
                    const Tensor& bv = in_value(self, 1);
                    Tensor* ga = in_grad(self, 0);
                    Tensor* gb = in_grad(self, 1);
                    const std::size_t d = av.cols();
                    for (std::size_t i = 0; i < av.rows(); ++i) {
                        for (std::size_t j = 0; j < bv.rows(); ++j) {
                            const double g = self.grad.at(i, j);
                            if (g == 0.0) continue;
                            const double s = self.value.at(i, j);
                            auto ai = av.row(i);
                            auto bj = bv.row(j);
                            if (ga) {
                                auto dst = ga->row(i);
                                for (std::size_t p = 0; p < d; ++p)
                                    dst[p] += g * (bj[p] / (na[i] * nb[j]) - s * ai[p] / (na[i] * na[i]));
                            }
                            if (gb) {
                                auto dst = gb->row(j);
                                for (std::size_t p = 0; p < d; ++p)
                                    dst[p] += g * (ai[p] / (na[i] * nb[j]) - s * bj[p] / (nb[j] * nb[j]));
                            }
                        }
                    }
                });
}

Var cross_entropy_probs(const Var& probs, const Tensor& targets) {
    require_same_shape(probs.value(), targets, "cross_entropy_probs");
    const Tensor& p = probs.value();
    const double inv_b = 1.0 / static_cast<double>(p.rows());
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (targets[i] != 0.0) loss -= targets[i] * std::log(p[i]);
    }
    return make(Tensor::scalar(loss * inv_b), {probs}, "cross_entropy",
                [targets, inv_b](Node& self) {
                    Tensor* gp = in_grad(self, 0);
                    if (!gp) return;
                    const Tensor& p = in_value(self, 0);
                    const double g = self.grad[0];
                    for (std::size_t i = 0; i < p.size(); ++i) {
                        if (targets[i] != 0.0) (*gp)[i] -= g * targets[i] / p[i] * inv_b;
                    }
                });
}

// ---------------------------------------------------------- motion statistics

Var deviation_from_mean(const Var& e) {
    const Tensor& ev = e.value();
    require_matrix(ev, "deviation_from_mean");
    const std::size_t t = ev.rows(), c = ev.cols();
    const Tensor mean = column_mean(ev);
    std::vector<double> mu(mean.data().begin(), mean.data().end());
    Tensor out({t});
    for (std::size_t s = 0; s < t; ++s) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) acc += (ev.at(s, j) - mu[j]) * (ev.at(s, j) - mu[j]);
        out[s] = acc;
    }
    return make(std::move(out), {e}, "deviation_from_mean", [mu = std::move(mu)](Node& self) {
        Tensor* ge = in_grad(self, 0);
        if (!ge) return;
        const Tensor& ev = in_value(self, 0);
        const std::size_t t = ev.rows(), c = ev.cols();
        // d v_t / d e_s = 2 (e_t - mu)(delta_ts - 1/T)
        std::vector<double> total(c, 0.0);
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t j = 0; j < c; ++j) total[j] += self.grad[s] * 2.0 * (ev.at(s, j) - mu[j]);
        const double inv_t = 1.0 / static_cast<double>(t);
        for (std::size_t s = 0; s < t; ++s)
            for (std::size_t j = 0; j < c; ++j)
                ge->at(s, j) += self.grad[s] * 2.0 * (ev.at(s, j) - mu[j]) - total[j] * inv_t;
    });
}

namespace {
// ||e_hi - e_lo|| and its unit direction (zero when the norm is zero).
double row_distance(const Tensor& e, std::size_t hi, std::size_t lo) {
    double acc = 0.0;
    for (std::size_t j = 0; j < e.cols(); ++j) acc += (e.at(hi, j) - e.at(lo, j)) * (e.at(hi, j) - e.at(lo, j));
    return std::sqrt(acc);
}

// (hi, lo, factor) triples defining c_t = factor * ||e_hi - e_lo||.
struct DiffTerm {
    std::size_t hi, lo;
    double factor;
};

DiffTerm central_term(std::size_t t, std::size_t n) {
    if (t == 0) return {1, 0, 1.0};
    if (t == n - 1) return {n - 1, n - 2, 1.0};
    return {t + 1, t - 1, 0.5};
}
}  // namespace

Var central_difference(const Var& e) {
    const Tensor& ev = e.value();
    require_matrix(ev, "central_difference");
    const std::size_t t = ev.rows();
    if (t < 2) throw DegenerateInputError(fmt::format("central_difference: need at least 2 frames, got {}", t));
    Tensor out({t});
    for (std::size_t s = 0; s < t; ++s) {
        const DiffTerm term = central_term(s, t);
        out[s] = term.factor * row_distance(ev, term.hi, term.lo);
    }
    return make(std::move(out), {e}, "central_difference", [](Node& self) {
        Tensor* ge = in_grad(self, 0);
        if (!ge) return;
        const Tensor& ev = in_value(self, 0);
        const std::size_t t = ev.rows(), c = ev.cols();
        for (std::size_t s = 0; s < t; ++s) {
            const DiffTerm term = central_term(s, t);
            const double norm = row_distance(ev, term.hi, term.lo);
            if (norm == 0.0) continue;  // subgradient 0 at coincident frames
            const double w = self.grad[s] * term.factor / norm;
            for (std::size_t j = 0; j < c; ++j) {
                const double diff = ev.at(term.hi, j) - ev.at(term.lo, j);
                ge->at(term.hi, j) += w * diff;
                ge->at(term.lo, j) -= w * diff;
            }
        }
    });
}

Var minmax_normalize(const Var& x) {
    const auto in = x.value().data();
    const auto [mn_it, mx_it] = std::minmax_element(in.begin(), in.end());
    const std::size_t imin = static_cast<std::size_t>(mn_it - in.begin());
    const std::size_t imax = static_cast<std::size_t>(mx_it - in.begin());
    const double lo = *mn_it, hi = *mx_it, range = hi - lo;

    double gap = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < in.size(); ++i) {
        if (i != imin) gap = std::min(gap, in[i] - lo);
        if (i != imax) gap = std::min(gap, hi - in[i]);
    }
    kink::note(gap);

    Tensor out(x.shape());
    if (range > 0.0) {
        for (std::size_t i = 0; i < in.size(); ++i) out[i] = (in[i] - lo) / range;
    }
    return make(std::move(out), {x}, "minmax_normalize", [imin, imax, range](Node& self) {
        Tensor* gx = in_grad(self, 0);
        if (!gx || range == 0.0) return;
        // y_t = (x_t - x_min)/r; dy_t/dx_s = (d_ts - d_s,min)/r - y_t (d_s,max - d_s,min)/r
        const auto g = self.grad.data();
        const auto y = self.value.data();
        double gsum = 0.0, gy = 0.0;
        for (std::size_t t = 0; t < g.size(); ++t) {
            gsum += g[t];
            gy += g[t] * y[t];
        }
        auto d = gx->data();
        for (std::size_t s = 0; s < g.size(); ++s) d[s] += g[s] / range;
        d[imin] += (-gsum + gy) / range;
        d[imax] += -gy / range;
    });
}

Var interpolate_rows(const Var& x, const Var& idx) {
    const Tensor& xv = x.value();
    require_matrix(xv, "interpolate_rows");
    const std::size_t t = xv.rows(), f = xv.cols();
    if (t < 2) throw DegenerateInputError("interpolate_rows: need at least 2 rows");
    const auto pos = idx.value().data();
    const double tmax = static_cast<double>(t);
    Tensor out({pos.size(), f});
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const double p = pos[i];
        if (!(p >= 1.0 && p <= tmax)) {
            throw IndexError(fmt::format("interpolate_rows: position {} outside [1, {}]", p, t));
        }
        const double fl = std::floor(p);
        auto o = out.row(i);
        if (fl >= tmax) {
            kink::note(0.0);
            std::copy_n(xv.row(t - 1).begin(), f, o.begin());
            continue;
        }
        const double gamma = p - fl;
        kink::note(std::min(gamma, 1.0 - gamma));
        const auto a = xv.row(static_cast<std::size_t>(fl) - 1);
        const auto b = xv.row(static_cast<std::size_t>(fl));
        for (std::size_t j = 0; j < f; ++j) {
            const double v = (1.0 - gamma) * a[j] + gamma * b[j];
            o[j] = std::clamp(v, std::min(a[j], b[j]), std::max(a[j], b[j]));
        }
    }
    return make(std::move(out), {x, idx}, "interpolate_rows", [](Node& self) {
        const Tensor& xv = in_value(self, 0);
        const auto pos = in_value(self, 1).data();
        Tensor* gx = in_grad(self, 0);
        Tensor* gi = in_grad(self, 1);
        const std::size_t t = xv.rows();
        for (std::size_t i = 0; i < pos.size(); ++i) {
            const double fl = std::floor(pos[i]);
            const auto g = self.grad.row(i);
            std::size_t lo, hi;
            double gamma;
            if (fl >= static_cast<double>(t)) {
                lo = t - 2;
                hi = t - 1;
                gamma = 1.0;
            } else {
                lo = static_cast<std::size_t>(fl) - 1;
                hi = lo + 1;
                gamma = pos[i] - fl;
            }
            if (gx) {
                auto da = gx->row(lo);
                auto db = gx->row(hi);
                for (std::size_t j = 0; j < g.size(); ++j) {
                    da[j] += (1.0 - gamma) * g[j];
                    db[j] += gamma * g[j];
                }
            }
            if (gi) {
                double s = 0.0;
                const auto a = xv.row(lo);
                const auto b = xv.row(hi);
                for (std::size_t j = 0; j < g.size(); ++j) s += g[j] * (b[j] - a[j]);
                (*gi)[i] += s;
            }
        }
    });
}

}  // namespace zsar::ag
