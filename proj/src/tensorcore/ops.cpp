// Copyright 2026 The acd Authors
// SPDX-License-Identifier: Apache-2.0

#include "acd/ops.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace acd {

namespace {

using detail::Node;
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

[[noreturn]] void shape_fail(const char* op, const Shape& a, const Shape& b, const std::string& why = "") {
    std::string msg = std::string(op) + ": shape mismatch " + to_string(a) + " vs " + to_string(b);
    if (!why.empty()) msg += " (" + why + ")";
    throw ShapeError(msg);
}

[[noreturn]] void shape_fail(const char* op, const Shape& a, const std::string& why) {
    throw ShapeError(std::string(op) + ": invalid shape " + to_string(a) + " (" + why + ")");
}

Tensor make_op(const char* op, Shape shape, std::vector<double> value, std::initializer_list<Tensor> inputs,
               std::function<void(Node&)> bw) {
    Graph& g = Graph::local();
    if (g.precision() == Precision::f32) {
        for (double& v : value) v = round_to(v, Precision::f32);
    }
    for (double v : value) {
        if (!std::isfinite(v)) {
            throw NonFiniteError(std::string(op) + ": non-finite value in output of shape " + to_string(shape));
        }
    }
    auto n = std::make_shared<Node>();
    n->op = op;
    n->shape = std::move(shape);
    n->value = std::move(value);
    bool need = false;
    if (g.grad_enabled()) {
        for (const Tensor& t : inputs) need = need || t.requires_grad();
    }
    if (need) {
        n->requires_grad = true;
        for (const Tensor& t : inputs) n->parents.push_back(t.node());
        n->backward = std::move(bw);
        g.record(n);
    }
    return Tensor(std::move(n));
}

// Parent grad buffer, or nullptr when the parent does not take gradient.
double* pgrad(Node& self, std::size_t i) {
    Node& p = *self.parents[i];
    if (!p.requires_grad) return nullptr;
    p.ensure_grad();
    return p.grad.data();
}

struct AxisSplit {
    std::size_t outer = 1, len = 1, inner = 1;
};

AxisSplit split_axis(const Shape& s, std::size_t axis, const char* op) {
    if (axis >= s.size()) {
        shape_fail(op, s, "axis " + std::to_string(axis) + " out of range");
    }
    AxisSplit r;
    for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
    r.len = s[axis];
    for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
    return r;
}

// Index maps from each output element to its source element in a and b.
struct Broadcast {
    Shape out;
    bool same = false;
    std::vector<std::size_t> ia, ib;
};

Broadcast broadcast(const char* op, const Shape& a, const Shape& b) {
    Broadcast r;
    if (a == b) {
        r.out = a;
        r.same = true;
        return r;
    }
    std::size_t rank = std::max(a.size(), b.size());
    Shape pa(rank, 1), pb(rank, 1);
    std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
    std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
    r.out.resize(rank);
    for (std::size_t i = 0; i < rank; ++i) {
        if (pa[i] != pb[i] && pa[i] != 1 && pb[i] != 1) shape_fail(op, a, b, "not broadcastable");
        r.out[i] = std::max(pa[i], pb[i]);
    }
    std::vector<std::size_t> sa(rank), sb(rank);
    std::size_t acc_a = 1, acc_b = 1;
    for (std::size_t i = rank; i-- > 0;) {
        sa[i] = pa[i] == 1 ? 0 : acc_a;
        sb[i] = pb[i] == 1 ? 0 : acc_b;
        acc_a *= pa[i];
        acc_b *= pb[i];
    }
    std::size_t n = shape_numel(r.out);
    r.ia.resize(n);
    r.ib.resize(n);
    std::vector<std::size_t> idx(rank, 0);
    std::size_t oa = 0, ob = 0;
    for (std::size_t o = 0; o < n; ++o) {
        r.ia[o] = oa;
        r.ib[o] = ob;
        for (std::size_t d = rank; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < r.out[d]) break;
            oa -= sa[d] * idx[d];
            ob -= sb[d] * idx[d];
            idx[d] = 0;
        }
    }
    return r;
}

enum class Binary { add, sub, mul };

Tensor binary(const char* op, Binary kind, const Tensor& a, const Tensor& b) {
    auto bc = std::make_shared<Broadcast>(broadcast(op, a.shape(), b.shape()));
    auto av = a.values();
    auto bv = b.values();
    std::size_t n = shape_numel(bc->out);
    std::vector<double> out(n);
    for (std::size_t o = 0; o < n; ++o) {
        double x = av[bc->same ? o : bc->ia[o]];
        double y = bv[bc->same ? o : bc->ib[o]];
        switch (kind) {
            case Binary::add: out[o] = x + y; break;
            case Binary::sub: out[o] = x - y; break;
            case Binary::mul: out[o] = x * y; break;
        }
    }
    Shape shape = bc->out;
    return make_op(op, std::move(shape), std::move(out), {a, b}, [bc, kind](Node& self) {
        const auto& g = self.grad;
        const auto& x = self.parents[0]->value;
        const auto& y = self.parents[1]->value;
        double* ga = pgrad(self, 0);
        double* gb = pgrad(self, 1);
        for (std::size_t o = 0; o < g.size(); ++o) {
            std::size_t i = bc->same ? o : bc->ia[o];
            std::size_t j = bc->same ? o : bc->ib[o];
            switch (kind) {
                case Binary::add:
                    if (ga) ga[i] += g[o];
                    if (gb) gb[j] += g[o];
                    break;
                case Binary::sub:
                    if (ga) ga[i] += g[o];
                    if (gb) gb[j] -= g[o];
                    break;
                case Binary::mul:
                    if (ga) ga[i] += g[o] * y[j];
                    if (gb) gb[j] += g[o] * x[i];
                    break;
            }
        }
    });
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", Binary::add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", Binary::sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", Binary::mul, a, b); }

Tensor scale(const Tensor& x, double s) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] * s;
    return make_op("scale", x.shape(), std::move(out), {x}, [s](Node& self) {
        if (double* gx = pgrad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i] * s;
        }
    });
}

Tensor add_scalar(const Tensor& x, double c) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] + c;
    return make_op("add_scalar", x.shape(), std::move(out), {x}, [](Node& self) {
        if (double* gx = pgrad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
    });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    const Shape& sa = a.shape();
    const Shape& sb = b.shape();
    if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
        shape_fail("matmul", sa, sb, "expected [m,k] x [k,n]");
    }
    const auto m = static_cast<Eigen::Index>(sa[0]);
    const auto k = static_cast<Eigen::Index>(sa[1]);
    const auto n = static_cast<Eigen::Index>(sb[1]);
    std::vector<double> out(static_cast<std::size_t>(m * n));
    Eigen::Map<const RowMat> A(a.values().data(), m, k);
    Eigen::Map<const RowMat> B(b.values().data(), k, n);
    Eigen::Map<RowMat> C(out.data(), m, n);
    C.noalias() = A * B;
    return make_op("matmul", Shape{sa[0], sb[1]}, std::move(out), {a, b}, [m, k, n](Node& self) {
        Eigen::Map<const RowMat> G(self.grad.data(), m, n);
        if (double* ga = pgrad(self, 0)) {
            Eigen::Map<const RowMat> B(self.parents[1]->value.data(), k, n);
            Eigen::Map<RowMat> GA(ga, m, k);
            GA.noalias() += G * B.transpose();
        }
        if (double* gb = pgrad(self, 1)) {
            Eigen::Map<const RowMat> A(self.parents[0]->value.data(), m, k);
            Eigen::Map<RowMat> GB(gb, k, n);
            GB.noalias() += A.transpose() * G;
        }
    });
}

Tensor transpose(const Tensor& x) {
    const Shape& s = x.shape();
    if (s.size() != 2) shape_fail("transpose", s, "expected 2-D");
    std::size_t r = s[0], c = s[1];
    auto xv = x.values();
    std::vector<double> out(r * c);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j * r + i] = xv[i * c + j];
    return make_op("transpose", Shape{c, r}, std::move(out), {x}, [r, c](Node& self) {
        if (double* gx = pgrad(self, 0)) {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
        }
    });
}

Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.numel()) shape_fail("reshape", x.shape(), shape, "element count differs");
    for (std::size_t e : shape) {
        if (e == 0) shape_fail("reshape", shape, "zero extent");
    }
    auto xv = x.values();
    std::vector<double> out(xv.begin(), xv.end());
    return make_op("reshape", std::move(shape), std::move(out), {x}, [](Node& self) {
        if (double* gx = pgrad(self, 0)) {
            for (std::size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
        }
    });
}

Tensor concat(std::span<const Tensor> parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const Shape& s0 = parts[0].shape();
    AxisSplit base = split_axis(s0, axis, "concat");
    std::vector<std::size_t> lens;
    std::size_t total = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.size() != s0.size()) shape_fail("concat", s0, s, "rank differs");
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i != axis && s[i] != s0[i]) shape_fail("concat", s0, s, "non-concat extent differs");
        }
        lens.push_back(s[axis]);
        total += s[axis];
    }
    Shape out_shape = s0;
    out_shape[axis] = total;
    std::vector<double> out(shape_numel(out_shape));
    std::size_t inner = base.inner;
    for (std::size_t o = 0; o < base.outer; ++o) {
        std::size_t offset = 0;
        for (std::size_t p = 0; p < parts.size(); ++p) {
            auto pv = parts[p].values();
            std::size_t chunk = lens[p] * inner;
            std::copy_n(pv.begin() + static_cast<std::ptrdiff_t>(o * chunk), chunk,
                        out.begin() + static_cast<std::ptrdiff_t>((o * total + offset) * inner));
            offset += lens[p];
        }
    }
    // make_op takes an initializer_list; build the node by hand for a variable arity.
    Graph& g = Graph::local();
    if (g.precision() == Precision::f32) {
        for (double& v : out) v = round_to(v, Precision::f32);
    }
    auto n = std::make_shared<Node>();
    n->op = "concat";
    n->shape = std::move(out_shape);
    n->value = std::move(out);
    bool need = false;
    if (g.grad_enabled()) {
        for (const Tensor& p : parts) need = need || p.requires_grad();
    }
    if (need) {
        n->requires_grad = true;
        for (const Tensor& p : parts) n->parents.push_back(p.node());
        std::size_t outer = base.outer;
        n->backward = [lens, total, outer, inner](Node& self) {
            for (std::size_t p = 0; p < lens.size(); ++p) {
                double* gp = pgrad(self, p);
                if (!gp) continue;
                std::size_t offset = std::accumulate(lens.begin(), lens.begin() + static_cast<std::ptrdiff_t>(p),
                                                     std::size_t{0});
                std::size_t chunk = lens[p] * inner;
                for (std::size_t o = 0; o < outer; ++o) {
                    const double* src = self.grad.data() + (o * total + offset) * inner;
                    double* dst = gp + o * chunk;
                    for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
                }
            }
        };
        g.record(n);
    }
    return Tensor(std::move(n));
}

std::vector<Tensor> split(const Tensor& x, std::size_t parts, std::size_t axis) {
    AxisSplit s = split_axis(x.shape(), axis, "split");
    if (parts == 0 || s.len % parts != 0) {
        shape_fail("split", x.shape(), "axis " + std::to_string(axis) + " not divisible into " +
                                           std::to_string(parts) + " parts");
    }
    std::size_t piece = s.len / parts;
    std::vector<Tensor> result;
    auto xv = x.values();
    for (std::size_t p = 0; p < parts; ++p) {
        Shape shape = x.shape();
        shape[axis] = piece;
        std::vector<double> out(s.outer * piece * s.inner);
        std::size_t chunk = piece * s.inner;
        for (std::size_t o = 0; o < s.outer; ++o) {
            std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>((o * s.len + p * piece) * s.inner), chunk,
                        out.begin() + static_cast<std::ptrdiff_t>(o * chunk));
        }
        result.push_back(make_op("split", std::move(shape), std::move(out), {x}, [s, p, piece](Node& self) {
            double* gx = pgrad(self, 0);
            if (!gx) return;
            std::size_t chunk = piece * s.inner;
            for (std::size_t o = 0; o < s.outer; ++o) {
                double* dst = gx + (o * s.len + p * piece) * s.inner;
                const double* src = self.grad.data() + o * chunk;
                for (std::size_t i = 0; i < chunk; ++i) dst[i] += src[i];
            }
        }));
    }
    return result;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
    AxisSplit s = split_axis(x.shape(), axis, "softmax");
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            std::size_t base = o * s.len * s.inner + in;
            double mx = xv[base];
            for (std::size_t i = 1; i < s.len; ++i) mx = std::max(mx, xv[base + i * s.inner]);
            double z = 0.0;
            for (std::size_t i = 0; i < s.len; ++i) {
                double e = std::exp(xv[base + i * s.inner] - mx);
                out[base + i * s.inner] = e;
                z += e;
            }
            for (std::size_t i = 0; i < s.len; ++i) out[base + i * s.inner] /= z;
        }
    }
    return make_op("softmax", x.shape(), std::move(out), {x}, [s](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        const auto& y = self.value;
        const auto& g = self.grad;
        for (std::size_t o = 0; o < s.outer; ++o) {
            for (std::size_t in = 0; in < s.inner; ++in) {
                std::size_t base = o * s.len * s.inner + in;
                double dot = 0.0;
                for (std::size_t i = 0; i < s.len; ++i) dot += g[base + i * s.inner] * y[base + i * s.inner];
                for (std::size_t i = 0; i < s.len; ++i) {
                    std::size_t k = base + i * s.inner;
                    gx[k] += y[k] * (g[k] - dot);
                }
            }
        }
    });
}

namespace {

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, double factor) {
    AxisSplit s = split_axis(x.shape(), axis, op);
    Shape shape = x.shape();
    shape.erase(shape.begin() + static_cast<std::ptrdiff_t>(axis));
    if (shape.empty()) shape = {1};
    auto xv = x.values();
    std::vector<double> out(s.outer * s.inner, 0.0);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < s.len; ++i)
            for (std::size_t in = 0; in < s.inner; ++in)
                out[o * s.inner + in] += xv[(o * s.len + i) * s.inner + in];
    for (double& v : out) v *= factor;
    return make_op(op, std::move(shape), std::move(out), {x}, [s, factor](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < s.len; ++i)
                for (std::size_t in = 0; in < s.inner; ++in)
                    gx[(o * s.len + i) * s.inner + in] += self.grad[o * s.inner + in] * factor;
    });
}

Tensor reduce_all(const char* op, const Tensor& x, double factor) {
    auto xv = x.values();
    double acc = 0.0;
    for (double v : xv) acc += v;
    return make_op(op, Shape{1}, std::vector<double>{acc * factor}, {x}, [factor](Node& self) {
        if (double* gx = pgrad(self, 0)) {
            std::size_t n = self.parents[0]->value.size();
            for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0] * factor;
        }
    });
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum", x, axis, 1.0); }

Tensor mean(const Tensor& x, std::size_t axis) {
    std::size_t len = x.dim(axis);
    return reduce_axis("mean", x, axis, 1.0 / static_cast<double>(len));
}

Tensor sum_all(const Tensor& x) { return reduce_all("sum_all", x, 1.0); }

Tensor mean_all(const Tensor& x) { return reduce_all("mean_all", x, 1.0 / static_cast<double>(x.numel())); }

Tensor mse(const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_fail("mse", a.shape(), b.shape());
    auto av = a.values();
    auto bv = b.values();
    double acc = 0.0;
    for (std::size_t i = 0; i < av.size(); ++i) {
        double d = av[i] - bv[i];
        acc += d * d;
    }
    double inv_n = 1.0 / static_cast<double>(av.size());
    return make_op("mse", Shape{1}, std::vector<double>{acc * inv_n}, {a, b}, [inv_n](Node& self) {
        const auto& x = self.parents[0]->value;
        const auto& y = self.parents[1]->value;
        double g = self.grad[0] * 2.0 * inv_n;
        double* ga = pgrad(self, 0);
        double* gb = pgrad(self, 1);
        for (std::size_t i = 0; i < x.size(); ++i) {
            double d = (x[i] - y[i]) * g;
            if (ga) ga[i] += d;
            if (gb) gb[i] -= d;
        }
    });
}

Tensor layer_norm(const Tensor& x, std::size_t axis, const Tensor& gain, const Tensor& bias, double eps) {
    AxisSplit s = split_axis(x.shape(), axis, "layer_norm");
    const Shape param_shape{s.len};
    if (gain.defined() && gain.shape() != param_shape) shape_fail("layer_norm", x.shape(), gain.shape(), "gain");
    if (bias.defined() && bias.shape() != param_shape) shape_fail("layer_norm", x.shape(), bias.shape(), "bias");
    auto xv = x.values();
    std::vector<double> out(xv.size());
    // Normalized values and inverse std are kept for backward.
    auto xhat = std::make_shared<std::vector<double>>(xv.size());
    auto rstd = std::make_shared<std::vector<double>>(s.outer * s.inner);
    const double inv_len = 1.0 / static_cast<double>(s.len);
    for (std::size_t o = 0; o < s.outer; ++o) {
        for (std::size_t in = 0; in < s.inner; ++in) {
            std::size_t base = o * s.len * s.inner + in;
            double mu = 0.0;
            for (std::size_t i = 0; i < s.len; ++i) mu += xv[base + i * s.inner];
            mu *= inv_len;
            double var = 0.0;
            for (std::size_t i = 0; i < s.len; ++i) {
                double d = xv[base + i * s.inner] - mu;
                var += d * d;
            }
            var *= inv_len;
            double r = 1.0 / std::sqrt(var + eps);
            (*rstd)[o * s.inner + in] = r;
            for (std::size_t i = 0; i < s.len; ++i) {
                std::size_t k = base + i * s.inner;
                double h = (xv[k] - mu) * r;
                (*xhat)[k] = h;
                double y = h;
                if (gain.defined()) y *= gain[i];
                if (bias.defined()) y += bias[i];
                out[k] = y;
            }
        }
    }
    const bool has_gain = gain.defined();
    const bool has_bias = bias.defined();
    // Unused slots get the input itself so the parent list stays positional.
    Tensor g_in = has_gain ? gain : x;
    Tensor b_in = has_bias ? bias : x;
    return make_op("layer_norm", x.shape(), std::move(out), {x, g_in, b_in},
                   [s, xhat, rstd, has_gain, has_bias, inv_len](Node& self) {
                       const auto& g = self.grad;
                       double* gx = pgrad(self, 0);
                       double* gg = has_gain ? pgrad(self, 1) : nullptr;
                       double* gb = has_bias ? pgrad(self, 2) : nullptr;
                       const double* gain_v = has_gain ? self.parents[1]->value.data() : nullptr;
                       for (std::size_t o = 0; o < s.outer; ++o) {
                           for (std::size_t in = 0; in < s.inner; ++in) {
                               std::size_t base = o * s.len * s.inner + in;
                               double m1 = 0.0, m2 = 0.0;
                               for (std::size_t i = 0; i < s.len; ++i) {
                                   std::size_t k = base + i * s.inner;
                                   double dh = g[k] * (gain_v ? gain_v[i] : 1.0);
                                   m1 += dh;
                                   m2 += dh * (*xhat)[k];
                                   if (gg) gg[i] += g[k] * (*xhat)[k];
                                   if (gb) gb[i] += g[k];
                               }
                               if (!gx) continue;
                               m1 *= inv_len;
                               m2 *= inv_len;
                               double r = (*rstd)[o * s.inner + in];
                               for (std::size_t i = 0; i < s.len; ++i) {
                                   std::size_t k = base + i * s.inner;
                                   double dh = g[k] * (gain_v ? gain_v[i] : 1.0);
                                   gx[k] += r * (dh - m1 - (*xhat)[k] * m2);
                               }
                           }
                       }
                   });
}

Tensor gelu(const Tensor& x) {
    constexpr double c = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double a = 0.044715;
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) {
        double v = xv[i];
        out[i] = 0.5 * v * (1.0 + std::tanh(c * (v + a * v * v * v)));
    }
    return make_op("gelu", x.shape(), std::move(out), {x}, [](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        const auto& xs = self.parents[0]->value;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double v = xs[i];
            double u = c * (v + a * v * v * v);
            double th = std::tanh(u);
            double du = c * (1.0 + 3.0 * a * v * v);
            double d = 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
            gx[i] += self.grad[i] * d;
        }
    });
}

Tensor silu(const Tensor& x) {
    auto xv = x.values();
    std::vector<double> out(xv.size());
    for (std::size_t i = 0; i < xv.size(); ++i) out[i] = xv[i] / (1.0 + std::exp(-xv[i]));
    return make_op("silu", x.shape(), std::move(out), {x}, [](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        const auto& xs = self.parents[0]->value;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            double sg = 1.0 / (1.0 + std::exp(-xs[i]));
            gx[i] += self.grad[i] * sg * (1.0 + xs[i] * (1.0 - sg));
        }
    });
}

Tensor embedding(const Tensor& table, std::span<const int> ids, const Shape& ids_shape,
                 std::optional<int> padding_idx) {
    const Shape& ts = table.shape();
    if (ts.size() != 2) shape_fail("embedding", ts, "table must be [V,D]");
    if (shape_numel(ids_shape) != ids.size()) {
        throw ShapeError("embedding: ids shape " + to_string(ids_shape) + " does not match " +
                         std::to_string(ids.size()) + " ids");
    }
    const std::size_t vocab = ts[0], width = ts[1];
    auto tv = table.values();
    std::vector<double> out(ids.size() * width, 0.0);
    std::vector<int> id_copy(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i) {
        int id = ids[i];
        if (padding_idx && id == *padding_idx) continue;
        if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
            throw std::out_of_range("embedding: id " + std::to_string(id) + " outside table of " +
                                    std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(id) * width), width,
                    out.begin() + static_cast<std::ptrdiff_t>(i * width));
    }
    Shape shape = ids_shape;
    shape.push_back(width);
    return make_op("embedding", std::move(shape), std::move(out), {table},
                   [id_copy = std::move(id_copy), width, padding_idx](Node& self) {
                       double* gt = pgrad(self, 0);
                       if (!gt) return;
                       for (std::size_t i = 0; i < id_copy.size(); ++i) {
                           int id = id_copy[i];
                           if (padding_idx && id == *padding_idx) continue;
                           double* dst = gt + static_cast<std::size_t>(id) * width;
                           const double* src = self.grad.data() + i * width;
                           for (std::size_t k = 0; k < width; ++k) dst[k] += src[k];
                       }
                   });
}

Tensor avg_pool(const Tensor& x, std::size_t axis, std::size_t stride) {
    AxisSplit s = split_axis(x.shape(), axis, "avg_pool");
    if (stride == 0 || s.len % stride != 0) {
        shape_fail("avg_pool", x.shape(),
                   "axis " + std::to_string(axis) + " not divisible by stride " + std::to_string(stride));
    }
    std::size_t out_len = s.len / stride;
    Shape shape = x.shape();
    shape[axis] = out_len;
    auto xv = x.values();
    std::vector<double> out(s.outer * out_len * s.inner, 0.0);
    const double inv = 1.0 / static_cast<double>(stride);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < out_len; ++i)
            for (std::size_t in = 0; in < s.inner; ++in) {
                double acc = 0.0;
                for (std::size_t k = 0; k < stride; ++k) acc += xv[(o * s.len + i * stride + k) * s.inner + in];
                out[(o * out_len + i) * s.inner + in] = acc * inv;
            }
    return make_op("avg_pool", std::move(shape), std::move(out), {x}, [s, stride, out_len, inv](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < out_len; ++i)
                for (std::size_t in = 0; in < s.inner; ++in) {
                    double g = self.grad[(o * out_len + i) * s.inner + in] * inv;
                    for (std::size_t k = 0; k < stride; ++k) gx[(o * s.len + i * stride + k) * s.inner + in] += g;
                }
    });
}

namespace {

Tensor nearest_axis(const Tensor& x, std::size_t axis, std::size_t factor) {
    AxisSplit s = split_axis(x.shape(), axis, "nearest_downsample");
    if (factor == 0 || s.len % factor != 0) {
        shape_fail("nearest_downsample", x.shape(),
                   "axis " + std::to_string(axis) + " not divisible by factor " + std::to_string(factor));
    }
    std::size_t out_len = s.len / factor;
    Shape shape = x.shape();
    shape[axis] = out_len;
    auto xv = x.values();
    std::vector<double> out(s.outer * out_len * s.inner);
    for (std::size_t o = 0; o < s.outer; ++o)
        for (std::size_t i = 0; i < out_len; ++i)
            for (std::size_t in = 0; in < s.inner; ++in)
                out[(o * out_len + i) * s.inner + in] = xv[(o * s.len + i * factor) * s.inner + in];
    return make_op("nearest_downsample", std::move(shape), std::move(out), {x}, [s, factor, out_len](Node& self) {
        double* gx = pgrad(self, 0);
        if (!gx) return;
        for (std::size_t o = 0; o < s.outer; ++o)
            for (std::size_t i = 0; i < out_len; ++i)
                for (std::size_t in = 0; in < s.inner; ++in)
                    gx[(o * s.len + i * factor) * s.inner + in] += self.grad[(o * out_len + i) * s.inner + in];
    });
}

}  // namespace

Tensor nearest_downsample(const Tensor& x, std::span<const std::size_t> axes, std::size_t factor) {
    Tensor y = x;
    for (std::size_t axis : axes) y = nearest_axis(y, axis, factor);
    return y;
}

}  // namespace acd
