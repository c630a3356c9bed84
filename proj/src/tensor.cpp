#include "netdyn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

namespace netdyn {

std::string shape_str(const std::vector<std::size_t>& shape) {
    std::ostringstream out;
    out << "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out << ", ";
        out << shape[i];
    }
    out << "]";
    return out.str();
}

namespace {

void check_finite(const Tensor& t, const char* op) {
    for (double v : t.vec()) {
        if (!std::isfinite(v)) {
            throw NumericError(std::string(op) + ": non-finite value in output");
        }
    }
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ShapeError(std::string(op) + ": incompatible shapes " + shape_str(a.shape()) + " and " +
                     shape_str(b.shape()));
}

bool should_track(Tape* tape, const Tensor& a) { return tape != nullptr && a.tracked(); }
bool should_track(Tape* tape, const Tensor& a, const Tensor& b) {
    return tape != nullptr && (a.tracked() || b.tracked());
}

void axpy(std::vector<double>& acc, const std::vector<double>& g, double s = 1.0) {
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

// Decompose `shape` around `axis` into [outer, d, inner] extents.
void axis_split(const std::vector<std::size_t>& shape, std::size_t axis, std::size_t& outer,
                std::size_t& d, std::size_t& inner) {
    outer = 1;
    inner = 1;
    for (std::size_t k = 0; k < axis; ++k) outer *= shape[k];
    d = shape[axis];
    for (std::size_t k = axis + 1; k < shape.size(); ++k) inner *= shape[k];
}

// C[m,n] (+)= op(A) * op(B); transposed operands are stored [k,m] / [n,k].
void matmul_kernel(const double* a, const double* b, double* c, std::size_t m, std::size_t k,
                   std::size_t n, bool ta, bool tb, bool accumulate) {
    if (!accumulate) std::fill(c, c + m * n, 0.0);
    if (!ta && !tb) {
        for (std::size_t i = 0; i < m; ++i) {
            double* crow = c + i * n;
            const double* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const double av = arow[p];
                const double* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else if (!ta && tb) {
        for (std::size_t i = 0; i < m; ++i) {
            const double* arow = a + i * k;
            for (std::size_t j = 0; j < n; ++j) {
                const double* brow = b + j * k;
                double dot = 0.0;
                for (std::size_t p = 0; p < k; ++p) dot += arow[p] * brow[p];
                c[i * n + j] += dot;
            }
        }
    } else if (ta && !tb) {
        for (std::size_t p = 0; p < k; ++p) {
            const double* arow = a + p * m;
            const double* brow = b + p * n;
            for (std::size_t i = 0; i < m; ++i) {
                const double av = arow[i];
                double* crow = c + i * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double dot = 0.0;
                for (std::size_t p = 0; p < k; ++p) dot += a[p * m + i] * b[j * k + p];
                c[i * n + j] += dot;
            }
        }
    }
}

} // namespace

Tensor Tape::watch(const Tensor& t) {
    Tensor out = t;
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{nullptr, t.numel(), {}});
    return out;
}

int Tape::record(Tensor& out, BackwardFn back) {
    out.node_ = static_cast<int>(nodes_.size());
    nodes_.push_back(Node{std::move(back), out.numel(), {}});
    return out.node_;
}

std::vector<double>& Tape::grad_buffer(int node) {
    Node& nd = nodes_[static_cast<std::size_t>(node)];
    if (nd.grad.empty()) nd.grad.assign(nd.numel, 0.0);
    return nd.grad;
}

void Tape::backward(const Tensor& loss) {
    if (!loss.tracked()) throw ShapeError("backward: loss is not recorded on this tape");
    if (loss.numel() != 1) throw ShapeError("backward: loss must be a scalar");
    for (Node& n : nodes_) n.grad.clear();
    grad_buffer(loss.node())[0] = 1.0;
    for (int id = loss.node(); id >= 0; --id) {
        Node& nd = nodes_[static_cast<std::size_t>(id)];
        if (nd.grad.empty() || !nd.back) continue;
        nd.back(*this, nd.grad);
    }
}

Tensor Tape::grad(const Tensor& t) const {
    if (!t.tracked()) throw ShapeError("grad: tensor is not recorded on this tape");
    const Node& nd = nodes_[static_cast<std::size_t>(t.node())];
    if (nd.grad.empty()) return Tensor(t.shape());
    return Tensor(t.shape(), nd.grad);
}

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool bias = !same && a.rank() == 2 &&
                      ((b.rank() == 1 && b.dim(0) == a.dim(1)) ||
                       (b.rank() == 2 && b.dim(0) == 1 && b.dim(1) == a.dim(1)));
    if (!same && !bias) shape_error("add", a, b);
    Tensor out(a.shape());
    if (same) {
        for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] + b.data()[i];
    } else {
        const std::size_t rows = a.dim(0), cols = a.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            for (std::size_t c = 0; c < cols; ++c) {
                out.data()[r * cols + c] = a.data()[r * cols + c] + b.data()[c];
            }
        }
    }
    check_finite(out, "add");
    if (should_track(tape, a, b)) {
        const int an = a.node(), bn = b.node();
        const std::size_t rows = a.rank() == 2 ? a.dim(0) : 0, cols = a.rank() == 2 ? a.dim(1) : 0;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            if (an >= 0) axpy(t.grad_buffer(an), g);
            if (bn >= 0) {
                auto& gb = t.grad_buffer(bn);
                if (same) {
                    axpy(gb, g);
                } else {
                    for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) gb[c] += g[r * cols + c];
                    }
                }
            }
        });
    }
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) shape_error("sub", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] - b.data()[i];
    check_finite(out, "sub");
    if (should_track(tape, a, b)) {
        const int an = a.node(), bn = b.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            if (an >= 0) axpy(t.grad_buffer(an), g);
            if (bn >= 0) axpy(t.grad_buffer(bn), g, -1.0);
        });
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    const bool same = a.shape() == b.shape();
    const bool col = !same && a.rank() == 2 && b.rank() == 2 && b.dim(0) == a.dim(0) && b.dim(1) == 1;
    if (!same && !col) shape_error("mul", a, b);
    Tensor out(a.shape());
    if (same) {
        for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = a.data()[i] * b.data()[i];
    } else {
        const std::size_t rows = a.dim(0), cols = a.dim(1);
        for (std::size_t r = 0; r < rows; ++r) {
            const double bv = b.data()[r];
            for (std::size_t c = 0; c < cols; ++c) {
                out.data()[r * cols + c] = a.data()[r * cols + c] * bv;
            }
        }
    }
    check_finite(out, "mul");
    if (should_track(tape, a, b)) {
        const int an = a.node(), bn = b.node();
        const Tensor ac = a, bc = b;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            if (same) {
                if (an >= 0) {
                    auto& ga = t.grad_buffer(an);
                    for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bc.data()[i];
                }
                if (bn >= 0) {
                    auto& gb = t.grad_buffer(bn);
                    for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * ac.data()[i];
                }
            } else {
                const std::size_t rows = ac.dim(0), cols = ac.dim(1);
                if (an >= 0) {
                    auto& ga = t.grad_buffer(an);
                    for (std::size_t r = 0; r < rows; ++r) {
                        const double bv = bc.data()[r];
                        for (std::size_t c = 0; c < cols; ++c) ga[r * cols + c] += g[r * cols + c] * bv;
                    }
                }
                if (bn >= 0) {
                    auto& gb = t.grad_buffer(bn);
                    for (std::size_t r = 0; r < rows; ++r) {
                        double dot = 0.0;
                        for (std::size_t c = 0; c < cols; ++c) {
                            dot += g[r * cols + c] * ac.data()[r * cols + c];
                        }
                        gb[r] += dot;
                    }
                }
            }
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double s) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = s * a.data()[i];
    check_finite(out, "scale");
    if (should_track(tape, a)) {
        const int an = a.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            axpy(t.grad_buffer(an), g, s);
        });
    }
    return out;
}

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
    if (a.rank() != 2 || b.rank() != 2) shape_error("matmul", a, b);
    const std::size_t m = trans_a ? a.dim(1) : a.dim(0);
    const std::size_t k = trans_a ? a.dim(0) : a.dim(1);
    const std::size_t kb = trans_b ? b.dim(1) : b.dim(0);
    const std::size_t n = trans_b ? b.dim(0) : b.dim(1);
    if (k != kb) shape_error("matmul", a, b);
    Tensor out({m, n});
    matmul_kernel(a.data(), b.data(), out.data(), m, k, n, trans_a, trans_b, false);
    check_finite(out, "matmul");
    if (should_track(tape, a, b)) {
        const int an = a.node(), bn = b.node();
        const Tensor ac = a, bc = b;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            if (an >= 0) {
                auto& ga = t.grad_buffer(an);
                if (!trans_a && !trans_b) {
                    matmul_kernel(g.data(), bc.data(), ga.data(), m, n, k, false, true, true);
                } else if (!trans_a && trans_b) {
                    matmul_kernel(g.data(), bc.data(), ga.data(), m, n, k, false, false, true);
                } else if (trans_a && !trans_b) {
                    matmul_kernel(bc.data(), g.data(), ga.data(), k, n, m, false, true, true);
                } else {
                    std::vector<double> tmp(m * k);
                    matmul_kernel(g.data(), bc.data(), tmp.data(), m, n, k, false, false, false);
                    for (std::size_t i = 0; i < m; ++i) {
                        for (std::size_t p = 0; p < k; ++p) ga[p * m + i] += tmp[i * k + p];
                    }
                }
            }
            if (bn >= 0) {
                auto& gb = t.grad_buffer(bn);
                if (!trans_a && !trans_b) {
                    matmul_kernel(ac.data(), g.data(), gb.data(), k, m, n, true, false, true);
                } else if (!trans_a && trans_b) {
                    matmul_kernel(g.data(), ac.data(), gb.data(), n, m, k, true, false, true);
                } else if (trans_a && !trans_b) {
                    matmul_kernel(ac.data(), g.data(), gb.data(), k, m, n, false, false, true);
                } else {
                    std::vector<double> tmp(k * n);
                    matmul_kernel(ac.data(), g.data(), tmp.data(), k, m, n, false, false, false);
                    for (std::size_t p = 0; p < k; ++p) {
                        for (std::size_t j = 0; j < n; ++j) gb[j * k + p] += tmp[p * n + j];
                    }
                }
            }
        });
    }
    return out;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, std::size_t axis) {
    if (parts.empty()) throw ShapeError("concat: no inputs");
    const std::size_t rank = parts[0].rank();
    if (axis >= rank) throw ShapeError("concat: axis out of range");
    std::vector<std::size_t> shape = parts[0].shape();
    shape[axis] = 0;
    for (const Tensor& p : parts) {
        if (p.rank() != rank) shape_error("concat", parts[0], p);
        for (std::size_t d = 0; d < rank; ++d) {
            if (d != axis && p.dim(d) != parts[0].dim(d)) shape_error("concat", parts[0], p);
        }
        shape[axis] += p.dim(axis);
    }
    Tensor out(shape);
    std::size_t outer, dd, inner;
    axis_split(shape, axis, outer, dd, inner);
    std::size_t offset = 0;
    for (const Tensor& p : parts) {
        const std::size_t pd = p.dim(axis);
        for (std::size_t o = 0; o < outer; ++o) {
            std::copy(p.data() + o * pd * inner, p.data() + (o + 1) * pd * inner,
                      out.data() + (o * dd + offset) * inner);
        }
        offset += pd;
    }
    check_finite(out, "concat");
    bool tracked = false;
    for (const Tensor& p : parts) tracked |= p.tracked();
    if (tape != nullptr && tracked) {
        std::vector<int> ids;
        std::vector<std::size_t> dims;
        for (const Tensor& p : parts) {
            ids.push_back(p.node());
            dims.push_back(p.dim(axis));
        }
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            std::size_t off = 0;
            for (std::size_t pi = 0; pi < ids.size(); ++pi) {
                const std::size_t pd = dims[pi];
                if (ids[pi] >= 0) {
                    auto& gp = t.grad_buffer(ids[pi]);
                    for (std::size_t o = 0; o < outer; ++o) {
                        const double* src = g.data() + (o * dd + off) * inner;
                        double* dst = gp.data() + o * pd * inner;
                        for (std::size_t x = 0; x < pd * inner; ++x) dst[x] += src[x];
                    }
                }
                off += pd;
            }
        });
    }
    return out;
}

Tensor slice(Tape* tape, const Tensor& a, std::size_t axis, std::size_t start, std::size_t len) {
    if (axis >= a.rank() || start + len > a.dim(axis)) {
        throw ShapeError("slice: range [" + std::to_string(start) + ", " +
                         std::to_string(start + len) + ") out of bounds for " + shape_str(a.shape()));
    }
    std::vector<std::size_t> shape = a.shape();
    shape[axis] = len;
    Tensor out(shape);
    std::size_t outer, dd, inner;
    axis_split(a.shape(), axis, outer, dd, inner);
    for (std::size_t o = 0; o < outer; ++o) {
        std::copy(a.data() + (o * dd + start) * inner, a.data() + (o * dd + start + len) * inner,
                  out.data() + o * len * inner);
    }
    check_finite(out, "slice");
    if (should_track(tape, a)) {
        const int an = a.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = g.data() + o * len * inner;
                double* dst = ga.data() + (o * dd + start) * inner;
                for (std::size_t x = 0; x < len * inner; ++x) dst[x] += src[x];
            }
        });
    }
    return out;
}

Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> shape) {
    if (Tensor::numel_of(shape) != a.numel()) {
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor out(std::move(shape), a.vec());
    if (should_track(tape, a)) {
        const int an = a.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            axpy(t.grad_buffer(an), g);
        });
    }
    return out;
}

Tensor take_rows(Tape* tape, const Tensor& a, const std::vector<std::size_t>& rows) {
    if (a.rank() != 2) throw ShapeError("take_rows: input must be 2-D, got " + shape_str(a.shape()));
    const std::size_t cols = a.dim(1);
    Tensor out({rows.size(), cols});
    for (std::size_t r = 0; r < rows.size(); ++r) {
        if (rows[r] >= a.dim(0)) throw ShapeError("take_rows: row index out of range");
        std::copy(a.data() + rows[r] * cols, a.data() + (rows[r] + 1) * cols, out.data() + r * cols);
    }
    if (should_track(tape, a)) {
        const int an = a.node();
        const std::vector<std::size_t> idx = rows;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (std::size_t r = 0; r < idx.size(); ++r) {
                for (std::size_t c = 0; c < cols; ++c) ga[idx[r] * cols + c] += g[r * cols + c];
            }
        });
    }
    return out;
}

Tensor cross_add(Tape* tape, const Tensor& recv, const Tensor& send) {
    if (recv.rank() != 2 || send.rank() != 2 || recv.dim(1) != send.dim(1)) {
        shape_error("cross_add", recv, send);
    }
    const std::size_t nr = recv.dim(0), ns = send.dim(0), h = recv.dim(1);
    Tensor out({nr * ns, h});
    for (std::size_t r = 0; r < nr; ++r) {
        const double* rrow = recv.data() + r * h;
        for (std::size_t s = 0; s < ns; ++s) {
            const double* srow = send.data() + s * h;
            double* orow = out.data() + (r * ns + s) * h;
            for (std::size_t x = 0; x < h; ++x) orow[x] = rrow[x] + srow[x];
        }
    }
    check_finite(out, "cross_add");
    if (should_track(tape, recv, send)) {
        const int rn = recv.node(), sn = send.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            if (rn >= 0) {
                auto& gr = t.grad_buffer(rn);
                for (std::size_t r = 0; r < nr; ++r) {
                    for (std::size_t s = 0; s < ns; ++s) {
                        const double* grow = g.data() + (r * ns + s) * h;
                        for (std::size_t x = 0; x < h; ++x) gr[r * h + x] += grow[x];
                    }
                }
            }
            if (sn >= 0) {
                auto& gs = t.grad_buffer(sn);
                for (std::size_t r = 0; r < nr; ++r) {
                    for (std::size_t s = 0; s < ns; ++s) {
                        const double* grow = g.data() + (r * ns + s) * h;
                        for (std::size_t x = 0; x < h; ++x) gs[s * h + x] += grow[x];
                    }
                }
            }
        });
    }
    return out;
}

Tensor sum_axis(Tape* tape, const Tensor& a, std::size_t axis) {
    if (a.rank() < 2) throw ShapeError("sum_axis: input must have rank >= 2");
    if (axis >= a.rank()) throw ShapeError("sum_axis: axis out of range");
    std::vector<std::size_t> shape;
    for (std::size_t d = 0; d < a.rank(); ++d) {
        if (d != axis) shape.push_back(a.dim(d));
    }
    std::size_t outer, dd, inner;
    axis_split(a.shape(), axis, outer, dd, inner);
    Tensor out(shape);
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t k = 0; k < dd; ++k) {
            const double* src = a.data() + (o * dd + k) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t x = 0; x < inner; ++x) dst[x] += src[x];
        }
    }
    check_finite(out, "sum_axis");
    if (should_track(tape, a)) {
        const int an = a.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (std::size_t o = 0; o < outer; ++o) {
                const double* src = g.data() + o * inner;
                for (std::size_t k = 0; k < dd; ++k) {
                    double* dst = ga.data() + (o * dd + k) * inner;
                    for (std::size_t x = 0; x < inner; ++x) dst[x] += src[x];
                }
            }
        });
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& a) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.numel(); ++i) s += a.data()[i];
    Tensor out = Tensor::scalar(s);
    check_finite(out, "sum_all");
    if (should_track(tape, a)) {
        const int an = a.node();
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (double& v : ga) v += g[0];
        });
    }
    return out;
}

Tensor mean_all(Tape* tape, const Tensor& a) {
    return scale(tape, sum_all(tape, a), 1.0 / static_cast<double>(a.numel()));
}

namespace {

// Shared scaffolding for elementwise unary ops whose derivative is a function
// of the input x and/or the output y.
template <class Fwd, class Bwd>
Tensor unary_op(Tape* tape, const Tensor& a, const char* name, Fwd fwd, Bwd dfun) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.numel(); ++i) out.data()[i] = fwd(a.data()[i]);
    check_finite(out, name);
    if (should_track(tape, a)) {
        const int an = a.node();
        const Tensor ac = a, oc = out;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (std::size_t i = 0; i < g.size(); ++i) {
                ga[i] += g[i] * dfun(ac.data()[i], oc.data()[i]);
            }
        });
    }
    return out;
}

} // namespace

Tensor relu(Tape* tape, const Tensor& a) {
    return unary_op(
        tape, a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
        [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(Tape* tape, const Tensor& a, double slope) {
    return unary_op(
        tape, a, "leaky_relu", [=](double x) { return x > 0.0 ? x : slope * x; },
        [=](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor gelu(Tape* tape, const Tensor& a) {
    constexpr double kSqrt2OverPi = 0.7978845608028654; // sqrt(2/pi)
    constexpr double kCubic = 0.044715;
    return unary_op(
        tape, a, "gelu",
        [](double x) {
            const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
            return 0.5 * x * (1.0 + std::tanh(u));
        },
        [](double x, double) {
            const double u = kSqrt2OverPi * (x + kCubic * x * x * x);
            const double th = std::tanh(u);
            const double du = kSqrt2OverPi * (1.0 + 3.0 * kCubic * x * x);
            return 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
        });
}

Tensor sigmoid(Tape* tape, const Tensor& a) {
    return unary_op(
        tape, a, "sigmoid",
        [](double x) {
            if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
            const double e = std::exp(x);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Tensor tanh_op(Tape* tape, const Tensor& a) {
    return unary_op(
        tape, a, "tanh", [](double x) { return std::tanh(x); },
        [](double, double y) { return 1.0 - y * y; });
}

Tensor softmax(Tape* tape, const Tensor& a, std::size_t axis) {
    if (axis >= a.rank()) throw ShapeError("softmax: axis out of range");
    std::size_t outer, dd, inner;
    axis_split(a.shape(), axis, outer, dd, inner);
    Tensor out(a.shape());
    for (std::size_t o = 0; o < outer; ++o) {
        for (std::size_t x = 0; x < inner; ++x) {
            const std::size_t base = o * dd * inner + x;
            double mx = a.data()[base];
            for (std::size_t k = 1; k < dd; ++k) mx = std::max(mx, a.data()[base + k * inner]);
            double sum = 0.0;
            for (std::size_t k = 0; k < dd; ++k) {
                const double e = std::exp(a.data()[base + k * inner] - mx);
                out.data()[base + k * inner] = e;
                sum += e;
            }
            for (std::size_t k = 0; k < dd; ++k) out.data()[base + k * inner] /= sum;
        }
    }
    check_finite(out, "softmax");
    if (should_track(tape, a)) {
        const int an = a.node();
        const Tensor oc = out;
        tape->record(out, [=](Tape& t, const std::vector<double>& g) {
            auto& ga = t.grad_buffer(an);
            for (std::size_t o = 0; o < outer; ++o) {
                for (std::size_t x = 0; x < inner; ++x) {
                    const std::size_t base = o * dd * inner + x;
                    double dot = 0.0;
                    for (std::size_t k = 0; k < dd; ++k) {
                        dot += g[base + k * inner] * oc.data()[base + k * inner];
                    }
                    for (std::size_t k = 0; k < dd; ++k) {
                        const std::size_t at = base + k * inner;
                        ga[at] += oc.data()[at] * (g[at] - dot);
                    }
                }
            }
        });
    }
    return out;
}

} // namespace netdyn
