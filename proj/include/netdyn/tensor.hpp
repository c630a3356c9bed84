#pragma once

// Dense row-major tensors (64-bit floats) with a reverse-mode tape. A tape is
// single-threaded and built fresh per forward/backward pass; passing a null
// tape runs any op in pure inference mode. Every forward op checks its output
// for non-finite values and raises NumericError, so finite inputs can never
// silently produce NaN.

#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "netdyn/errors.hpp"

namespace netdyn {

class Tape;

class Tensor {
  public:
    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)),
          data_(std::make_shared<std::vector<double>>(numel_of(shape_), 0.0)) {}
    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::make_shared<std::vector<double>>(std::move(data))) {
        if (data_->size() != numel_of(shape_)) throw ShapeError("tensor data does not match shape");
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor filled(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (double& x : *t.data_) x = v;
        return t;
    }

    bool defined() const { return data_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t axis) const { return shape_[axis]; }
    std::size_t numel() const { return data_ ? data_->size() : 0; }

    double* data() { return data_->data(); }
    const double* data() const { return data_->data(); }
    const std::vector<double>& vec() const { return *data_; }

    double value() const {
        if (numel() != 1) throw ShapeError("value() requires a single-element tensor");
        return (*data_)[0];
    }

    bool tracked() const { return node_ >= 0; }
    int node() const { return node_; }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

  private:
    std::vector<std::size_t> shape_;
    std::shared_ptr<std::vector<double>> data_;
    int node_ = -1;
    friend class Tape;
};

std::string shape_str(const std::vector<std::size_t>& shape);

class Tape {
  public:
    using BackwardFn = std::function<void(Tape&, const std::vector<double>& grad_out)>;

    // Registers a leaf that should receive a gradient.
    Tensor watch(const Tensor& t);

    // Reverse pass from a scalar loss. Clears previous gradients first, so a
    // repeated call reproduces identical results.
    void backward(const Tensor& loss);

    // Gradient of the loss w.r.t. a tracked tensor (zeros if unreached).
    Tensor grad(const Tensor& t) const;

    std::size_t n_nodes() const { return nodes_.size(); }

    // Op-recording interface.
    int record(Tensor& out, BackwardFn back);
    std::vector<double>& grad_buffer(int node);

  private:
    struct Node {
        BackwardFn back; // empty for leaves
        std::size_t numel = 0;
        std::vector<double> grad; // allocated lazily during backward
    };
    std::vector<Node> nodes_;
};

// ---- Operations. `tape` may be null (inference mode). ----

// Elementwise sum; `b` may also be a [cols] or [1, cols] bias broadcast over
// the rows of a 2-D `a`.
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
// Elementwise product; `b` may also be a [rows, 1] column broadcast against a
// 2-D `a`.
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double s);

// C = op(A) * op(B) with optional transposes of the 2-D operands.
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b, bool trans_a = false,
              bool trans_b = false);

Tensor concat(Tape* tape, const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(Tape* tape, const Tensor& a, std::size_t axis, std::size_t start, std::size_t len);
Tensor reshape(Tape* tape, const Tensor& a, std::vector<std::size_t> shape);
Tensor take_rows(Tape* tape, const Tensor& a, const std::vector<std::size_t>& rows);

// out[(r*S + s), :] = recv[r, :] + send[s, :]; the all-pairs building block.
Tensor cross_add(Tape* tape, const Tensor& recv, const Tensor& send);

Tensor sum_axis(Tape* tape, const Tensor& a, std::size_t axis);
Tensor sum_all(Tape* tape, const Tensor& a);
Tensor mean_all(Tape* tape, const Tensor& a);

Tensor relu(Tape* tape, const Tensor& a);
Tensor leaky_relu(Tape* tape, const Tensor& a, double slope = 0.2);
Tensor gelu(Tape* tape, const Tensor& a); // tanh approximation
Tensor sigmoid(Tape* tape, const Tensor& a);
Tensor tanh_op(Tape* tape, const Tensor& a);
Tensor softmax(Tape* tape, const Tensor& a, std::size_t axis);

} // namespace netdyn
