#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "feddpg/rng.hpp"

namespace feddpg {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

struct TensorNode {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;    // empty until the first accumulation
    bool requires_grad = false;  // trainable leaf
    bool needs_grad = false;     // lies on a gradient path to a trainable leaf

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), 0.0);
    }
};

// Value handle over a shared node. Copies alias the same storage; training
// code that wants an independent copy uses clone().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double v);
    static Tensor from(Shape shape, std::vector<double> data);
    static Tensor scalar(double v);
    // uniform [lo, hi) initialisation, seeded
    static Tensor uniform(Shape shape, double lo, double hi, Rng& rng);

    bool defined() const { return n_ != nullptr; }
    const Shape& shape() const { return n_->shape; }
    int64_t numel() const { return static_cast<int64_t>(n_->value.size()); }
    int64_t dim(int i) const { return n_->shape[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(n_->shape.size()); }

    std::vector<double>& data() { return n_->value; }
    const std::vector<double>& data() const { return n_->value; }
    const std::vector<double>& grad() const { return n_->grad; }
    bool has_grad() const { return !n_->grad.empty(); }

    bool requires_grad() const { return n_->requires_grad; }
    void set_requires_grad(bool b) {
        n_->requires_grad = b;
        n_->needs_grad = b;
    }

    void zero_grad() { n_->grad.clear(); }

    double item() const;

    Tensor clone() const;

    std::shared_ptr<TensorNode>& node() { return n_; }
    const std::shared_ptr<TensorNode>& node() const { return n_; }

private:
    std::shared_ptr<TensorNode> n_;
};

// Ordered record of applied operations. Reverse traversal visits each op
// exactly once; clear() drops the op list and never touches values.
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    bool recording() const { return recording_; }
    void set_recording(bool b) { recording_ = b; }
    size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    // grads accumulate into every needs_grad tensor upstream of loss
    void backward(const Tensor& loss);

private:
    std::vector<std::function<void()>> ops_;
    bool recording_ = true;
};

inline void backward(Tape& tape, const Tensor& loss) { tape.backward(loss); }

// ---- recorded operations ----------------------------------------------

Tensor add(Tape& t, const Tensor& a, const Tensor& b);            // same shape
Tensor add_rowvec(Tape& t, const Tensor& a, const Tensor& b);     // [m,n] + [n]
Tensor mul(Tape& t, const Tensor& a, const Tensor& b);            // hadamard
Tensor scale(Tape& t, const Tensor& a, double c);
Tensor matmul(Tape& t, const Tensor& a, const Tensor& b);         // [m,k] x [k,n]
Tensor transpose(Tape& t, const Tensor& a);                       // [m,n] -> [n,m]
Tensor tanh_op(Tape& t, const Tensor& a);
Tensor gelu(Tape& t, const Tensor& a);                            // exact erf form
Tensor softmax_rows(Tape& t, const Tensor& a);                    // max-subtracted
Tensor layer_norm(Tape& t, const Tensor& a, const Tensor& gain, const Tensor& bias);
Tensor cross_entropy(Tape& t, const Tensor& logits, int label);   // [K] -> [1]
Tensor sum(Tape& t, const Tensor& a);                             // -> [1]
Tensor mean_rows(Tape& t, const Tensor& a);                       // [m,n] -> [1,n]
// column sums taken in sorted value order: result depends only on the
// multiset of rows, so row permutations are bit-exact no-ops
Tensor mean_rows_exact(Tape& t, const Tensor& a);                 // [m,n] -> [n]
Tensor concat_rows(Tape& t, const Tensor& a, const Tensor& b);    // [p,n];[m,n] -> [p+m,n]
Tensor slice_rows(Tape& t, const Tensor& a, int64_t count);       // first count rows
Tensor reshape(Tape& t, const Tensor& a, Shape shape);            // row-major, never reorders
Tensor embed_rows(Tape& t, const Tensor& table, const std::vector<int>& ids);

int argmax(const Tensor& a);  // ties broken toward the lowest index

// w <- w - lr * grad for every tensor with a populated grad; grads are
// zeroed afterwards. Tensors without grads are untouched.
void sgd_step(std::vector<Tensor>& params, double lr);

}  // namespace feddpg
