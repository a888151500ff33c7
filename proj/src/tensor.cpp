#include "feddpg/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace feddpg {

int64_t shape_numel(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
    os << "]";
    return os.str();
}

namespace {

std::shared_ptr<TensorNode> make_node(Shape shape, std::vector<double> data) {
    auto n = std::make_shared<TensorNode>();
    n->shape = std::move(shape);
    n->value = std::move(data);
    return n;
}

Tensor wrap(std::shared_ptr<TensorNode> n) {
    Tensor t;
    t.node() = std::move(n);
    return t;
}

// out = result of op(a[,b]); propagates the needs_grad mark while recording
Tensor make_out(Tape& t, Shape shape, std::vector<double> data, bool inputs_need_grad) {
    Tensor out = wrap(make_node(std::move(shape), std::move(data)));
    if (t.recording() && inputs_need_grad) out.node()->needs_grad = true;
    return out;
}

bool want_grad(const Tape& t, const Tensor& a) { return t.recording() && a.node()->needs_grad; }

void check_finite_for(const char* op, const Tensor& a) {
    for (double v : a.data()) {
        if (std::isnan(v) || std::isinf(v)) {
            throw std::runtime_error(std::string(op) + ": non-finite input entry");
        }
    }
}

}  // namespace

Tensor Tensor::zeros(Shape shape) {
    int64_t n = shape_numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), 0.0)));
}

Tensor Tensor::full(Shape shape, double v) {
    int64_t n = shape_numel(shape);
    return wrap(make_node(std::move(shape), std::vector<double>(static_cast<size_t>(n), v)));
}

Tensor Tensor::from(Shape shape, std::vector<double> data) {
    if (shape_numel(shape) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " does not match data length " +
                                    std::to_string(data.size()));
    }
    return wrap(make_node(std::move(shape), std::move(data)));
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

Tensor Tensor::uniform(Shape shape, double lo, double hi, Rng& rng) {
    int64_t n = shape_numel(shape);
    std::vector<double> data(static_cast<size_t>(n));
    for (double& v : data) v = rng.uniform(lo, hi);
    return wrap(make_node(std::move(shape), std::move(data)));
}

double Tensor::item() const {
    if (numel() != 1) throw std::runtime_error("item: tensor has " + std::to_string(numel()) + " elements");
    return n_->value[0];
}

Tensor Tensor::clone() const {
    Tensor out = wrap(make_node(n_->shape, n_->value));
    out.n_->requires_grad = n_->requires_grad;
    out.n_->needs_grad = n_->needs_grad;
    return out;
}

void Tape::backward(const Tensor& loss) {
    if (loss.numel() != 1) {
        throw std::runtime_error("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    }
    loss.node()->ensure_grad();
    loss.node()->grad[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

// ---- element-wise -------------------------------------------------------

Tensor add(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::runtime_error("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> v(a.data());
    for (size_t i = 0; i < v.size(); ++i) v[i] += b.data()[i];
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a) || want_grad(t, b));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->needs_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i];
            }
        });
    }
    return out;
}

Tensor add_rowvec(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 1 || a.dim(1) != b.dim(0)) {
        throw std::runtime_error("add_rowvec: shape mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
    }
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    std::vector<double> v(a.data());
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) v[i * n + j] += b.data()[j];
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a) || want_grad(t, b));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), bn = b.node(), on = out.node(), m, n] {
            if (on->grad.empty()) return;
            if (an->needs_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < m * n; ++i) an->grad[i] += on->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < m; ++i)
                    for (size_t j = 0; j < n; ++j) bn->grad[j] += on->grad[i * n + j];
            }
        });
    }
    return out;
}

Tensor mul(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) {
        throw std::runtime_error("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    }
    std::vector<double> v(a.data());
    for (size_t i = 0; i < v.size(); ++i) v[i] *= b.data()[i];
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a) || want_grad(t, b));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), bn = b.node(), on = out.node()] {
            if (on->grad.empty()) return;
            if (an->needs_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < on->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
            }
        });
    }
    return out;
}

Tensor scale(Tape& t, const Tensor& a, double c) {
    std::vector<double> v(a.data());
    for (double& x : v) x *= c;
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), c] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += c * on->grad[i];
        });
    }
    return out;
}

// ---- linear algebra ------------------------------------------------------

namespace {

// C[m,n] += A[m,k] * B[k,n]
void gemm_nn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m,n] += A[m,k] * B[n,k]^T
void gemm_nt(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (size_t j = 0; j < n; ++j) {
            const double* brow = b + j * k;
            double acc = 0.0;
            for (size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
            crow[j] += acc;
        }
    }
}

// C[k,n] += A[m,k]^T * B[m,n]
void gemm_tn(const double* a, const double* b, double* c, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

Tensor matmul(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0)) {
        throw std::runtime_error("matmul: dimension mismatch " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
    }
    const size_t m = static_cast<size_t>(a.dim(0));
    const size_t k = static_cast<size_t>(a.dim(1));
    const size_t n = static_cast<size_t>(b.dim(1));
    std::vector<double> v(m * n, 0.0);
    gemm_nn(a.data().data(), b.data().data(), v.data(), m, k, n);
    Tensor out = make_out(t, {a.dim(0), b.dim(1)}, std::move(v), want_grad(t, a) || want_grad(t, b));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), bn = b.node(), on = out.node(), m, k, n] {
            if (on->grad.empty()) return;
            if (an->needs_grad) {  // dA = dC * B^T
                an->ensure_grad();
                gemm_nt(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
            }
            if (bn->needs_grad) {  // dB = A^T * dC
                bn->ensure_grad();
                gemm_tn(an->value.data(), on->grad.data(), bn->grad.data(), m, k, n);
            }
        });
    }
    return out;
}

Tensor transpose(Tape& t, const Tensor& a) {
    if (a.ndim() != 2) throw std::runtime_error("transpose: expected matrix, got " + shape_str(a.shape()));
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    std::vector<double> v(m * n);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) v[j * m + i] = a.data()[i * n + j];
    Tensor out = make_out(t, {a.dim(1), a.dim(0)}, std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), m, n] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j * m + i];
        });
    }
    return out;
}

// ---- nonlinearities ------------------------------------------------------

Tensor tanh_op(Tape& t, const Tensor& a) {
    std::vector<double> v(a.data());
    for (double& x : v) x = std::tanh(x);
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node()] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                an->grad[i] += on->grad[i] * (1.0 - on->value[i] * on->value[i]);
            }
        });
    }
    return out;
}

Tensor gelu(Tape& t, const Tensor& a) {
    static const double inv_sqrt2 = 0.7071067811865475244;
    static const double inv_sqrt2pi = 0.3989422804014326779;
    std::vector<double> v(a.data());
    for (double& x : v) x = 0.5 * x * (1.0 + std::erf(x * inv_sqrt2));
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node()] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) {
                const double x = an->value[i];
                const double cdf = 0.5 * (1.0 + std::erf(x * inv_sqrt2));
                const double pdf = inv_sqrt2pi * std::exp(-0.5 * x * x);
                an->grad[i] += on->grad[i] * (cdf + x * pdf);
            }
        });
    }
    return out;
}

Tensor softmax_rows(Tape& t, const Tensor& a) {
    if (a.ndim() != 2) throw std::runtime_error("softmax_rows: expected matrix, got " + shape_str(a.shape()));
    check_finite_for("softmax_rows", a);
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    std::vector<double> v(m * n);
    for (size_t i = 0; i < m; ++i) {
        const double* row = a.data().data() + i * n;
        double mx = row[0];
        for (size_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double total = 0.0;
        for (size_t j = 0; j < n; ++j) {
            v[i * n + j] = std::exp(row[j] - mx);
            total += v[i * n + j];
        }
        for (size_t j = 0; j < n; ++j) v[i * n + j] /= total;
    }
    Tensor out = make_out(t, a.shape(), std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), m, n] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < m; ++i) {
                const double* y = on->value.data() + i * n;
                const double* dy = on->grad.data() + i * n;
                double dot = 0.0;
                for (size_t j = 0; j < n; ++j) dot += dy[j] * y[j];
                for (size_t j = 0; j < n; ++j) an->grad[i * n + j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

Tensor layer_norm(Tape& t, const Tensor& a, const Tensor& gain, const Tensor& bias) {
    static const double kEps = 1e-5;
    if (a.ndim() != 2) throw std::runtime_error("layer_norm: expected matrix, got " + shape_str(a.shape()));
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    if (n < 2) throw std::runtime_error("layer_norm: row width must be >= 2, got " + shape_str(a.shape()));
    if (gain.numel() != static_cast<int64_t>(n) || bias.numel() != static_cast<int64_t>(n)) {
        throw std::runtime_error("layer_norm: gain/bias shape mismatch " + shape_str(gain.shape()) + ", " +
                                 shape_str(bias.shape()) + " for input " + shape_str(a.shape()));
    }
    std::vector<double> v(m * n);
    std::vector<double> inv_sigma(m);
    for (size_t i = 0; i < m; ++i) {
        const double* row = a.data().data() + i * n;
        double mean = 0.0;
        for (size_t j = 0; j < n; ++j) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (size_t j = 0; j < n; ++j) {
            const double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        inv_sigma[i] = 1.0 / std::sqrt(var + kEps);
        for (size_t j = 0; j < n; ++j) {
            v[i * n + j] = (row[j] - mean) * inv_sigma[i] * gain.data()[j] + bias.data()[j];
        }
    }
    const bool ng = want_grad(t, a) || want_grad(t, gain) || want_grad(t, bias);
    Tensor out = make_out(t, a.shape(), std::move(v), ng);
    if (out.node()->needs_grad) {
        t.record([an = a.node(), gn = gain.node(), bn = bias.node(), on = out.node(),
                  inv_sigma = std::move(inv_sigma), m, n] {
            if (on->grad.empty()) return;
            for (size_t i = 0; i < m; ++i) {
                const double* row = an->value.data() + i * n;
                const double* dy = on->grad.data() + i * n;
                double mean = 0.0;
                for (size_t j = 0; j < n; ++j) mean += row[j];
                mean /= static_cast<double>(n);
                // yhat = (x - mean) * inv_sigma
                if (bn->needs_grad) {
                    bn->ensure_grad();
                    for (size_t j = 0; j < n; ++j) bn->grad[j] += dy[j];
                }
                if (gn->needs_grad) {
                    gn->ensure_grad();
                    for (size_t j = 0; j < n; ++j) {
                        gn->grad[j] += dy[j] * (row[j] - mean) * inv_sigma[i];
                    }
                }
                if (an->needs_grad) {
                    an->ensure_grad();
                    double s1 = 0.0, s2 = 0.0;
                    for (size_t j = 0; j < n; ++j) {
                        const double yh = (row[j] - mean) * inv_sigma[i];
                        const double dyh = dy[j] * gn->value[j];
                        s1 += dyh;
                        s2 += dyh * yh;
                    }
                    s1 /= static_cast<double>(n);
                    s2 /= static_cast<double>(n);
                    for (size_t j = 0; j < n; ++j) {
                        const double yh = (row[j] - mean) * inv_sigma[i];
                        const double dyh = dy[j] * gn->value[j];
                        an->grad[i * n + j] += inv_sigma[i] * (dyh - s1 - yh * s2);
                    }
                }
            }
        });
    }
    return out;
}

Tensor cross_entropy(Tape& t, const Tensor& logits, int label) {
    if (logits.ndim() != 1) {
        throw std::runtime_error("cross_entropy: expected vector logits, got " + shape_str(logits.shape()));
    }
    const int k = static_cast<int>(logits.numel());
    if (label < 0 || label >= k) {
        throw std::out_of_range("cross_entropy: label " + std::to_string(label) + " out of range for " +
                                std::to_string(k) + " classes");
    }
    double mx = logits.data()[0];
    for (int j = 1; j < k; ++j) mx = std::max(mx, logits.data()[j]);
    double total = 0.0;
    for (int j = 0; j < k; ++j) total += std::exp(logits.data()[j] - mx);
    const double loss = std::log(total) - (logits.data()[label] - mx);
    Tensor out = make_out(t, {1}, {loss}, want_grad(t, logits));
    if (out.node()->needs_grad) {
        t.record([ln = logits.node(), on = out.node(), label, mx, total, k] {
            if (on->grad.empty() || !ln->needs_grad) return;
            ln->ensure_grad();
            const double d = on->grad[0];
            for (int j = 0; j < k; ++j) {
                double p = std::exp(ln->value[j] - mx) / total;
                if (j == label) p -= 1.0;
                ln->grad[j] += d * p;  // softmax(logits) - one_hot(label)
            }
        });
    }
    return out;
}

// ---- reductions / structure ---------------------------------------------

Tensor sum(Tape& t, const Tensor& a) {
    double total = 0.0;
    for (double v : a.data()) total += v;
    Tensor out = make_out(t, {1}, {total}, want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node()] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (double& g : an->grad) g += on->grad[0];
        });
    }
    return out;
}

Tensor mean_rows(Tape& t, const Tensor& a) {
    if (a.ndim() != 2) throw std::runtime_error("mean_rows: expected matrix, got " + shape_str(a.shape()));
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    if (m == 0) throw std::runtime_error("mean_rows: empty input");
    std::vector<double> v(n, 0.0);
    for (size_t i = 0; i < m; ++i)
        for (size_t j = 0; j < n; ++j) v[j] += a.data()[i * n + j];
    for (double& x : v) x /= static_cast<double>(m);
    Tensor out = make_out(t, {1, static_cast<int64_t>(n)}, std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), m, n] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            const double inv = 1.0 / static_cast<double>(m);
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j] * inv;
        });
    }
    return out;
}

Tensor mean_rows_exact(Tape& t, const Tensor& a) {
    if (a.ndim() != 2) throw std::runtime_error("mean_rows_exact: expected matrix, got " + shape_str(a.shape()));
    const size_t m = static_cast<size_t>(a.dim(0)), n = static_cast<size_t>(a.dim(1));
    if (m == 0) throw std::runtime_error("mean_rows_exact: empty input");
    std::vector<double> v(n, 0.0);
    std::vector<double> col(m);
    for (size_t j = 0; j < n; ++j) {
        for (size_t i = 0; i < m; ++i) col[i] = a.data()[i * n + j];
        std::sort(col.begin(), col.end());
        double total = 0.0;
        for (double x : col) total += x;
        v[j] = total / static_cast<double>(m);
    }
    Tensor out = make_out(t, {static_cast<int64_t>(n)}, std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), m, n] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            const double inv = 1.0 / static_cast<double>(m);
            for (size_t i = 0; i < m; ++i)
                for (size_t j = 0; j < n; ++j) an->grad[i * n + j] += on->grad[j] * inv;
        });
    }
    return out;
}

Tensor concat_rows(Tape& t, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(1)) {
        throw std::runtime_error("concat_rows: incompatible shapes " + shape_str(a.shape()) + " vs " +
                                 shape_str(b.shape()));
    }
    const size_t pa = a.data().size(), pb = b.data().size();
    std::vector<double> v;
    v.reserve(pa + pb);
    v.insert(v.end(), a.data().begin(), a.data().end());
    v.insert(v.end(), b.data().begin(), b.data().end());
    Tensor out =
        make_out(t, {a.dim(0) + b.dim(0), a.dim(1)}, std::move(v), want_grad(t, a) || want_grad(t, b));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), bn = b.node(), on = out.node(), pa, pb] {
            if (on->grad.empty()) return;
            if (an->needs_grad) {
                an->ensure_grad();
                for (size_t i = 0; i < pa; ++i) an->grad[i] += on->grad[i];
            }
            if (bn->needs_grad) {
                bn->ensure_grad();
                for (size_t i = 0; i < pb; ++i) bn->grad[i] += on->grad[pa + i];
            }
        });
    }
    return out;
}

Tensor slice_rows(Tape& t, const Tensor& a, int64_t count) {
    if (a.ndim() != 2 || count < 0 || count > a.dim(0)) {
        throw std::runtime_error("slice_rows: cannot take " + std::to_string(count) + " rows of " +
                                 shape_str(a.shape()));
    }
    const size_t n = static_cast<size_t>(a.dim(1));
    const size_t keep = static_cast<size_t>(count) * n;
    std::vector<double> v(a.data().begin(), a.data().begin() + static_cast<long>(keep));
    Tensor out = make_out(t, {count, a.dim(1)}, std::move(v), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node(), keep] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < keep; ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor reshape(Tape& t, const Tensor& a, Shape shape) {
    if (shape_numel(shape) != a.numel()) {
        throw std::runtime_error("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    }
    Tensor out = make_out(t, std::move(shape), a.data(), want_grad(t, a));
    if (out.node()->needs_grad) {
        t.record([an = a.node(), on = out.node()] {
            if (on->grad.empty() || !an->needs_grad) return;
            an->ensure_grad();
            for (size_t i = 0; i < on->grad.size(); ++i) an->grad[i] += on->grad[i];
        });
    }
    return out;
}

Tensor embed_rows(Tape& t, const Tensor& table, const std::vector<int>& ids) {
    if (table.ndim() != 2) throw std::runtime_error("embed_rows: table must be a matrix");
    const int64_t v_size = table.dim(0);
    const size_t d = static_cast<size_t>(table.dim(1));
    std::vector<double> v(ids.size() * d);
    for (size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || ids[i] >= v_size) {
            throw std::runtime_error("embed_rows: token id " + std::to_string(ids[i]) +
                                     " outside vocabulary of size " + std::to_string(v_size));
        }
        std::copy_n(table.data().data() + static_cast<size_t>(ids[i]) * d, d, v.data() + i * d);
    }
    Tensor out =
        make_out(t, {static_cast<int64_t>(ids.size()), table.dim(1)}, std::move(v), want_grad(t, table));
    if (out.node()->needs_grad) {
        t.record([tn = table.node(), on = out.node(), ids, d] {
            if (on->grad.empty() || !tn->needs_grad) return;
            tn->ensure_grad();
            for (size_t i = 0; i < ids.size(); ++i) {
                double* dst = tn->grad.data() + static_cast<size_t>(ids[i]) * d;
                const double* src = on->grad.data() + i * d;
                for (size_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

int argmax(const Tensor& a) {
    int best = 0;
    for (int i = 1; i < static_cast<int>(a.numel()); ++i) {
        if (a.data()[static_cast<size_t>(i)] > a.data()[static_cast<size_t>(best)]) best = i;
    }
    return best;
}

void sgd_step(std::vector<Tensor>& params, double lr) {
    for (Tensor& p : params) {
        if (!p.has_grad()) continue;
        auto& w = p.data();
        const auto& g = p.grad();
        for (size_t i = 0; i < w.size(); ++i) w[i] -= lr * g[i];
        p.zero_grad();
    }
}

}  // namespace feddpg
