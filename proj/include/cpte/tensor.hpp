#pragma once

// Dense 64-bit tensors with tape-based reverse-mode autodiff.
// Rank 1 and 2 tensors cover everything the encoder and the loss need.

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "cpte/rng.hpp"

namespace cpte {

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(s[i]);
    }
    out += "]";
    return out;
}

namespace detail {

struct TensorImpl {
    std::vector<int> shape;
    std::vector<double> data;
    std::vector<double> grad;  // empty until first touched
    bool requires_grad = false;
};

inline std::size_t shape_numel(const std::vector<int>& shape) {
    if (shape.empty()) throw std::invalid_argument("tensor shape must be non-empty");
    std::size_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw std::invalid_argument("tensor shape entries must be positive, got " + shape_str(shape));
        n *= static_cast<std::size_t>(d);
    }
    return n;
}

}  // namespace detail

// Shared-ownership handle. Values are written once by the op that creates
// them; gradients accumulate during backward().
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false) {
        auto impl = std::make_shared<detail::TensorImpl>();
        const std::size_t n = detail::shape_numel(shape);
        impl->shape = std::move(shape);
        impl->data.assign(n, 0.0);
        impl->requires_grad = requires_grad;
        return Tensor(std::move(impl));
    }

    static Tensor from_data(std::vector<int> shape, std::vector<double> data, bool requires_grad = false) {
        const std::size_t n = detail::shape_numel(shape);
        if (n != data.size()) {
            throw std::invalid_argument("tensor data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str(shape));
        }
        auto impl = std::make_shared<detail::TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(data);
        impl->requires_grad = requires_grad;
        return Tensor(std::move(impl));
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from_data({1}, {v}, requires_grad);
    }

    static Tensor randn(std::vector<int> shape, Rng& rng, double stddev = 1.0, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (double& v : t.data()) v = rng.normal(0.0, stddev);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::size_t numel() const { return impl_->data.size(); }
    int rows() const { return impl_->shape[0]; }
    int cols() const {
        if (rank() != 2) throw std::invalid_argument("cols(): tensor is not rank 2: " + shape_str(shape()));
        return impl_->shape[1];
    }

    // Constness is shallow: a Tensor is a handle onto shared storage.
    std::vector<double>& data() const { return impl_->data; }

    // Lazily allocated, zero-filled.
    std::vector<double>& grad() const {
        if (impl_->grad.size() != impl_->data.size()) impl_->grad.assign(impl_->data.size(), 0.0);
        return impl_->grad;
    }
    bool has_grad() const { return impl_->grad.size() == impl_->data.size(); }
    void zero_grad() const { impl_->grad.assign(impl_->data.size(), 0.0); }

    bool requires_grad() const { return impl_->requires_grad; }
    void set_requires_grad(bool v) { impl_->requires_grad = v; }

    double value() const {
        if (numel() != 1) throw std::invalid_argument("value(): tensor is not scalar: " + shape_str(shape()));
        return impl_->data[0];
    }

    Tensor clone() const {
        auto impl = std::make_shared<detail::TensorImpl>();
        impl->shape = impl_->shape;
        impl->data = impl_->data;
        impl->requires_grad = impl_->requires_grad;
        return Tensor(std::move(impl));
    }

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
    std::shared_ptr<detail::TensorImpl> impl_;
};

// Records one backward closure per op, in forward order. backward() replays
// them in exact reverse order; gradients accumulate into input tensors.
class Tape {
public:
    void record(std::function<void()> fn) { ops_.push_back(std::move(fn)); }
    std::size_t size() const { return ops_.size(); }
    void clear() { ops_.clear(); }

    // loss must be scalar. Grads of every tensor reachable from the tape are
    // accumulated; call zero_grad() on leaves you plan to reuse.
    void backward(Tensor loss) {
        if (loss.numel() != 1) {
            throw std::invalid_argument("backward: loss must be scalar, got " + shape_str(loss.shape()));
        }
        if (ops_.empty()) throw std::invalid_argument("backward: tape is empty");
        loss.grad()[0] += 1.0;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
};

namespace detail {

inline void check_rank2(const Tensor& t, const char* op) {
    if (t.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected rank-2 tensor, got " + shape_str(t.shape()));
    }
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                                    shape_str(b.shape()));
    }
}

}  // namespace detail

// ----------------------------------------------------------------------------
// ops
// ----------------------------------------------------------------------------

// C[m x n] = A[m x k] * B[k x n]
inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::check_rank2(a, "matmul");
    detail::check_rank2(b, "matmul");
    if (a.cols() != b.rows()) {
        throw std::invalid_argument("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()));
    }
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor c = Tensor::zeros({m, n});
    {
        const double* A = a.data().data();
        const double* B = b.data().data();
        double* C = c.data().data();
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                const double* Brow = B + p * n;
                double* Crow = C + i * n;
                for (int j = 0; j < n; ++j) Crow[j] += aip * Brow[j];
            }
        }
    }
    tape.record([a, b, c, m, k, n]() {
        const double* A = a.data().data();
        const double* B = b.data().data();
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dB = b.grad().data();
        // dA += dC * B^T
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                const double* dCrow = dC + i * n;
                const double* Brow = B + p * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += dCrow[j] * Brow[j];
                dA[i * k + p] += acc;
            }
        }
        // dB += A^T * dC
        for (int i = 0; i < m; ++i) {
            for (int p = 0; p < k; ++p) {
                const double aip = A[i * k + p];
                const double* dCrow = dC + i * n;
                double* dBrow = dB + p * n;
                for (int j = 0; j < n; ++j) dBrow[j] += aip * dCrow[j];
            }
        }
    });
    return c;
}

// C[m x n] = A[m x d] * B[n x d]^T  (rows of both operands are contiguous)
inline Tensor matmul_nt(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::check_rank2(a, "matmul_nt");
    detail::check_rank2(b, "matmul_nt");
    if (a.cols() != b.cols()) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree: " + shape_str(a.shape()) + " x " +
                                    shape_str(b.shape()) + "^T");
    }
    const int m = a.rows(), d = a.cols(), n = b.rows();
    Tensor c = Tensor::zeros({m, n});
    {
        const double* A = a.data().data();
        const double* B = b.data().data();
        double* C = c.data().data();
        for (int i = 0; i < m; ++i) {
            const double* Arow = A + i * d;
            for (int j = 0; j < n; ++j) {
                const double* Brow = B + j * d;
                double acc = 0.0;
                for (int p = 0; p < d; ++p) acc += Arow[p] * Brow[p];
                C[i * n + j] = acc;
            }
        }
    }
    tape.record([a, b, c, m, d, n]() {
        const double* A = a.data().data();
        const double* B = b.data().data();
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dB = b.grad().data();
        for (int i = 0; i < m; ++i) {
            const double* dCrow = dC + i * n;
            double* dArow = dA + i * d;
            const double* Arow = A + i * d;
            for (int j = 0; j < n; ++j) {
                const double g = dCrow[j];
                if (g == 0.0) continue;
                const double* Brow = B + j * d;
                double* dBrow = dB + j * d;
                for (int p = 0; p < d; ++p) {
                    dArow[p] += g * Brow[p];
                    dBrow[p] += g * Arow[p];
                }
            }
        }
    });
    return c;
}

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    Tensor c = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.data()[i] = a.data()[i] + b.data()[i];
    tape.record([a, b, c, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dB = b.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            dA[i] += dC[i];
            dB[i] += dC[i];
        }
    });
    return c;
}

// broadcast add of a row vector: C[i,j] = A[i,j] + v[j]
inline Tensor add_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
    detail::check_rank2(a, "add_rowvec");
    if (v.rank() != 1 || v.shape()[0] != a.cols()) {
        throw std::invalid_argument("add_rowvec: vector shape " + shape_str(v.shape()) + " does not match " +
                                    shape_str(a.shape()));
    }
    const int m = a.rows(), n = a.cols();
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c.data()[i * n + j] = a.data()[i * n + j] + v.data()[j];
    tape.record([a, v, c, m, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dV = v.grad().data();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                dA[i * n + j] += dC[i * n + j];
                dV[j] += dC[i * n + j];
            }
        }
    });
    return c;
}

// broadcast multiply by a row vector: C[i,j] = A[i,j] * v[j]
inline Tensor mul_rowvec(Tape& tape, const Tensor& a, const Tensor& v) {
    detail::check_rank2(a, "mul_rowvec");
    if (v.rank() != 1 || v.shape()[0] != a.cols()) {
        throw std::invalid_argument("mul_rowvec: vector shape " + shape_str(v.shape()) + " does not match " +
                                    shape_str(a.shape()));
    }
    const int m = a.rows(), n = a.cols();
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c.data()[i * n + j] = a.data()[i * n + j] * v.data()[j];
    tape.record([a, v, c, m, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dV = v.grad().data();
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) {
                dA[i * n + j] += dC[i * n + j] * v.data()[j];
                dV[j] += dC[i * n + j] * a.data()[i * n + j];
            }
        }
    });
    return c;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    Tensor c = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.data()[i] = a.data()[i] * b.data()[i];
    tape.record([a, b, c, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double* dB = b.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            dA[i] += dC[i] * b.data()[i];
            dB[i] += dC[i] * a.data()[i];
        }
    });
    return c;
}

inline Tensor scale(Tape& tape, const Tensor& a, double s) {
    Tensor c = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.data()[i] = a.data()[i] * s;
    tape.record([a, c, s, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        for (std::size_t i = 0; i < n; ++i) dA[i] += dC[i] * s;
    });
    return c;
}

// C = A * exp(t), t a trainable scalar. Used for temperature scaling.
inline Tensor scale_by_exp(Tape& tape, const Tensor& a, const Tensor& t) {
    if (t.numel() != 1) throw std::invalid_argument("scale_by_exp: exponent must be scalar");
    const double e = std::exp(t.value());
    Tensor c = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) c.data()[i] = a.data()[i] * e;
    tape.record([a, t, c, e, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        double dt = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            dA[i] += dC[i] * e;
            dt += dC[i] * a.data()[i] * e;
        }
        t.grad()[0] += dt;
    });
    return c;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor c = Tensor::scalar(s);
    const std::size_t n = a.numel();
    tape.record([a, c, n]() {
        const double g = c.grad()[0];
        double* dA = a.grad().data();
        for (std::size_t i = 0; i < n; ++i) dA[i] += g;
    });
    return c;
}

inline Tensor mean(Tape& tape, const Tensor& a) {
    const std::size_t n = a.numel();
    double s = 0.0;
    for (double v : a.data()) s += v;
    Tensor c = Tensor::scalar(s / static_cast<double>(n));
    tape.record([a, c, n]() {
        const double g = c.grad()[0] / static_cast<double>(n);
        double* dA = a.grad().data();
        for (std::size_t i = 0; i < n; ++i) dA[i] += g;
    });
    return c;
}

namespace detail {
inline constexpr double kGeluCubic = 0.044715;
inline const double kGeluScale = std::sqrt(2.0 / std::numbers::pi);
}

// tanh approximation; the same closed form is used by finite-difference checks
inline Tensor gelu(Tape& tape, const Tensor& a) {
    Tensor c = Tensor::zeros(a.shape());
    const std::size_t n = a.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const double x = a.data()[i];
        const double u = detail::kGeluScale * (x + detail::kGeluCubic * x * x * x);
        c.data()[i] = 0.5 * x * (1.0 + std::tanh(u));
    }
    tape.record([a, c, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        for (std::size_t i = 0; i < n; ++i) {
            const double x = a.data()[i];
            const double u = detail::kGeluScale * (x + detail::kGeluCubic * x * x * x);
            const double th = std::tanh(u);
            const double du = detail::kGeluScale * (1.0 + 3.0 * detail::kGeluCubic * x * x);
            const double d = 0.5 * (1.0 + th) + 0.5 * x * (1.0 - th * th) * du;
            dA[i] += dC[i] * d;
        }
    });
    return c;
}

// Normalizes the last axis to zero mean / unit variance (pre-affine).
// eps = 1e-5 inside the sqrt, so a zero-variance row maps to zeros.
inline Tensor layer_norm(Tape& tape, const Tensor& a) {
    constexpr double kEps = 1e-5;
    const int ncols = a.shape()[a.rank() - 1];
    const std::size_t nrows = a.numel() / static_cast<std::size_t>(ncols);
    Tensor c = Tensor::zeros(a.shape());
    for (std::size_t r = 0; r < nrows; ++r) {
        const double* x = a.data().data() + r * ncols;
        double* y = c.data().data() + r * ncols;
        double mu = 0.0;
        for (int j = 0; j < ncols; ++j) mu += x[j];
        mu /= ncols;
        double var = 0.0;
        for (int j = 0; j < ncols; ++j) var += (x[j] - mu) * (x[j] - mu);
        var /= ncols;
        const double inv = 1.0 / std::sqrt(var + kEps);
        for (int j = 0; j < ncols; ++j) y[j] = (x[j] - mu) * inv;
    }
    tape.record([a, c, ncols, nrows]() {
        for (std::size_t r = 0; r < nrows; ++r) {
            const double* x = a.data().data() + r * ncols;
            const double* xhat = c.data().data() + r * ncols;
            const double* dy = c.grad().data() + r * ncols;
            double* dx = a.grad().data() + r * ncols;
            double mu = 0.0;
            for (int j = 0; j < ncols; ++j) mu += x[j];
            mu /= ncols;
            double var = 0.0;
            for (int j = 0; j < ncols; ++j) var += (x[j] - mu) * (x[j] - mu);
            var /= ncols;
            const double inv = 1.0 / std::sqrt(var + kEps);
            double mean_dy = 0.0, mean_dy_xhat = 0.0;
            for (int j = 0; j < ncols; ++j) {
                mean_dy += dy[j];
                mean_dy_xhat += dy[j] * xhat[j];
            }
            mean_dy /= ncols;
            mean_dy_xhat /= ncols;
            for (int j = 0; j < ncols; ++j) {
                dx[j] += inv * (dy[j] - mean_dy - xhat[j] * mean_dy_xhat);
            }
        }
    });
    return c;
}

// Softmax over one axis of a rank-1 or rank-2 tensor. -inf inputs get exactly
// zero probability, which is what the attention mask relies on.
inline Tensor softmax(Tape& tape, const Tensor& a, int axis) {
    if (a.rank() == 1) {
        if (axis != 0) throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for rank-1");
    } else if (a.rank() == 2) {
        if (axis != 0 && axis != 1) {
            throw std::invalid_argument("softmax: axis " + std::to_string(axis) + " out of range for rank-2");
        }
    } else {
        throw std::invalid_argument("softmax: expected rank 1 or 2, got " + shape_str(a.shape()));
    }
    const bool rowwise = (a.rank() == 1) || (axis == 1);
    const int m = (a.rank() == 1) ? 1 : a.rows();
    const int n = (a.rank() == 1) ? a.shape()[0] : a.cols();
    const int groups = rowwise ? m : n;
    const int len = rowwise ? n : m;
    const int gstride = rowwise ? n : 1;
    const int estride = rowwise ? 1 : n;

    Tensor c = Tensor::zeros(a.shape());
    for (int g = 0; g < groups; ++g) {
        const double* x = a.data().data() + g * gstride;
        double* y = c.data().data() + g * gstride;
        double mx = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < len; ++j) mx = std::max(mx, x[j * estride]);
        double s = 0.0;
        for (int j = 0; j < len; ++j) {
            const double e = std::exp(x[j * estride] - mx);
            y[j * estride] = e;
            s += e;
        }
        for (int j = 0; j < len; ++j) y[j * estride] /= s;
    }
    tape.record([a, c, groups, len, gstride, estride]() {
        for (int g = 0; g < groups; ++g) {
            const double* y = c.data().data() + g * gstride;
            const double* dy = c.grad().data() + g * gstride;
            double* dx = a.grad().data() + g * gstride;
            double dot = 0.0;
            for (int j = 0; j < len; ++j) dot += dy[j * estride] * y[j * estride];
            for (int j = 0; j < len; ++j) {
                dx[j * estride] += y[j * estride] * (dy[j * estride] - dot);
            }
        }
    });
    return c;
}

// Each row scaled to unit L2 norm.
inline Tensor l2_normalize_rows(Tape& tape, const Tensor& a) {
    detail::check_rank2(a, "l2_normalize_rows");
    const int m = a.rows(), n = a.cols();
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i) {
        const double* x = a.data().data() + i * n;
        double* y = c.data().data() + i * n;
        double ss = 0.0;
        for (int j = 0; j < n; ++j) ss += x[j] * x[j];
        const double r = std::sqrt(ss);
        if (r < 1e-30) throw std::runtime_error("l2_normalize_rows: zero row " + std::to_string(i));
        for (int j = 0; j < n; ++j) y[j] = x[j] / r;
    }
    tape.record([a, c, m, n]() {
        for (int i = 0; i < m; ++i) {
            const double* x = a.data().data() + i * n;
            const double* u = c.data().data() + i * n;
            const double* dy = c.grad().data() + i * n;
            double* dx = a.grad().data() + i * n;
            double ss = 0.0;
            for (int j = 0; j < n; ++j) ss += x[j] * x[j];
            const double r = std::sqrt(ss);
            double dot = 0.0;
            for (int j = 0; j < n; ++j) dot += dy[j] * u[j];
            for (int j = 0; j < n; ++j) dx[j] += (dy[j] - dot * u[j]) / r;
        }
    });
    return c;
}

// Rows of an embedding table gathered by id; backward scatter-adds.
inline Tensor embedding_rows(Tape& tape, const Tensor& table, const std::vector<int>& ids) {
    detail::check_rank2(table, "embedding_rows");
    if (ids.empty()) throw std::invalid_argument("embedding_rows: empty id list");
    const int v = table.rows(), d = table.cols();
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw std::invalid_argument("embedding_rows: id " + std::to_string(id) + " out of range [0," +
                                        std::to_string(v) + ")");
        }
    }
    const int t = static_cast<int>(ids.size());
    Tensor c = Tensor::zeros({t, d});
    for (int i = 0; i < t; ++i) {
        const double* src = table.data().data() + static_cast<std::size_t>(ids[i]) * d;
        double* dst = c.data().data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) dst[j] = src[j];
    }
    tape.record([table, c, ids, t, d]() {
        const double* dC = c.grad().data();
        double* dT = table.grad().data();
        for (int i = 0; i < t; ++i) {
            double* dst = dT + static_cast<std::size_t>(ids[i]) * d;
            const double* src = dC + static_cast<std::size_t>(i) * d;
            for (int j = 0; j < d; ++j) dst[j] += src[j];
        }
    });
    return c;
}

inline Tensor slice_rows(Tape& tape, const Tensor& a, int r0, int r1) {
    detail::check_rank2(a, "slice_rows");
    if (r0 < 0 || r1 > a.rows() || r0 >= r1) {
        throw std::invalid_argument("slice_rows: bad range [" + std::to_string(r0) + "," + std::to_string(r1) +
                                    ") for " + shape_str(a.shape()));
    }
    const int n = a.cols(), m = r1 - r0;
    Tensor c = Tensor::zeros({m, n});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) c.data()[i * n + j] = a.data()[(r0 + i) * n + j];
    tape.record([a, c, r0, m, n]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) dA[(r0 + i) * n + j] += dC[i * n + j];
    });
    return c;
}

inline Tensor slice_cols(Tape& tape, const Tensor& a, int c0, int c1) {
    detail::check_rank2(a, "slice_cols");
    if (c0 < 0 || c1 > a.cols() || c0 >= c1) {
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") for " + shape_str(a.shape()));
    }
    const int m = a.rows(), n = a.cols(), w = c1 - c0;
    Tensor c = Tensor::zeros({m, w});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < w; ++j) c.data()[i * w + j] = a.data()[i * n + c0 + j];
    tape.record([a, c, c0, m, n, w]() {
        const double* dC = c.grad().data();
        double* dA = a.grad().data();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) dA[i * n + c0 + j] += dC[i * w + j];
    });
    return c;
}

inline Tensor concat_rows(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_rows: empty input");
    const int n = parts[0].cols();
    int total = 0;
    for (const Tensor& p : parts) {
        detail::check_rank2(p, "concat_rows");
        if (p.cols() != n) {
            throw std::invalid_argument("concat_rows: column mismatch " + shape_str(p.shape()) + " vs " +
                                        shape_str(parts[0].shape()));
        }
        total += p.rows();
    }
    Tensor c = Tensor::zeros({total, n});
    int row = 0;
    for (const Tensor& p : parts) {
        for (std::size_t i = 0; i < p.numel(); ++i) c.data()[static_cast<std::size_t>(row) * n + i] = p.data()[i];
        row += p.rows();
    }
    tape.record([parts, c, n]() {
        const double* dC = c.grad().data();
        int row = 0;
        for (const Tensor& p : parts) {
            double* dP = p.grad().data();
            for (std::size_t i = 0; i < p.numel(); ++i) dP[i] += dC[static_cast<std::size_t>(row) * n + i];
            row += p.rows();
        }
    });
    return c;
}

inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const int m = parts[0].rows();
    int total = 0;
    for (const Tensor& p : parts) {
        detail::check_rank2(p, "concat_cols");
        if (p.rows() != m) {
            throw std::invalid_argument("concat_cols: row mismatch " + shape_str(p.shape()) + " vs " +
                                        shape_str(parts[0].shape()));
        }
        total += p.cols();
    }
    Tensor c = Tensor::zeros({m, total});
    int col = 0;
    for (const Tensor& p : parts) {
        const int w = p.cols();
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < w; ++j) c.data()[i * total + col + j] = p.data()[i * w + j];
        col += w;
    }
    tape.record([parts, c, m, total]() {
        const double* dC = c.grad().data();
        int col = 0;
        for (const Tensor& p : parts) {
            const int w = p.cols();
            double* dP = p.grad().data();
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j) dP[i * w + j] += dC[i * total + col + j];
            col += w;
        }
    });
    return c;
}

namespace detail {
// log(sum(exp(x))) over a strided slice, max-subtracted
inline double logsumexp(const double* x, int len, int stride) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < len; ++j) mx = std::max(mx, x[j * stride]);
    double s = 0.0;
    for (int j = 0; j < len; ++j) s += std::exp(x[j * stride] - mx);
    return mx + std::log(s);
}
}  // namespace detail

// Mean over rows i of cross-entropy with target column i (diagonal labels).
// Columns beyond the square part act as extra negative classes.
inline Tensor ce_diag_rows(Tape& tape, const Tensor& logits) {
    detail::check_rank2(logits, "ce_diag_rows");
    const int m = logits.rows(), n = logits.cols();
    if (n < m) {
        throw std::invalid_argument("ce_diag_rows: need cols >= rows, got " + shape_str(logits.shape()));
    }
    double loss = 0.0;
    for (int i = 0; i < m; ++i) {
        const double* row = logits.data().data() + static_cast<std::size_t>(i) * n;
        loss += detail::logsumexp(row, n, 1) - row[i];
    }
    Tensor c = Tensor::scalar(loss / m);
    tape.record([logits, c, m, n]() {
        const double g = c.grad()[0] / m;
        double* dL = logits.grad().data();
        for (int i = 0; i < m; ++i) {
            const double* row = logits.data().data() + static_cast<std::size_t>(i) * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (int j = 0; j < n; ++j) mx = std::max(mx, row[j]);
            double s = 0.0;
            for (int j = 0; j < n; ++j) s += std::exp(row[j] - mx);
            for (int j = 0; j < n; ++j) {
                const double p = std::exp(row[j] - mx) / s;
                dL[static_cast<std::size_t>(i) * n + j] += g * (p - (j == i ? 1.0 : 0.0));
            }
        }
    });
    return c;
}

// Mean over columns j < rows of cross-entropy down column j with target row j.
// Extra columns (explicit negatives) are never targets.
inline Tensor ce_diag_cols(Tape& tape, const Tensor& logits) {
    detail::check_rank2(logits, "ce_diag_cols");
    const int m = logits.rows(), n = logits.cols();
    if (n < m) {
        throw std::invalid_argument("ce_diag_cols: need cols >= rows, got " + shape_str(logits.shape()));
    }
    double loss = 0.0;
    for (int j = 0; j < m; ++j) {
        const double* col = logits.data().data() + j;
        loss += detail::logsumexp(col, m, n) - col[static_cast<std::size_t>(j) * n];
    }
    Tensor c = Tensor::scalar(loss / m);
    tape.record([logits, c, m, n]() {
        const double g = c.grad()[0] / m;
        double* dL = logits.grad().data();
        for (int j = 0; j < m; ++j) {
            const double* col = logits.data().data() + j;
            double mx = -std::numeric_limits<double>::infinity();
            for (int i = 0; i < m; ++i) mx = std::max(mx, col[static_cast<std::size_t>(i) * n]);
            double s = 0.0;
            for (int i = 0; i < m; ++i) s += std::exp(col[static_cast<std::size_t>(i) * n] - mx);
            for (int i = 0; i < m; ++i) {
                const double p = std::exp(col[static_cast<std::size_t>(i) * n] - mx) / s;
                dL[static_cast<std::size_t>(i) * n + j] += g * (p - (i == j ? 1.0 : 0.0));
            }
        }
    });
    return c;
}

// ----------------------------------------------------------------------------
// gradient checking
// ----------------------------------------------------------------------------

// Max over coordinates of |analytic - numeric| / max(1, |analytic|, |numeric|),
// with central finite differences of f at x.
inline double grad_check(const std::function<Tensor(Tape&, const Tensor&)>& f, const Tensor& x, double eps = 1e-5) {
    Tensor xv = x;  // shared handle; coordinates are perturbed and restored in place
    xv.zero_grad();
    std::vector<double> analytic;
    {
        Tape tape;
        Tensor y = f(tape, xv);
        if (y.numel() != 1) throw std::invalid_argument("grad_check: f must be scalar-valued");
        tape.backward(y);
        analytic = xv.grad();
    }
    double max_err = 0.0;
    for (std::size_t i = 0; i < xv.numel(); ++i) {
        const double orig = xv.data()[i];
        xv.data()[i] = orig + eps;
        double yp;
        {
            Tape tape;
            yp = f(tape, xv).value();
        }
        xv.data()[i] = orig - eps;
        double ym;
        {
            Tape tape;
            ym = f(tape, xv).value();
        }
        xv.data()[i] = orig;
        const double numeric = (yp - ym) / (2.0 * eps);
        const double a = analytic[i];
        const double err = std::abs(a - numeric) / std::max({1.0, std::abs(a), std::abs(numeric)});
        max_err = std::max(max_err, err);
    }
    xv.zero_grad();
    return max_err;
}

}  // namespace cpte
