#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace placer {

// Dense row-major tensor of 64-bit floats. All numerics in this project use
// doubles; non-finite values are treated as errors at op boundaries.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> vals) : shape(std::move(s)), v(std::move(vals)) {
        if (v.size() != numel_of(shape)) throw std::invalid_argument("tensor: values do not match shape");
    }

    static std::size_t numel_of(const std::vector<int>& s) {
        std::size_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= static_cast<std::size_t>(d);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.shape = std::move(s);
        t.v.assign(numel_of(t.shape), 0.0);
        return t;
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }

    std::size_t numel() const { return v.size(); }
    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? 1 : shape[1]; }

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * cols() + j]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double x) { std::fill(v.begin(), v.end(), x); }
};

inline void check_finite(const Tensor& t, const std::string& what) {
    for (double x : t.v)
        if (!std::isfinite(x)) throw std::runtime_error("non-finite value in " + what);
}

inline void check_finite(double x, const std::string& what) {
    if (!std::isfinite(x)) throw std::runtime_error("non-finite value in " + what);
}

// C = A * B, A is [n x k], B is [k x m]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    const int n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) throw std::invalid_argument("matmul: shape mismatch");
    Tensor c = Tensor::zeros({n, m});
    for (int i = 0; i < n; ++i) {
        const double* ar = &a.v[static_cast<std::size_t>(i) * k];
        double* cr = &c.v[static_cast<std::size_t>(i) * m];
        for (int p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = &b.v[static_cast<std::size_t>(p) * m];
            for (int j = 0; j < m; ++j) cr[j] += av * br[j];
        }
    }
    return c;
}

// C += A^T * B, A is [n x k], B is [n x m], C is [k x m]
inline void matmul_at_b_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != n || c.rows() != k || c.cols() != m) throw std::invalid_argument("matmul_at_b: shape mismatch");
    for (int i = 0; i < n; ++i) {
        const double* ar = &a.v[static_cast<std::size_t>(i) * k];
        const double* br = &b.v[static_cast<std::size_t>(i) * m];
        for (int p = 0; p < k; ++p) {
            const double av = ar[p];
            double* cr = &c.v[static_cast<std::size_t>(p) * m];
            for (int j = 0; j < m; ++j) cr[j] += av * br[j];
        }
    }
}

// C += A * B^T, A is [n x m], B is [k x m], C is [n x k]
inline void matmul_a_bt_acc(const Tensor& a, const Tensor& b, Tensor& c) {
    const int n = a.rows(), m = a.cols(), k = b.rows();
    if (b.cols() != m || c.rows() != n || c.cols() != k) throw std::invalid_argument("matmul_a_bt: shape mismatch");
    for (int i = 0; i < n; ++i) {
        const double* ar = &a.v[static_cast<std::size_t>(i) * m];
        double* cr = &c.v[static_cast<std::size_t>(i) * k];
        for (int p = 0; p < k; ++p) {
            const double* br = &b.v[static_cast<std::size_t>(p) * m];
            double s = 0.0;
            for (int j = 0; j < m; ++j) s += ar[j] * br[j];
            cr[p] += s;
        }
    }
}

}  // namespace placer
