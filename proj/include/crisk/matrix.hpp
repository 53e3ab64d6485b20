#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "crisk/errors.hpp"
#include "crisk/rng.hpp"

namespace crisk {

// Dense row-major matrix, sized for factor-level work (up to a few hundred dims).
class Matrix {
public:
    Matrix() : rows_(0), cols_(0) {}
    Matrix(std::size_t rows, std::size_t cols, double value = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, value) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }

    double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

    const double* row(std::size_t i) const { return data_.data() + i * cols_; }
    double* row(std::size_t i) { return data_.data() + i * cols_; }

    Matrix transpose() const {
        Matrix t(cols_, rows_);
        for (std::size_t i = 0; i < rows_; ++i)
            for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
        return t;
    }

private:
    std::size_t rows_, cols_;
    std::vector<double> data_;
};

inline Matrix operator*(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw input_error("matrix product: dimension mismatch");
    Matrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t k = 0; k < a.cols(); ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline bool is_symmetric(const Matrix& m, double rel_tol = 1e-12) {
    if (m.rows() != m.cols()) return false;
    double scale = 1.0;
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = 0; j < m.cols(); ++j) scale = std::max(scale, std::fabs(m(i, j)));
    for (std::size_t i = 0; i < m.rows(); ++i)
        for (std::size_t j = i + 1; j < m.cols(); ++j)
            if (std::fabs(m(i, j) - m(j, i)) > rel_tol * scale) return false;
    return true;
}

namespace detail {

// Plain Cholesky; throws numeric_error on a non-positive pivot.
inline Matrix cholesky_strict(const Matrix& a) {
    const std::size_t n = a.rows();
    Matrix l(n, n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = a(i, j);
            for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
            if (i == j) {
                if (s <= 0.0) throw numeric_error("cholesky: matrix not positive definite");
                l(i, i) = std::sqrt(s);
            } else {
                l(i, j) = s / l(j, j);
            }
        }
    }
    return l;
}

}  // namespace detail

struct SymmetricEigen {
    std::vector<double> values;
    Matrix vectors;  // columns are eigenvectors
};

// Cyclic Jacobi rotations; plenty for the factor-level dimensions in play.
inline SymmetricEigen symmetric_eigen(const Matrix& input) {
    if (!is_symmetric(input, 1e-9)) throw input_error("symmetric_eigen: matrix not symmetric");
    const std::size_t n = input.rows();
    Matrix a = input;
    Matrix v = Matrix::identity(n);
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i + 1; j < n; ++j) off += a(i, j) * a(i, j);
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                if (std::fabs(a(p, q)) < 1e-300) continue;
                const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
                const double t = (theta >= 0.0 ? 1.0 : -1.0) /
                                 (std::fabs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a(k, p), akq = a(k, q);
                    a(k, p) = c * akp - s * akq;
                    a(k, q) = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a(p, k), aqk = a(q, k);
                    a(p, k) = c * apk - s * aqk;
                    a(q, k) = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p), vkq = v(k, q);
                    v(k, p) = c * vkp - s * vkq;
                    v(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }
    SymmetricEigen out;
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a(i, i);
    out.vectors = v;
    return out;
}

// Nearest-PSD style repair: clip negative eigenvalues at zero, then restore a
// unit diagonal wherever the input had one.
inline Matrix repair_psd(const Matrix& cov) {
    const std::size_t n = cov.rows();
    SymmetricEigen eig = symmetric_eigen(cov);
    Matrix repaired(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < n; ++k) {
                const double lambda = std::max(eig.values[k], 0.0);
                s += eig.vectors(i, k) * lambda * eig.vectors(j, k);
            }
            repaired(i, j) = s;
        }
    std::vector<double> scale(n, 1.0);
    for (std::size_t i = 0; i < n; ++i)
        if (std::fabs(cov(i, i) - 1.0) < 1e-9 && repaired(i, i) > 1e-14)
            scale[i] = 1.0 / std::sqrt(repaired(i, i));
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) repaired(i, j) *= scale[i] * scale[j];
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double m = 0.5 * (repaired(i, j) + repaired(j, i));
            repaired(i, j) = repaired(j, i) = m;
        }
    return repaired;
}

// Lower-triangular factor of a symmetric covariance matrix. Positive definite
// input passes straight through; anything else is repaired by eigenvalue
// clipping (plus diagonal rescaling where the input diagonal was unit) and
// factored with a small diagonal jitter.
inline Matrix cholesky_psd(const Matrix& cov) {
    if (cov.rows() != cov.cols() || !is_symmetric(cov))
        throw input_error("cholesky_psd: matrix must be symmetric");
    if (cov.rows() == 0) return cov;
    try {
        return detail::cholesky_strict(cov);
    } catch (const numeric_error&) {
    }
    Matrix repaired = repair_psd(cov);
    double maxdiag = 1.0;
    for (std::size_t i = 0; i < repaired.rows(); ++i)
        maxdiag = std::max(maxdiag, repaired(i, i));
    double jitter = 1e-12 * maxdiag;
    for (int attempt = 0; attempt < 8; ++attempt) {
        Matrix jittered = repaired;
        for (std::size_t i = 0; i < jittered.rows(); ++i) jittered(i, i) += jitter;
        try {
            return detail::cholesky_strict(jittered);
        } catch (const numeric_error&) {
            jitter *= 10.0;
        }
    }
    throw numeric_error("cholesky_psd: repair failed to produce a factorable matrix");
}

// factor * iid standard normals, consuming exactly factor.rows() normal draws.
inline std::vector<double> sample_correlated_gaussians(const Matrix& factor, RngStream& rng) {
    const std::size_t n = factor.rows();
    std::vector<double> z(n);
    for (std::size_t i = 0; i < n; ++i) z[i] = rng.next_normal();
    std::vector<double> out(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = factor.row(i);
        double s = 0.0;
        for (std::size_t j = 0; j <= i; ++j) s += row[j] * z[j];
        out[i] = s;
    }
    return out;
}

// Unbiased sample covariance (divisor n-1) with pairwise deletion of entries
// where either series is NaN.
inline double sample_cov(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw input_error("sample_cov: series lengths differ");
    double sa = 0.0, sb = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) continue;
        sa += a[i];
        sb += b[i];
        ++n;
    }
    if (n < 2) throw input_error("sample_cov: need at least 2 paired observations");
    const double ma = sa / n, mb = sb / n;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (std::isnan(a[i]) || std::isnan(b[i])) continue;
        s += (a[i] - ma) * (b[i] - mb);
    }
    return s / (n - 1);
}

inline double sample_mean(std::span<const double> a) {
    double s = 0.0;
    std::size_t n = 0;
    for (double v : a) {
        if (std::isnan(v)) continue;
        s += v;
        ++n;
    }
    if (n == 0) throw input_error("sample_mean: no observations");
    return s / n;
}

}  // namespace crisk
