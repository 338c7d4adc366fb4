#include "tmc/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <thread>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

// Per thread so concurrent solves can pick their own mode.
thread_local bool g_sequential = true;

// Runs body(begin, end) over [0, count), split across hardware threads unless
// sequential mode is on.
void for_slabs(std::size_t count, const std::function<void(std::size_t, std::size_t)>& body) {
    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());
    if (g_sequential || hw == 1 || count < 2) {
        body(0, count);
        return;
    }
    const std::size_t workers = std::min<std::size_t>(hw, count);
    const std::size_t chunk = (count + workers - 1) / workers;
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        const std::size_t begin = w * chunk;
        const std::size_t end = std::min(count, begin + chunk);
        if (begin >= end) break;
        pool.emplace_back([&body, begin, end] { body(begin, end); });
    }
}

struct ModeSplit {
    std::size_t left = 1;   // product of dims before the mode
    std::size_t extent = 1; // dim of the mode
    std::size_t right = 1;  // product of dims after the mode
};

ModeSplit split_at(const Dims& dims, std::size_t mode) {
    ModeSplit s;
    for (std::size_t i = 0; i < mode; ++i) s.left *= dims[i];
    s.extent = dims[mode];
    for (std::size_t i = mode + 1; i < dims.size(); ++i) s.right *= dims[i];
    return s;
}

void check_mode(const DenseTensor& t, std::size_t mode) {
    if (mode >= t.order()) {
        throw ArgumentError("mode " + std::to_string(mode) + " out of range for order-" +
                            std::to_string(t.order()) + " tensor");
    }
}

}  // namespace

void set_sequential_reduction(bool sequential) { g_sequential = sequential; }
bool sequential_reduction() { return g_sequential; }

std::size_t dims_product(std::span<const std::size_t> dims) {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>());
}

DenseTensor::DenseTensor(Dims dims) : DenseTensor(dims, std::vector<double>(dims_product(dims), 0.0)) {}

DenseTensor::DenseTensor(Dims dims, std::vector<double> data) : dims_(std::move(dims)), data_(std::move(data)) {
    if (dims_.empty()) throw ArgumentError("tensor must have at least one mode");
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (dims_[i] == 0) throw ArgumentError("tensor dim " + std::to_string(i) + " is zero");
    }
    if (data_.size() != dims_product(dims_)) {
        throw ArgumentError("tensor data length " + std::to_string(data_.size()) + " does not match dims product " +
                            std::to_string(dims_product(dims_)));
    }
}

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
    std::vector<double> data(m.data(), m.data() + m.size());
    return DenseTensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())}, std::move(data));
}

std::size_t DenseTensor::linear_index(std::span<const std::size_t> index) const {
    if (index.size() != dims_.size()) throw ArgumentError("index order does not match tensor order");
    std::size_t linear = 0;
    std::size_t stride = 1;
    for (std::size_t i = 0; i < dims_.size(); ++i) {
        if (index[i] >= dims_[i]) throw ArgumentError("index out of range in mode " + std::to_string(i));
        linear += index[i] * stride;
        stride *= dims_[i];
    }
    return linear;
}

double& DenseTensor::at(std::span<const std::size_t> index) { return data_[linear_index(index)]; }
double DenseTensor::at(std::span<const std::size_t> index) const { return data_[linear_index(index)]; }

bool DenseTensor::all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Matrix unfold(const DenseTensor& t, std::size_t mode) {
    check_mode(t, mode);
    const ModeSplit s = split_at(t.dims(), mode);
    Matrix out(s.extent, s.left * s.right);
    const double* src = t.data().data();
    if (s.left == 1) {
        std::copy(src, src + t.size(), out.data());
        return out;
    }
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t i = 0; i < s.extent; ++i) {
            const double* fiber = src + s.left * (i + s.extent * r);
            for (std::size_t l = 0; l < s.left; ++l) out(i, l + s.left * r) = fiber[l];
        }
    }
    return out;
}

DenseTensor fold(const Matrix& m, std::size_t mode, const Dims& dims) {
    if (mode >= dims.size()) throw ArgumentError("fold mode " + std::to_string(mode) + " out of range");
    const ModeSplit s = split_at(dims, mode);
    if (static_cast<std::size_t>(m.rows()) != s.extent || static_cast<std::size_t>(m.cols()) != s.left * s.right) {
        throw ArgumentError("fold: matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            " inconsistent with dims at mode " + std::to_string(mode));
    }
    DenseTensor out(dims);
    double* dst = out.data().data();
    if (s.left == 1) {
        std::copy(m.data(), m.data() + m.size(), dst);
        return out;
    }
    for (std::size_t r = 0; r < s.right; ++r) {
        for (std::size_t i = 0; i < s.extent; ++i) {
            double* fiber = dst + s.left * (i + s.extent * r);
            for (std::size_t l = 0; l < s.left; ++l) fiber[l] = m(i, l + s.left * r);
        }
    }
    return out;
}

DenseTensor ttm(const DenseTensor& t, const Matrix& m, std::size_t mode, Transpose transpose) {
    check_mode(t, mode);
    const bool tr = transpose == Transpose::Yes;
    const std::size_t inner = static_cast<std::size_t>(tr ? m.rows() : m.cols());
    const std::size_t outer = static_cast<std::size_t>(tr ? m.cols() : m.rows());
    if (inner != t.dim(mode)) {
        throw ArgumentError("ttm: matrix inner dimension " + std::to_string(inner) + " does not match tensor dim " +
                            std::to_string(t.dim(mode)) + " in mode " + std::to_string(mode));
    }
    const ModeSplit s = split_at(t.dims(), mode);
    Dims out_dims = t.dims();
    out_dims[mode] = outer;
    DenseTensor out(out_dims);

    using ConstMap = Eigen::Map<const Matrix>;
    using MutMap = Eigen::Map<Matrix>;
    const double* src = t.data().data();
    double* dst = out.data().data();

    if (s.left == 1) {
        // Leading mode: the tensor is already the s_0 x rest unfolding.
        const std::size_t cols_per_chunk = 4096;
        const std::size_t chunks = (s.right + cols_per_chunk - 1) / cols_per_chunk;
        for_slabs(chunks, [&](std::size_t b, std::size_t e) {
            for (std::size_t c = b; c < e; ++c) {
                const std::size_t c0 = c * cols_per_chunk;
                const std::size_t nc = std::min(cols_per_chunk, s.right - c0);
                ConstMap x(src + c0 * s.extent, static_cast<Eigen::Index>(s.extent), static_cast<Eigen::Index>(nc));
                MutMap y(dst + c0 * outer, static_cast<Eigen::Index>(outer), static_cast<Eigen::Index>(nc));
                if (tr) {
                    y.noalias() = m.transpose() * x;
                } else {
                    y.noalias() = m * x;
                }
            }
        });
        return out;
    }

    for_slabs(s.right, [&](std::size_t b, std::size_t e) {
        for (std::size_t r = b; r < e; ++r) {
            ConstMap x(src + r * s.left * s.extent, static_cast<Eigen::Index>(s.left), static_cast<Eigen::Index>(s.extent));
            MutMap y(dst + r * s.left * outer, static_cast<Eigen::Index>(s.left), static_cast<Eigen::Index>(outer));
            if (tr) {
                y.noalias() = x * m;
            } else {
                y.noalias() = x * m.transpose();
            }
        }
    });
    return out;
}

DenseTensor ttmc(const DenseTensor& t, std::span<const Matrix> factors, std::optional<std::size_t> skip) {
    if (factors.size() != t.order()) {
        throw ArgumentError("ttmc: expected " + std::to_string(t.order()) + " factors, got " +
                            std::to_string(factors.size()));
    }
    if (skip && *skip >= t.order()) throw ArgumentError("ttmc: skip mode " + std::to_string(*skip) + " out of range");
    for (std::size_t i = 0; i < t.order(); ++i) {
        if (skip && i == *skip) continue;
        if (static_cast<std::size_t>(factors[i].rows()) != t.dim(i)) {
            throw ArgumentError("ttmc: factor for mode " + std::to_string(i) + " has " +
                                std::to_string(factors[i].rows()) + " rows, tensor dim is " + std::to_string(t.dim(i)));
        }
    }
    // Contract the modes with the strongest size reduction first.
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < t.order(); ++i) {
        if (!skip || i != *skip) order.push_back(i);
    }
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ra = static_cast<double>(factors[a].cols()) / static_cast<double>(t.dim(a));
        const double rb = static_cast<double>(factors[b].cols()) / static_cast<double>(t.dim(b));
        return ra < rb;
    });
    if (order.empty()) return t;
    DenseTensor cur = ttm(t, factors[order.front()], order.front(), Transpose::Yes);
    for (std::size_t k = 1; k < order.size(); ++k) cur = ttm(cur, factors[order[k]], order[k], Transpose::Yes);
    return cur;
}

Matrix gram(const Matrix& m) {
    Matrix g = Matrix::Zero(m.rows(), m.rows());
    g.selfadjointView<Eigen::Lower>().rankUpdate(m);
    g.triangularView<Eigen::StrictlyUpper>() = g.transpose();
    return g;
}

void apply_sign_rule(Matrix& m) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
        Eigen::Index arg = 0;
        double best = -1.0;
        for (Eigen::Index r = 0; r < m.rows(); ++r) {
            const double a = std::abs(m(r, c));
            if (a > best) {
                best = a;
                arg = r;
            }
        }
        if (m(arg, c) < 0.0) m.col(c) = -m.col(c);
    }
}

EigenPairs leading_eigvecs(const Matrix& g, std::size_t k) {
    if (g.rows() != g.cols()) throw ArgumentError("leading_eigvecs: matrix is not square");
    const auto n = static_cast<std::size_t>(g.rows());
    if (k < 1 || k > n) {
        throw ArgumentError("leading_eigvecs: k=" + std::to_string(k) + " out of range 1.." + std::to_string(n));
    }
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    if ((g - g.transpose()).cwiseAbs().maxCoeff() > 1e-10 * scale) {
        throw ArgumentError("leading_eigvecs: matrix is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Matrix> solver(g);
    if (solver.info() != Eigen::Success) throw NumericError("symmetric eigensolver did not converge");

    EigenPairs out;
    out.vectors.resize(g.rows(), static_cast<Eigen::Index>(k));
    out.values.resize(static_cast<Eigen::Index>(k));
    // Eigen returns ascending eigenvalues.
    for (std::size_t j = 0; j < k; ++j) {
        const auto src = static_cast<Eigen::Index>(n - 1 - j);
        out.vectors.col(static_cast<Eigen::Index>(j)) = solver.eigenvectors().col(src);
        out.values(static_cast<Eigen::Index>(j)) = solver.eigenvalues()(src);
    }
    if (!out.vectors.allFinite()) throw NumericError("eigenvectors contain non-finite values");
    apply_sign_rule(out.vectors);
    return out;
}

double squared_norm(const DenseTensor& t) {
    double acc = 0.0;
    for (double v : t.data()) acc += v * v;
    return acc;
}

double fro_norm(const DenseTensor& t) { return std::sqrt(squared_norm(t)); }

namespace {
DenseTensor elementwise(const DenseTensor& a, const DenseTensor& b, double sign) {
    if (a.dims() != b.dims()) throw ArgumentError("elementwise op on tensors with different dims");
    std::vector<double> out(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] + sign * b[i];
    return DenseTensor(a.dims(), std::move(out));
}
}  // namespace

DenseTensor operator-(const DenseTensor& a, const DenseTensor& b) { return elementwise(a, b, -1.0); }
DenseTensor operator+(const DenseTensor& a, const DenseTensor& b) { return elementwise(a, b, 1.0); }

}  // namespace tmc
