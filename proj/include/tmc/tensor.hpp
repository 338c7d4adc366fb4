#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace tmc {

// Column-major dense matrix. Factor matrices, unfoldings and Gram matrices all use it.
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

using Dims = std::vector<std::size_t>;

std::size_t dims_product(std::span<const std::size_t> dims);

// Order-N dense tensor, linearized with the first index varying fastest.
// Modes are numbered from 0.
class DenseTensor {
public:
    DenseTensor() = default;
    explicit DenseTensor(Dims dims);  // zero-filled
    DenseTensor(Dims dims, std::vector<double> data);

    static DenseTensor from_matrix(const Matrix& m);

    const Dims& dims() const noexcept { return dims_; }
    std::size_t dim(std::size_t mode) const { return dims_.at(mode); }
    std::size_t order() const noexcept { return dims_.size(); }
    std::size_t size() const noexcept { return data_.size(); }

    std::span<const double> data() const noexcept { return data_; }
    std::span<double> data() noexcept { return data_; }

    double& operator[](std::size_t linear) { return data_[linear]; }
    double operator[](std::size_t linear) const { return data_[linear]; }

    double& at(std::span<const std::size_t> index);
    double at(std::span<const std::size_t> index) const;
    double& at(std::initializer_list<std::size_t> index) { return at(std::span(index.begin(), index.size())); }
    double at(std::initializer_list<std::size_t> index) const { return at(std::span(index.begin(), index.size())); }

    std::size_t linear_index(std::span<const std::size_t> index) const;

    bool all_finite() const noexcept;

    friend bool operator==(const DenseTensor&, const DenseTensor&) = default;

private:
    Dims dims_;
    std::vector<double> data_;
};

// Mode-n unfolding: s_mode x prod(other dims); remaining indices ordered lowest mode fastest.
Matrix unfold(const DenseTensor& t, std::size_t mode);
DenseTensor fold(const Matrix& m, std::size_t mode, const Dims& dims);

enum class Transpose { No, Yes };

// Mode-n product t x_mode M (or M^T when transpose == Yes).
DenseTensor ttm(const DenseTensor& t, const Matrix& m, std::size_t mode, Transpose transpose = Transpose::No);

// Multiplies t by factors[i]^T along every mode i except `skip`.
// factors[i] must have t.dim(i) rows; factors[skip] is ignored.
DenseTensor ttmc(const DenseTensor& t, std::span<const Matrix> factors, std::optional<std::size_t> skip = std::nullopt);

// Symmetric product m * m^T; the lower triangle is mirrored so the result is exactly symmetric.
Matrix gram(const Matrix& m);

struct EigenPairs {
    Matrix vectors;  // rows x k, orthonormal columns
    Vector values;   // nonincreasing
};

// Dominant k eigenpairs of a symmetric matrix. Each column is sign-fixed so its
// largest-magnitude entry (first one on ties) is positive.
EigenPairs leading_eigvecs(const Matrix& g, std::size_t k);

// Flip columns so the largest-magnitude entry of each is positive.
void apply_sign_rule(Matrix& m);

double fro_norm(const DenseTensor& t);
double squared_norm(const DenseTensor& t);

DenseTensor operator-(const DenseTensor& a, const DenseTensor& b);
DenseTensor operator+(const DenseTensor& a, const DenseTensor& b);

// Contraction kernels split work over independent slabs when parallel mode is on.
// Slabs never share a reduction, so results are identical in both modes.
void set_sequential_reduction(bool sequential);
bool sequential_reduction();

}  // namespace tmc
