#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "tmc/tensor.hpp"

namespace tmc {

// Core tensor plus one orthonormal-column factor per mode.
struct TuckerModel {
    DenseTensor core;
    std::vector<Matrix> factors;  // factors[r] is source_dims[r] x ranks[r]

    Dims ranks() const { return core.dims(); }
    Dims source_dims() const;

    // Throws ArgumentError if shapes disagree or a factor is not orthonormal within `tol`.
    void validate(double orthonormality_tol = 1e-8) const;
};

struct SolveConfig {
    Dims ranks;
    std::size_t max_sweeps = 50;
    double fit_tol = 1e-5;
    double pp_enter_tol = 0.1;
    double pp_exit_tol = 0.3;
    bool use_pairwise_perturbation = true;
    bool sequential_reduction = true;
    std::uint64_t seed = 0;

    void validate(const Dims& dims) const;
};

// max_r || S^T S - I ||_max over all factors.
double orthonormality_error(const Matrix& factor);

TuckerModel hosvd(const DenseTensor& t);
TuckerModel t_hosvd(const DenseTensor& t, const Dims& ranks);

// One HOOI pass over all modes in order, then an exact core.
TuckerModel hooi_sweep(const DenseTensor& t, const TuckerModel& model);

DenseTensor reconstruct(const TuckerModel& model);

// 1 - ||t - reconstruct(model)||_F / ||t||_F, by explicit reconstruction.
double fit(const DenseTensor& t, const TuckerModel& model);
// Same quantity through ||t - t_hat||^2 = ||t||^2 - ||core||^2; valid only when
// the core is the projection of t onto orthonormal factors.
double fit_from_core(double t_norm, const DenseTensor& core);

// Operators for the pairwise-perturbation approximation around anchor factors.
class PPState {
public:
    struct Contraction {
        std::uint32_t kept_mask;  // modes still uncontracted in the input
        std::size_t mode;         // mode being contracted
        friend auto operator<=>(const Contraction&, const Contraction&) = default;
    };

    // Builds single-skip and pair-skip operators through a binary dimension tree.
    PPState(const DenseTensor& t, std::vector<Matrix> anchors);

    std::size_t order() const noexcept { return anchors_.size(); }
    const std::vector<Matrix>& anchors() const noexcept { return anchors_; }
    const std::vector<Matrix>& deltas() const noexcept { return deltas_; }

    // t contracted with every anchor except mode n.
    const DenseTensor& single(std::size_t n) const { return single_.at(n); }
    // t contracted with every anchor except modes i and n (order of i, n irrelevant).
    const DenseTensor& pair(std::size_t i, std::size_t n) const;

    void set_delta(std::size_t n, Matrix delta);
    void set_factors(std::span<const Matrix> factors);

    // Y_p(n) + sum_{i != n} Y_p(i,n) x_i dS(i)^T
    DenseTensor estimate(std::size_t n) const;

    // Every ttm issued while building the operators, in issue order.
    const std::vector<Contraction>& contraction_log() const noexcept { return log_; }
    // Modes in the order they were contracted to produce single(n), traced back through the log.
    std::vector<std::size_t> contraction_path(std::size_t n) const;

    // Number of ttm calls that computing every operator independently would take.
    static std::size_t naive_contraction_count(std::size_t order);

private:
    DenseTensor contract(const DenseTensor& x, std::uint32_t kept_mask, std::size_t mode);
    DenseTensor contract_set(DenseTensor x, std::uint32_t& kept_mask, std::span<const std::size_t> modes);
    void build_pairs(const DenseTensor& x, std::uint32_t kept_mask, std::span<const std::size_t> modes);
    void build_leaves(const DenseTensor& x, std::uint32_t kept_mask, std::span<const std::size_t> modes,
                      std::vector<std::pair<std::size_t, DenseTensor>>& out);

    std::vector<Matrix> anchors_;
    std::vector<Matrix> deltas_;
    std::vector<DenseTensor> single_;
    std::map<std::pair<std::size_t, std::size_t>, DenseTensor> pair_;
    std::vector<Contraction> log_;
    // Partial contractions during construction, keyed by the mask of uncontracted modes.
    std::map<std::uint32_t, DenseTensor> cache_;
};

// Reference single- and pair-skip operators by direct contraction, no reuse.
DenseTensor naive_single_operator(const DenseTensor& t, std::span<const Matrix> anchors, std::size_t n);
DenseTensor naive_pair_operator(const DenseTensor& t, std::span<const Matrix> anchors, std::size_t i, std::size_t n);

// HOOI sweep driven by the perturbation estimates instead of exact TTMc results.
// Updates the state's deltas as each factor changes. The returned core is exact.
TuckerModel pp_sweep(const DenseTensor& t, PPState& state, const TuckerModel& model);

enum class SweepKind { Init, Standard, PairwisePerturbation };

struct SweepRecord {
    SweepKind kind;
    double fit;
    std::vector<double> factor_change;  // ||S_new - S_old||_F / ||S_old||_F per mode
};

struct SolveResult {
    TuckerModel model;
    std::vector<SweepRecord> trace;
    bool converged = false;
};

// T-HOSVD init, standard sweeps until factors settle, then pairwise-perturbation
// sweeps with anchor rebuilds when the perturbation grows too large.
SolveResult tucker_als(const DenseTensor& t, const SolveConfig& cfg);

const char* to_string(SweepKind kind);

}  // namespace tmc
