#include "tmc/tucker.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "tmc/errors.hpp"

namespace tmc {

namespace {

class SequentialGuard {
public:
    explicit SequentialGuard(bool sequential) : previous_(sequential_reduction()) {
        set_sequential_reduction(sequential);
    }
    ~SequentialGuard() { set_sequential_reduction(previous_); }
    SequentialGuard(const SequentialGuard&) = delete;
    SequentialGuard& operator=(const SequentialGuard&) = delete;

private:
    bool previous_;
};

void check_ranks(const Dims& dims, const Dims& ranks) {
    if (ranks.size() != dims.size()) {
        throw ArgumentError("expected " + std::to_string(dims.size()) + " ranks, got " + std::to_string(ranks.size()));
    }
    for (std::size_t r = 0; r < dims.size(); ++r) {
        if (ranks[r] < 1 || ranks[r] > dims[r]) {
            throw ArgumentError("rank " + std::to_string(ranks[r]) + " for mode " + std::to_string(r) +
                                " outside 1.." + std::to_string(dims[r]));
        }
    }
}

Matrix mode_factor(const DenseTensor& y, std::size_t mode, std::size_t rank) {
    return leading_eigvecs(gram(unfold(y, mode)), rank).vectors;
}

constexpr std::uint32_t bit(std::size_t mode) { return std::uint32_t{1} << mode; }

}  // namespace

Dims TuckerModel::source_dims() const {
    Dims d;
    d.reserve(factors.size());
    for (const auto& f : factors) d.push_back(static_cast<std::size_t>(f.rows()));
    return d;
}

double orthonormality_error(const Matrix& factor) {
    const Matrix g = factor.transpose() * factor;
    return (g - Matrix::Identity(g.rows(), g.cols())).cwiseAbs().maxCoeff();
}

void TuckerModel::validate(double orthonormality_tol) const {
    if (factors.size() != core.order()) {
        throw ArgumentError("model has " + std::to_string(factors.size()) + " factors for an order-" +
                            std::to_string(core.order()) + " core");
    }
    for (std::size_t r = 0; r < factors.size(); ++r) {
        if (static_cast<std::size_t>(factors[r].cols()) != core.dim(r)) {
            throw ArgumentError("factor " + std::to_string(r) + " column count does not match core dim");
        }
        if (factors[r].rows() < factors[r].cols()) {
            throw ArgumentError("factor " + std::to_string(r) + " has rank above its source dim");
        }
        if (orthonormality_error(factors[r]) > orthonormality_tol) {
            throw ArgumentError("factor " + std::to_string(r) + " is not orthonormal");
        }
    }
}

void SolveConfig::validate(const Dims& dims) const {
    check_ranks(dims, ranks);
    if (!(fit_tol > 0.0) || !(pp_enter_tol > 0.0) || !(pp_exit_tol > 0.0)) {
        throw ArgumentError("solver tolerances must be positive");
    }
}

TuckerModel t_hosvd(const DenseTensor& t, const Dims& ranks) {
    check_ranks(t.dims(), ranks);
    TuckerModel model;
    model.factors.reserve(t.order());
    for (std::size_t r = 0; r < t.order(); ++r) model.factors.push_back(mode_factor(t, r, ranks[r]));
    model.core = ttmc(t, model.factors);
    return model;
}

TuckerModel hosvd(const DenseTensor& t) { return t_hosvd(t, t.dims()); }

TuckerModel hooi_sweep(const DenseTensor& t, const TuckerModel& model) {
    if (model.source_dims() != t.dims()) throw ArgumentError("hooi_sweep: model does not match tensor dims");
    TuckerModel next = model;
    const Dims ranks = model.ranks();
    for (std::size_t n = 0; n < t.order(); ++n) {
        const DenseTensor y = ttmc(t, next.factors, n);
        next.factors[n] = mode_factor(y, n, ranks[n]);
    }
    next.core = ttmc(t, next.factors);
    return next;
}

DenseTensor reconstruct(const TuckerModel& model) {
    std::vector<std::size_t> order(model.factors.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    // Expand the modes that grow least first.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double ga = static_cast<double>(model.factors[a].rows()) / static_cast<double>(model.factors[a].cols());
        const double gb = static_cast<double>(model.factors[b].rows()) / static_cast<double>(model.factors[b].cols());
        return ga < gb;
    });
    DenseTensor out = model.core;
    for (std::size_t mode : order) out = ttm(out, model.factors[mode], mode);
    return out;
}

double fit(const DenseTensor& t, const TuckerModel& model) {
    const double norm = fro_norm(t);
    if (norm == 0.0) throw ArgumentError("fit is undefined for a zero tensor");
    return 1.0 - fro_norm(t - reconstruct(model)) / norm;
}

double fit_from_core(double t_norm, const DenseTensor& core) {
    if (t_norm == 0.0) throw ArgumentError("fit is undefined for a zero tensor");
    const double residual = std::max(0.0, t_norm * t_norm - squared_norm(core));
    return 1.0 - std::sqrt(residual) / t_norm;
}

// --- pairwise perturbation ------------------------------------------------

PPState::PPState(const DenseTensor& t, std::vector<Matrix> anchors) : anchors_(std::move(anchors)) {
    const std::size_t n_modes = t.order();
    if (anchors_.size() != n_modes) throw ArgumentError("PPState: anchor count does not match tensor order");
    if (n_modes > 31) throw ArgumentError("PPState: tensor order above 31 is not supported");
    for (std::size_t i = 0; i < n_modes; ++i) {
        if (static_cast<std::size_t>(anchors_[i].rows()) != t.dim(i)) {
            throw ArgumentError("PPState: anchor " + std::to_string(i) + " does not match tensor dim");
        }
        deltas_.push_back(Matrix::Zero(anchors_[i].rows(), anchors_[i].cols()));
    }

    const std::uint32_t all = n_modes == 32 ? ~0u : (bit(n_modes) - 1);
    single_.resize(n_modes);
    if (n_modes == 1) {
        single_[0] = t;
        return;
    }
    std::vector<std::size_t> modes(n_modes);
    for (std::size_t i = 0; i < n_modes; ++i) modes[i] = i;
    build_pairs(t, all, modes);

    for (std::size_t n = 0; n < n_modes; ++n) {
        std::size_t partner = (n % 2 == 0) ? n + 1 : n - 1;
        if (partner >= n_modes) partner = n - 1;
        single_[n] = contract(pair(n, partner), bit(n) | bit(partner), partner);
    }
    cache_.clear();
}

DenseTensor PPState::contract(const DenseTensor& x, std::uint32_t kept_mask, std::size_t mode) {
    const std::uint32_t result_mask = kept_mask & ~bit(mode);
    if (auto it = cache_.find(result_mask); it != cache_.end()) return it->second;
    log_.push_back({kept_mask, mode});
    DenseTensor y = ttm(x, anchors_[mode], mode, Transpose::Yes);
    cache_.emplace(result_mask, y);
    return y;
}

DenseTensor PPState::contract_set(DenseTensor x, std::uint32_t& kept_mask, std::span<const std::size_t> modes) {
    for (std::size_t m : modes) {
        x = contract(x, kept_mask, m);
        kept_mask &= ~bit(m);
    }
    return x;
}

void PPState::build_leaves(const DenseTensor& x, std::uint32_t kept_mask, std::span<const std::size_t> modes,
                           std::vector<std::pair<std::size_t, DenseTensor>>& out) {
    if (modes.size() == 1) {
        out.emplace_back(modes[0], x);
        return;
    }
    const auto half = modes.size() / 2;
    const auto lo = modes.first(half);
    const auto hi = modes.subspan(half);
    std::uint32_t mask_lo = kept_mask;
    const DenseTensor x_lo = contract_set(x, mask_lo, hi);
    build_leaves(x_lo, mask_lo, lo, out);
    std::uint32_t mask_hi = kept_mask;
    const DenseTensor x_hi = contract_set(x, mask_hi, lo);
    build_leaves(x_hi, mask_hi, hi, out);
}

void PPState::build_pairs(const DenseTensor& x, std::uint32_t kept_mask, std::span<const std::size_t> modes) {
    if (modes.size() < 2) return;
    if (modes.size() == 2) {
        pair_.insert_or_assign({modes[0], modes[1]}, x);
        return;
    }
    const auto half = modes.size() / 2;
    const auto a = modes.first(half);
    const auto b = modes.subspan(half);

    if (a.size() >= 2) {
        std::uint32_t mask = kept_mask;
        const DenseTensor xa = contract_set(x, mask, b);
        build_pairs(xa, mask, a);
    }
    if (b.size() >= 2) {
        std::uint32_t mask = kept_mask;
        const DenseTensor xb = contract_set(x, mask, a);
        build_pairs(xb, mask, b);
    }
    // Cross pairs: keep one mode of each half.
    std::vector<std::pair<std::size_t, DenseTensor>> left;
    build_leaves(x, kept_mask, a, left);
    for (auto& [ma, xa] : left) {
        std::uint32_t mask_a = kept_mask;
        for (std::size_t m : a) {
            if (m != ma) mask_a &= ~bit(m);
        }
        std::vector<std::pair<std::size_t, DenseTensor>> right;
        build_leaves(xa, mask_a, b, right);
        for (auto& [mb, xab] : right) pair_.insert_or_assign({std::min(ma, mb), std::max(ma, mb)}, std::move(xab));
    }
}

const DenseTensor& PPState::pair(std::size_t i, std::size_t n) const {
    if (i == n) throw ArgumentError("pair operator needs two distinct modes");
    return pair_.at({std::min(i, n), std::max(i, n)});
}

void PPState::set_delta(std::size_t n, Matrix delta) {
    if (delta.rows() != anchors_.at(n).rows() || delta.cols() != anchors_[n].cols()) {
        throw ArgumentError("delta shape does not match anchor " + std::to_string(n));
    }
    deltas_[n] = std::move(delta);
}

void PPState::set_factors(std::span<const Matrix> factors) {
    if (factors.size() != anchors_.size()) throw ArgumentError("factor count does not match anchors");
    for (std::size_t n = 0; n < factors.size(); ++n) set_delta(n, factors[n] - anchors_[n]);
}

DenseTensor PPState::estimate(std::size_t n) const {
    DenseTensor y = single_.at(n);
    for (std::size_t i = 0; i < anchors_.size(); ++i) {
        if (i == n || deltas_[i].isZero(0.0)) continue;
        const DenseTensor term = ttm(pair(i, n), deltas_[i], i, Transpose::Yes);
        auto out = y.data();
        auto add = term.data();
        for (std::size_t k = 0; k < out.size(); ++k) out[k] += add[k];
    }
    return y;
}

std::vector<std::size_t> PPState::contraction_path(std::size_t n) const {
    if (n >= order()) throw ArgumentError("contraction_path: mode " + std::to_string(n) + " out of range");
    std::vector<std::size_t> path;
    std::uint32_t mask = bit(n);
    const std::uint32_t all = order() == 32 ? ~0u : (bit(order()) - 1);
    while (mask != all) {
        const auto it = std::find_if(log_.begin(), log_.end(),
                                     [&](const Contraction& c) { return (c.kept_mask & ~bit(c.mode)) == mask; });
        if (it == log_.end()) throw ArgumentError("contraction_path: no log entry for operator");
        path.push_back(it->mode);
        mask = it->kept_mask;
    }
    std::reverse(path.begin(), path.end());
    return path;
}

std::size_t PPState::naive_contraction_count(std::size_t order) {
    const std::size_t singles = order * (order - 1);
    const std::size_t pairs = order < 2 ? 0 : order * (order - 1) / 2 * (order - 2);
    return singles + pairs;
}

DenseTensor naive_single_operator(const DenseTensor& t, std::span<const Matrix> anchors, std::size_t n) {
    DenseTensor y = t;
    for (std::size_t i = 0; i < t.order(); ++i) {
        if (i != n) y = ttm(y, anchors[i], i, Transpose::Yes);
    }
    return y;
}

DenseTensor naive_pair_operator(const DenseTensor& t, std::span<const Matrix> anchors, std::size_t i, std::size_t n) {
    DenseTensor y = t;
    for (std::size_t j = 0; j < t.order(); ++j) {
        if (j != i && j != n) y = ttm(y, anchors[j], j, Transpose::Yes);
    }
    return y;
}

TuckerModel pp_sweep(const DenseTensor& t, PPState& state, const TuckerModel& model) {
    if (model.source_dims() != t.dims() || state.order() != t.order()) {
        throw ArgumentError("pp_sweep: model/state do not match tensor");
    }
    TuckerModel next = model;
    const Dims ranks = model.ranks();
    for (std::size_t n = 0; n < t.order(); ++n) {
        next.factors[n] = mode_factor(state.estimate(n), n, ranks[n]);
        state.set_delta(n, next.factors[n] - state.anchors()[n]);
    }
    next.core = ttmc(t, next.factors);
    return next;
}

// --- driver -----------------------------------------------------------------

const char* to_string(SweepKind kind) {
    switch (kind) {
        case SweepKind::Init: return "init";
        case SweepKind::Standard: return "standard";
        case SweepKind::PairwisePerturbation: return "pp";
    }
    return "?";
}

SolveResult tucker_als(const DenseTensor& t, const SolveConfig& cfg) {
    cfg.validate(t.dims());
    SequentialGuard guard(cfg.sequential_reduction);

    const double t_norm = fro_norm(t);
    if (t_norm == 0.0) throw ArgumentError("tucker_als: zero tensor");
    if (!t.all_finite()) throw NumericError("tucker_als: tensor has non-finite entries");

    SolveResult result;
    TuckerModel model = t_hosvd(t, cfg.ranks);
    double prev_fit = fit_from_core(t_norm, model.core);
    result.trace.push_back({SweepKind::Init, prev_fit, {}});

    if (cfg.ranks == t.dims()) {
        result.model = std::move(model);
        result.converged = true;
        return result;
    }

    TuckerModel best = model;
    double best_fit = prev_fit;
    std::optional<PPState> pp;

    for (std::size_t sweep = 0; sweep < cfg.max_sweeps; ++sweep) {
        const SweepKind kind = pp ? SweepKind::PairwisePerturbation : SweepKind::Standard;
        TuckerModel next = pp ? pp_sweep(t, *pp, model) : hooi_sweep(t, model);

        SweepRecord rec{kind, fit_from_core(t_norm, next.core), {}};
        for (std::size_t n = 0; n < t.order(); ++n) {
            rec.factor_change.push_back((next.factors[n] - model.factors[n]).norm() / model.factors[n].norm());
        }
        const double change = *std::max_element(rec.factor_change.begin(), rec.factor_change.end());
        result.trace.push_back(rec);
        model = std::move(next);
        if (rec.fit > best_fit) {
            best_fit = rec.fit;
            best = model;
        }

        if (std::abs(rec.fit - prev_fit) < cfg.fit_tol) {
            result.converged = true;
            break;
        }
        prev_fit = rec.fit;

        if (kind == SweepKind::Standard) {
            if (cfg.use_pairwise_perturbation && change < cfg.pp_enter_tol) pp.emplace(t, model.factors);
        } else {
            double drift = 0.0;
            for (std::size_t n = 0; n < t.order(); ++n) {
                drift = std::max(drift, pp->deltas()[n].norm() / pp->anchors()[n].norm());
            }
            // The next sweep is a standard one, which re-anchors.
            if (drift > cfg.pp_exit_tol) pp.reset();
        }
    }
    result.model = std::move(best);
    return result;
}

}  // namespace tmc
