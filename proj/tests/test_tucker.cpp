#include <doctest.h>

#include <cmath>
#include <set>

#include "test_util.hpp"
#include "tmc/errors.hpp"
#include "tmc/tucker.hpp"

using namespace tmc;
using namespace tmc::testing;

namespace {

// Elementwise sum_{q} core(q) prod_r S_r(t_r, q_r).
DenseTensor nested_sum_reconstruct(const TuckerModel& m) {
    const Dims src = m.source_dims();
    DenseTensor out(src);
    for_each_index(src, [&](const std::vector<std::size_t>& t, std::size_t lin) {
        double acc = 0.0;
        for_each_index(m.core.dims(), [&](const std::vector<std::size_t>& q, std::size_t qlin) {
            double term = m.core[qlin];
            for (std::size_t r = 0; r < src.size(); ++r) term *= m.factors[r](t[r], q[r]);
            acc += term;
        });
        out[lin] = acc;
    });
    return out;
}

// Squared singular values of the mode-r unfolding, from an SVD rather than the Gram route.
Vector unfolding_spectrum(const DenseTensor& t, std::size_t mode) {
    Eigen::JacobiSVD<Matrix> svd(unfold(t, mode));
    return svd.singularValues().array().square();
}

double discarded_energy(const DenseTensor& t, const Dims& ranks) {
    double bound = 0.0;
    for (std::size_t r = 0; r < t.order(); ++r) {
        const Vector s = unfolding_spectrum(t, r);
        for (Eigen::Index i = static_cast<Eigen::Index>(ranks[r]); i < s.size(); ++i) bound += s(i);
    }
    return bound;
}

void check_orthonormal(const TuckerModel& m) {
    for (const auto& f : m.factors) CHECK(orthonormality_error(f) < 1e-8);
}

}  // namespace

TEST_CASE("hosvd of a single-spike tensor") {
    DenseTensor t(Dims{3, 4, 2});
    t.at({1, 2, 1}) = 5.0;
    const TuckerModel m = hosvd(t);
    std::size_t nonzero = 0;
    for (double v : m.core.data()) nonzero += std::abs(v) > 1e-12;
    CHECK(nonzero == 1);
    for (const auto& f : m.factors) {
        for (Eigen::Index c = 0; c < f.cols(); ++c) {
            CHECK(f.col(c).cwiseAbs().maxCoeff() == doctest::Approx(1.0));
            CHECK(f.col(c).cwiseAbs().sum() == doctest::Approx(1.0));
        }
    }
    CHECK(max_abs_diff(reconstruct(m), t) < 1e-12);
}

TEST_CASE("hosvd reconstructs a random tensor") {
    const DenseTensor t = random_tensor({4, 4, 4}, 3);
    const TuckerModel m = hosvd(t);
    check_orthonormal(m);
    CHECK(fro_norm(t - reconstruct(m)) / fro_norm(t) < 1e-10);
}

TEST_CASE("hosvd of an order-2 tensor agrees with the matrix SVD") {
    const Matrix a = random_matrix(5, 7, 4);
    const TuckerModel m = hosvd(DenseTensor::from_matrix(a));
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeFullU);
    Matrix u = svd.matrixU();
    apply_sign_rule(u);
    CHECK((m.factors[0] - u).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("t_hosvd with full ranks equals hosvd") {
    const DenseTensor t = random_tensor({3, 4, 5}, 8);
    const TuckerModel a = hosvd(t);
    const TuckerModel b = t_hosvd(t, t.dims());
    CHECK(a.core == b.core);
    for (std::size_t r = 0; r < 3; ++r) CHECK(a.factors[r] == b.factors[r]);
}

TEST_CASE("t_hosvd recovers an exactly low-rank tensor") {
    const DenseTensor t = reconstruct(random_model({6, 6, 6}, {2, 2, 2}, 5));
    const TuckerModel m = t_hosvd(t, {2, 2, 2});
    check_orthonormal(m);
    CHECK(fro_norm(t - reconstruct(m)) / fro_norm(t) < 1e-8);
}

TEST_CASE("t_hosvd error is bounded by discarded Gram eigenvalues") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseTensor t = random_tensor({5, 6, 4}, seed);
        for (const Dims& ranks : {Dims{1, 1, 1}, Dims{2, 3, 2}, Dims{4, 2, 3}}) {
            const TuckerModel m = t_hosvd(t, ranks);
            const double err2 = squared_norm(t - reconstruct(m));
            CHECK(err2 <= discarded_energy(t, ranks) * (1 + 1e-8));
        }
    }
}

TEST_CASE("t_hosvd truncation is nested") {
    const DenseTensor t = random_tensor({6, 5, 4}, 12);
    double prev = std::numeric_limits<double>::infinity();
    for (std::size_t k = 1; k <= 4; ++k) {
        const Dims ranks{std::min<std::size_t>(k + 1, 6), std::min<std::size_t>(k, 5), k};
        const double err2 = squared_norm(t - reconstruct(t_hosvd(t, ranks)));
        CHECK(err2 <= prev * (1 + 1e-12));
        prev = err2;
    }
}

TEST_CASE("t_hosvd rejects invalid ranks") {
    const DenseTensor t = random_tensor({3, 4}, 1);
    CHECK_THROWS_AS(t_hosvd(t, {0, 2}), ArgumentError);
    CHECK_THROWS_AS(t_hosvd(t, {4, 2}), ArgumentError);
    CHECK_THROWS_AS(t_hosvd(t, {2}), ArgumentError);
}

TEST_CASE("hooi_sweep keeps an optimal model fixed") {
    const DenseTensor t = reconstruct(random_model({6, 5, 4}, {2, 2, 2}, 9));
    const TuckerModel init = t_hosvd(t, {2, 2, 2});
    const TuckerModel next = hooi_sweep(t, init);
    for (std::size_t r = 0; r < 3; ++r) CHECK(projector(next.factors[r]).isApprox(projector(init.factors[r]), 1e-8));
    CHECK(fit(t, next) == doctest::Approx(1.0).epsilon(1e-10));
}

TEST_CASE("hooi_sweep does not decrease fit") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseTensor t = random_tensor({5, 5, 5}, seed + 30);
        TuckerModel m = t_hosvd(t, {2, 2, 2});
        double f = fit_from_core(fro_norm(t), m.core);
        for (int s = 0; s < 5; ++s) {
            m = hooi_sweep(t, m);
            check_orthonormal(m);
            const double g = fit_from_core(fro_norm(t), m.core);
            CHECK(g - f >= -1e-12);
            f = g;
        }
    }
}

TEST_CASE("hooi on a matrix converges to truncated SVD subspaces") {
    const Matrix a = random_matrix(8, 6, 2);
    const DenseTensor t = DenseTensor::from_matrix(a);
    TuckerModel m = t_hosvd(t, {3, 3});
    for (int s = 0; s < 5; ++s) m = hooi_sweep(t, m);
    Eigen::JacobiSVD<Matrix> svd(a, Eigen::ComputeThinU | Eigen::ComputeThinV);
    const Matrix u = svd.matrixU().leftCols(3);
    const Matrix v = svd.matrixV().leftCols(3);
    CHECK((projector(m.factors[0]) - projector(u)).norm() < 1e-6);
    CHECK((projector(m.factors[1]) - projector(v)).norm() < 1e-6);
}

TEST_CASE("fit formulas agree") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const DenseTensor t = random_tensor({6, 4, 5}, seed);
        const TuckerModel m = hooi_sweep(t, t_hosvd(t, {3, 2, 2}));
        const double a = fit(t, m);
        const double b = fit_from_core(fro_norm(t), m.core);
        CHECK(std::abs(a - b) <= 1e-10 * std::abs(a));
    }
}

TEST_CASE("fit conventions") {
    const DenseTensor t = reconstruct(random_model({4, 3, 3}, {2, 2, 1}, 1));
    CHECK(fit(t, t_hosvd(t, {2, 2, 1})) == doctest::Approx(1.0).epsilon(1e-12));

    TuckerModel zero = t_hosvd(t, {1, 1, 1});
    for (auto& v : zero.core.data()) v = 0.0;
    CHECK(fit(t, zero) == doctest::Approx(0.0));

    CHECK_THROWS_AS(fit(DenseTensor(Dims{4, 3, 3}), zero), ArgumentError);
}

TEST_CASE("reconstruct small cases") {
    Vector a(2), b(3), c(2);
    a << 1, 2;
    b << 0.5, -1, 3;
    c << 2, -2;
    TuckerModel m{DenseTensor({1, 1, 1}, {1.0}), {a, b, c}};
    const DenseTensor outer = reconstruct(m);
    for_each_index(outer.dims(), [&](const std::vector<std::size_t>& i, std::size_t lin) {
        CHECK(outer[lin] == a(i[0]) * b(i[1]) * c(i[2]));
    });

    const DenseTensor t = random_tensor({2, 3, 2}, 4);
    TuckerModel id{t, {Matrix::Identity(2, 2), Matrix::Identity(3, 3), Matrix::Identity(2, 2)}};
    CHECK(reconstruct(id) == t);
}

TEST_CASE("reconstruct matches the elementwise nested sum on every small shape") {
    std::uint64_t seed = 0;
    for (const Dims& dims : {Dims{3, 3, 3}, Dims{4, 4, 4, 4}, Dims{2, 8, 16}, Dims{5, 7}, Dims{2, 2, 2, 2, 2, 2, 2, 2}}) {
        Dims ranks;
        for (std::size_t d : dims) ranks.push_back(std::max<std::size_t>(1, d - 1));
        const TuckerModel m = random_model(dims, ranks, ++seed);
        CHECK(max_abs_diff(reconstruct(m), nested_sum_reconstruct(m)) < 1e-12);
    }
}

TEST_CASE("pair operator at order 3 is a single mode product") {
    const DenseTensor t = random_tensor({3, 4, 5}, 1);
    std::vector<Matrix> anchors;
    for (std::size_t r = 0; r < 3; ++r) anchors.push_back(random_orthonormal(t.dim(r), 2, r + 3));
    const PPState pp(t, anchors);
    CHECK(pp.pair(0, 1) == ttm(t, anchors[2], 2, Transpose::Yes));
    CHECK(pp.pair(1, 0) == pp.pair(0, 1));
    CHECK_THROWS_AS(pp.pair(1, 1), ArgumentError);
}

TEST_CASE("dimension tree operators equal naive recomputation") {
    const DenseTensor t = random_tensor({4, 4, 4, 4}, 77);
    std::vector<Matrix> anchors;
    for (std::size_t r = 0; r < 4; ++r) anchors.push_back(random_orthonormal(4, 2, 90 + r));
    const PPState pp(t, anchors);
    for (std::size_t n = 0; n < 4; ++n) {
        CHECK(max_abs_diff(pp.single(n), naive_single_operator(t, anchors, n)) < 1e-12);
        for (std::size_t i = n + 1; i < 4; ++i) {
            CHECK(max_abs_diff(pp.pair(i, n), naive_pair_operator(t, anchors, i, n)) < 1e-12);
        }
    }
}

TEST_CASE("dimension tree evaluates each partial contraction once and beats the naive count") {
    for (std::size_t order = 2; order <= 6; ++order) {
        const DenseTensor t = random_tensor(Dims(order, 3), order);
        std::vector<Matrix> anchors;
        for (std::size_t r = 0; r < order; ++r) anchors.push_back(random_orthonormal(3, 2, r));
        const PPState pp(t, anchors);
        const auto& log = pp.contraction_log();
        std::set<PPState::Contraction> unique(log.begin(), log.end());
        CHECK(unique.size() == log.size());
        std::set<std::uint32_t> results;
        for (const auto& c : log) results.insert(c.kept_mask & ~(1u << c.mode));
        CHECK(results.size() == log.size());
        if (order >= 3) CHECK(log.size() < PPState::naive_contraction_count(order));
        for (std::size_t n = 0; n < order; ++n) {
            CHECK(max_abs_diff(pp.single(n), naive_single_operator(t, anchors, n)) < 1e-12);
        }
    }
    CHECK(PPState::naive_contraction_count(4) == 24);
}

TEST_CASE("pp estimate with zero deltas is exactly the anchor operator") {
    const DenseTensor t = random_tensor({5, 4, 3, 2}, 8);
    const TuckerModel init = t_hosvd(t, {2, 2, 2, 1});
    const PPState pp(t, init.factors);
    for (std::size_t n = 0; n < 4; ++n) CHECK(pp.estimate(n) == pp.single(n));

    PPState state(t, init.factors);
    const TuckerModel next = pp_sweep(t, state, init);
    const Matrix expect0 = leading_eigvecs(gram(unfold(pp.single(0), 0)), 2).vectors;
    CHECK(next.factors[0] == expect0);
    check_orthonormal(next);
}

TEST_CASE("pp estimate error is quadratic in the perturbation") {
    const DenseTensor t = random_tensor({6, 5, 4, 3}, 21);
    const Dims ranks{3, 2, 2, 2};
    const TuckerModel init = t_hosvd(t, ranks);
    std::vector<Matrix> directions;
    for (std::size_t r = 0; r < 4; ++r) directions.push_back(random_matrix(t.dim(r), ranks[r], 200 + r));

    auto error_at = [&](double eps, std::size_t n) {
        PPState pp(t, init.factors);
        std::vector<Matrix> perturbed;
        for (std::size_t r = 0; r < 4; ++r) perturbed.push_back(init.factors[r] + eps * directions[r]);
        pp.set_factors(perturbed);
        return fro_norm(pp.estimate(n) - ttmc(t, perturbed, n));
    };
    for (std::size_t n = 0; n < 4; ++n) {
        const double ratio = error_at(1e-2, n) / error_at(5e-3, n);
        CHECK(ratio >= 3.0);
        CHECK(ratio <= 5.0);
    }
}

TEST_CASE("tucker_als recovers an exact Tucker tensor") {
    const DenseTensor t = reconstruct(random_model({8, 9, 8}, {2, 3, 2}, 4));
    SolveConfig cfg;
    cfg.ranks = {2, 3, 2};
    cfg.max_sweeps = 10;
    const SolveResult r = tucker_als(t, cfg);
    CHECK(r.converged);
    CHECK(fit(t, r.model) >= 1 - 1e-6);
    check_orthonormal(r.model);
}

TEST_CASE("tucker_als at full rank needs no sweeps") {
    const DenseTensor t = random_tensor({3, 4, 2}, 4);
    SolveConfig cfg;
    cfg.ranks = t.dims();
    const SolveResult r = tucker_als(t, cfg);
    CHECK(r.converged);
    CHECK(r.trace.size() == 1);
    CHECK(r.trace[0].kind == SweepKind::Init);
    CHECK(r.trace[0].fit == doctest::Approx(1.0));
}

TEST_CASE("tucker_als trace is monotone over standard sweeps") {
    const DenseTensor t = random_tensor({16, 16, 10}, 0);
    SolveConfig cfg;
    cfg.ranks = {4, 4, 3};
    cfg.fit_tol = 1e-9;
    const SolveResult r = tucker_als(t, cfg);
    REQUIRE(r.trace.size() > 2);
    for (std::size_t i = 1; i < r.trace.size(); ++i) {
        if (r.trace[i].kind == SweepKind::Standard && r.trace[i - 1].kind != SweepKind::PairwisePerturbation) {
            CHECK(r.trace[i].fit - r.trace[i - 1].fit >= -1e-10);
        }
        CHECK(r.trace[i].factor_change.size() == 3);
    }
    check_orthonormal(r.model);
}

TEST_CASE("pp-accelerated solve matches standard ALS") {
    const DenseTensor t = random_tensor({8, 8, 8}, 5);
    SolveConfig std_cfg;
    std_cfg.ranks = {3, 3, 3};
    std_cfg.use_pairwise_perturbation = false;
    std_cfg.fit_tol = 1e-8;
    SolveConfig pp_cfg = std_cfg;
    pp_cfg.use_pairwise_perturbation = true;
    const SolveResult a = tucker_als(t, std_cfg);
    const SolveResult b = tucker_als(t, pp_cfg);
    CHECK(std::abs(a.trace.back().fit - fit(t, b.model)) < 1e-3);
}

TEST_CASE("tucker_als input errors") {
    SolveConfig cfg;
    cfg.ranks = {1, 1};
    CHECK_THROWS_AS(tucker_als(DenseTensor(Dims{2, 2}), cfg), ArgumentError);
    cfg.ranks = {3, 1};
    CHECK_THROWS_AS(tucker_als(random_tensor({2, 2}, 1), cfg), ArgumentError);
    cfg.ranks = {1, 1};
    cfg.fit_tol = 0.0;
    CHECK_THROWS_AS(tucker_als(random_tensor({2, 2}, 1), cfg), ArgumentError);
}

TEST_CASE("contraction paths replay the tree bit for bit") {
    const DenseTensor t = random_tensor({5, 4, 3, 3, 2}, 12);
    std::vector<Matrix> anchors;
    for (std::size_t r = 0; r < 5; ++r) anchors.push_back(random_orthonormal(t.dim(r), 2, 40 + r));
    const PPState pp(t, anchors);
    for (std::size_t n = 0; n < 5; ++n) {
        const auto path = pp.contraction_path(n);
        CHECK(path.size() == 4);
        CHECK(std::find(path.begin(), path.end(), n) == path.end());
        DenseTensor y = t;
        for (std::size_t m : path) y = ttm(y, anchors[m], m, Transpose::Yes);
        CHECK(y == pp.single(n));
    }
    CHECK_THROWS_AS(pp.contraction_path(5), ArgumentError);
}
