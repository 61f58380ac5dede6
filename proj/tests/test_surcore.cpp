#include "doctest.h"

#include "sur/errors.hpp"
#include "sur/simlab.hpp"
#include "sur/surcore.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numbers>

using namespace sur;
using sur::testing::Sets;
using sur::testing::max_abs;
using sur::testing::random_matrix;
using sur::testing::random_spd;

namespace {

const double kLog2Pi = std::log(2.0 * std::numbers::pi);

// Y = Z B0 + E, E rows ~ N(0, sigma0), with B0 supported on `truth`.
Dataset simulated(Rng& rng, Index n, Index m, const ModelSpec& truth, const SpdMatrix& sigma0, double coef = 1.0)
{
    const Matrix z = random_matrix(rng, n, m);
    Matrix b0 = Matrix::Zero(m, truth.responses());
    for (Index j = 0; j < truth.responses(); ++j) {
        for (Index idx : truth.set(j)) {
            b0(idx, j) = coef;
        }
    }
    const Matrix l = Eigen::LLT<Matrix>(sigma0.matrix()).matrixL();
    return Dataset(z * b0 + random_matrix(rng, n, truth.responses()) * l.transpose(), z);
}

Errc error_code(auto&& fn)
{
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("expected an error");
    return Errc::InvalidInput;
}

} // namespace

TEST_CASE("ModelSpec validation")
{
    CHECK(error_code([] { ModelSpec(Sets{{0}, {}}); }) == Errc::InvalidInput);
    CHECK(error_code([] { ModelSpec({}); }) == Errc::InvalidInput);
    CHECK(error_code([] { ModelSpec(Sets{{1, 1}}); }) == Errc::InvalidInput);
    CHECK(error_code([] { ModelSpec::from_one_based({{0}}); }) == Errc::IndexOutOfRange);

    const ModelSpec spec = ModelSpec::from_one_based({{3, 1, 2}, {6, 7}});
    CHECK(spec.set(0) == std::vector<Index>{0, 1, 2});
    CHECK(spec.free_coefficients() == 5);
    CHECK(spec.offset(1) == 3);
    CHECK(spec.max_set_size() == 3);
    CHECK(spec.one_based() == std::vector<std::vector<Index>>{{1, 2, 3}, {6, 7}});
    CHECK(error_code([&] { spec.check_covariates(6); }) == Errc::IndexOutOfRange);
    CHECK_NOTHROW(spec.check_covariates(7));
}

TEST_CASE("Dataset validation")
{
    CHECK(error_code([] { Dataset(Matrix::Ones(4, 1), Matrix::Ones(3, 1)); }) == Errc::InvalidInput);
    // rank-deficient Z
    Matrix z(4, 2);
    z << 1, 2, 2, 4, 3, 6, 4, 8;
    CHECK(error_code([&] { Dataset(Matrix::Ones(4, 1), z); }) == Errc::InvalidInput);
}

TEST_CASE("build_stacked_design")
{
    Rng rng(1);
    const Matrix z = random_matrix(rng, 5, 3);
    CHECK(build_stacked_design(ModelSpec(Sets{{0, 1, 2}}), z) == z);

    Matrix z2(2, 2);
    z2 << 1, 2, 3, 4;
    Matrix expected(4, 2);
    expected << 1, 0,
                3, 0,
                0, 2,
                0, 4;
    CHECK(build_stacked_design(ModelSpec(Sets{{0}, {1}}), z2) == expected);

    CHECK(error_code([&] { build_stacked_design(ModelSpec(Sets{{0}, {5}}), z2); }) == Errc::IndexOutOfRange);

    for (int trial = 0; trial < 10; ++trial) {
        const ModelSpec spec = sur::testing::random_spec(rng, 3, 6, 4);
        const Matrix x = build_stacked_design(spec, random_matrix(rng, 12, 6));
        CHECK(Eigen::FullPivLU<Matrix>(x).rank() == spec.free_coefficients());
    }
}

TEST_CASE("log_likelihood")
{
    Rng rng(2);
    const Index n = 7;
    const Matrix z = random_matrix(rng, n, 2);

    SUBCASE("zero data, unit variance")
    {
        const Dataset data(Matrix::Zero(n, 1), z);
        const double ll = log_likelihood(data, Matrix::Zero(2, 1), SpdMatrix::identity(1));
        CHECK(ll == doctest::Approx(-0.5 * n * kLog2Pi).epsilon(1e-14));
    }
    SUBCASE("exact fit, identity covariance")
    {
        Matrix b(2, 2);
        b << 1.0, -2.0, 0.5, 3.0;
        const Dataset data(z * b, z);
        CHECK(log_likelihood(data, b, SpdMatrix::identity(2)) == doctest::Approx(-0.5 * n * 2 * kLog2Pi));
    }
    SUBCASE("matches a row-by-row Gaussian density sum")
    {
        for (int trial = 0; trial < 10; ++trial) {
            const Index p = 1 + trial % 3;
            const Matrix y = random_matrix(rng, n, p);
            const Matrix b = random_matrix(rng, 2, p);
            const SpdMatrix sigma = random_spd(rng, p);
            const Dataset data(y, z);
            const Matrix inv = sigma.matrix().inverse();
            const double det = sigma.matrix().determinant();
            double oracle = 0.0;
            for (Index row = 0; row < n; ++row) {
                const Vector r = (y.row(row) - z.row(row) * b).transpose();
                oracle += -0.5 * (static_cast<double>(p) * kLog2Pi + std::log(det) + r.dot(inv * r));
            }
            CHECK(log_likelihood(data, b, sigma) == doctest::Approx(oracle).epsilon(1e-12));
        }
    }
}

TEST_CASE("gls_step")
{
    Rng rng(4);
    const ModelSpec spec(Sets{{0, 1}, {1, 2, 3}});
    const Dataset data = simulated(rng, 12, 4, spec, random_spd(rng, 2));

    SUBCASE("identity covariance decouples into OLS")
    {
        const GlsResult g = gls_step(data, spec, SpdMatrix::identity(2));
        CHECK(max_abs(g.b - ols_fit(data, spec)) < 1e-10);
    }
    SUBCASE("noiseless data is interpolated")
    {
        Matrix b0 = Matrix::Zero(4, 2);
        b0(0, 0) = 1.5;
        b0(1, 0) = -0.5;
        b0(1, 1) = 2.0;
        b0(3, 1) = 0.25;
        const Dataset exact(data.z() * b0, data.z());
        const GlsResult g = gls_step(exact, spec, random_spd(rng, 2));
        CHECK(max_abs(g.b - b0) < 1e-10);
    }
    SUBCASE("correlated sigma matches whitened least squares on the stacked system")
    {
        for (int trial = 0; trial < 10; ++trial) {
            const SpdMatrix sigma = random_spd(rng, 2);
            const GlsResult g = gls_step(data, spec, sigma);
            // Whiten with the inverse Cholesky factor and solve by QR: no normal equations involved.
            const Index n = data.subjects();
            const Matrix l_inv = Eigen::LLT<Matrix>(sigma.matrix()).matrixL().solve(Matrix::Identity(2, 2));
            Matrix w = Matrix::Zero(2 * n, 2 * n);
            for (Index i = 0; i < 2; ++i) {
                for (Index j = 0; j < 2; ++j) {
                    w.block(i * n, j * n, n, n) = l_inv(i, j) * Matrix::Identity(n, n);
                }
            }
            const Matrix x = build_stacked_design(spec, data.z());
            const Vector yv = Eigen::Map<const Vector>(data.y().data(), data.y().size());
            const Vector oracle = (w * x).colPivHouseholderQr().solve(w * yv);
            CHECK(max_abs(g.coefficients - oracle) < 1e-10);
            CHECK(max_abs(gls_step_dense(data, spec, sigma).coefficients - g.coefficients) < 1e-10);
        }
    }
    SUBCASE("zero pattern")
    {
        const GlsResult g = gls_step(data, spec, random_spd(rng, 2));
        CHECK(g.b(2, 0) == 0.0);
        CHECK(g.b(3, 0) == 0.0);
        CHECK(g.b(0, 1) == 0.0);
    }
}

TEST_CASE("residual_covariance")
{
    Rng rng(6);
    const Index n = 9;
    const Matrix z = random_matrix(rng, n, 3);
    const Matrix y = random_matrix(rng, n, 2);
    const Dataset data(y, z);
    const Matrix b = random_matrix(rng, 3, 2);

    const SpdMatrix s = residual_covariance(data, b);
    const Matrix r = y - z * b;
    for (Index i = 0; i < 2; ++i) {
        for (Index j = 0; j < 2; ++j) {
            double sum = 0.0;
            for (Index k = 0; k < n; ++k) {
                sum += r(k, i) * r(k, j);
            }
            CHECK(s(i, j) == doctest::Approx(sum / n).epsilon(1e-13));
        }
    }

    // residual columns with orthogonal directions give a diagonal result
    Matrix q = Eigen::HouseholderQR<Matrix>(random_matrix(rng, n, 2)).householderQ() * Matrix::Identity(n, 2);
    q.col(0) *= 3.0;
    const Dataset orth(q, z);
    const SpdMatrix d = residual_covariance(orth, Matrix::Zero(3, 2));
    CHECK(std::abs(d(0, 1)) < 1e-14);
    CHECK(d(0, 0) == doctest::Approx(9.0 / n));
    CHECK(d(1, 1) == doctest::Approx(1.0 / n));

    const Dataset exact(z * b, z);
    CHECK(error_code([&] { residual_covariance(exact, b); }) == Errc::DegenerateResiduals);
}

TEST_CASE("ols_fit")
{
    Rng rng(8);
    const ModelSpec spec(Sets{{0, 2}, {1}});
    const Dataset data = simulated(rng, 10, 3, spec, SpdMatrix::identity(2));
    const Matrix b = ols_fit(data, spec);
    for (Index j = 0; j < 2; ++j) {
        Matrix zj(10, static_cast<Index>(spec.set(j).size()));
        for (std::size_t c = 0; c < spec.set(j).size(); ++c) {
            zj.col(static_cast<Index>(c)) = data.z().col(spec.set(j)[c]);
        }
        const Vector oracle = (zj.transpose() * zj).inverse() * zj.transpose() * data.y().col(j);
        for (std::size_t c = 0; c < spec.set(j).size(); ++c) {
            CHECK(b(spec.set(j)[c], j) == doctest::Approx(oracle(static_cast<Index>(c))).epsilon(1e-10));
        }
    }
    CHECK(b(1, 0) == 0.0);

    Matrix b0 = Matrix::Zero(3, 2);
    b0(0, 0) = 2.0;
    b0(2, 0) = -1.0;
    b0(1, 1) = 0.5;
    CHECK(max_abs(ols_fit(Dataset(data.z() * b0, data.z()), spec) - b0) < 1e-10);
}

TEST_CASE("cm_fit")
{
    Rng rng(10);

    SUBCASE("identical index sets collapse to OLS")
    {
        for (int trial = 0; trial < 10; ++trial) {
            const ModelSpec spec(Sets{{0, 1, 3}, {0, 1, 3}, {0, 1, 3}});
            const Dataset data = simulated(rng, 15, 4, spec, random_spd(rng, 3));
            const FitResult fit = cm_fit(data, spec, SpdMatrix::identity(3));
            CHECK(fit.converged);
            CHECK(max_abs(fit.b_hat - ols_fit(data, spec)) < 1e-8);
        }
    }
    SUBCASE("single response")
    {
        const ModelSpec spec(Sets{{0, 1}});
        const Dataset data = simulated(rng, 10, 2, spec, SpdMatrix::identity(1));
        const FitResult fit = cm_fit(data, spec, SpdMatrix::identity(1));
        CHECK(fit.converged);
        CHECK(fit.cm_iterations == 2);
        const Matrix b = ols_fit(data, spec);
        const double rss = (data.y() - data.z() * b).squaredNorm();
        CHECK(max_abs(fit.b_hat - b) < 1e-12);
        CHECK(fit.sigma_hat(0, 0) == doctest::Approx(rss / 10.0).epsilon(1e-12));
    }
    SUBCASE("noiseless overspecified fit is degenerate")
    {
        const ModelSpec truth(Sets{{0}, {1}});
        const Dataset data = simulated(rng, 10, 3, truth, SpdMatrix(1e-40 * Matrix::Identity(2, 2)));
        const Dataset exact(data.z() * Matrix::Identity(3, 2), data.z());
        CHECK(error_code([&] { cm_fit(exact, ModelSpec(Sets{{0, 2}, {1, 2}}), SpdMatrix::identity(2)); }) ==
              Errc::DegenerateResiduals);
    }
    SUBCASE("too few subjects")
    {
        const ModelSpec spec(Sets{{0, 1, 2}, {0}});
        const Dataset data = simulated(rng, 5, 3, spec, SpdMatrix::identity(2));
        CHECK(error_code([&] { cm_fit(data, spec, SpdMatrix::identity(2)); }) == Errc::InsufficientSamples);
        CHECK(error_code([&] { cm_fit(data, ModelSpec(Sets{{0}}), SpdMatrix::identity(1)); }) == Errc::InvalidInput);
    }
    SUBCASE("iteration cap reports non-convergence")
    {
        const ModelSpec spec(Sets{{0, 1}, {2, 3}});
        const Dataset data = simulated(rng, 12, 4, spec, equicorrelation_sigma(0.8, 2));
        const FitResult fit = cm_fit(data, spec, SpdMatrix::identity(2), {.delta = 1e-12, .max_iter = 1});
        CHECK_FALSE(fit.converged);
        CHECK(fit.cm_iterations == 1);
    }
}

TEST_CASE("cm_fit invariants on random instances")
{
    Rng rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        const Index p = 2 + trial % 2;
        const ModelSpec spec = sur::testing::random_unequal_spec(rng, p, 5, 4);
        const Dataset data = simulated(rng, 14, 5, spec, random_spd(rng, p));
        const FitResult fit = cm_fit(data, spec, SpdMatrix::identity(p), {.record_trace = true});
        REQUIRE(fit.converged);

        for (std::size_t k = 1; k < fit.loglik_trace.size(); ++k) {
            CHECK(fit.loglik_trace[k] >= fit.loglik_trace[k - 1] - 1e-9);
        }
        CHECK(fit.loglik == doctest::Approx(log_likelihood(data, fit.b_hat, fit.sigma_hat)).epsilon(1e-9));

        for (Index j = 0; j < p; ++j) {
            for (Index i = 0; i < 5; ++i) {
                if (!std::binary_search(spec.set(j).begin(), spec.set(j).end(), i)) {
                    CHECK(fit.b_hat(i, j) == 0.0);
                }
            }
        }

        // one more sweep from the returned Sigma barely moves Det Sigma
        const SpdMatrix next = residual_covariance(data, gls_step(data, spec, fit.sigma_hat).b);
        const double change = std::abs(std::expm1(logdet(next) - logdet(fit.sigma_hat)));
        CHECK(change <= 1e-7);
    }
}

TEST_CASE("ml_fit_multistart")
{
    Rng rng(14);

    SUBCASE("identical index sets: no jumps, same answer as one start")
    {
        const ModelSpec spec(Sets{{0, 1}, {0, 1}});
        const Dataset data = simulated(rng, 15, 3, spec, equicorrelation_sigma(0.5, 2));
        Rng fit_rng(99);
        const FitResult multi = ml_fit_multistart(data, spec, fit_rng);
        const FitResult single = cm_fit(data, spec, SpdMatrix::identity(2));
        CHECK(multi.jumps == 0);
        CHECK(multi.restarts_used == 10);
        CHECK(multi.b_hat == single.b_hat);
        CHECK(multi.loglik == single.loglik);
    }
    SUBCASE("same seed gives a bit-identical result")
    {
        const ModelSpec spec(Sets{{0, 1, 2, 3, 4}, {5, 6, 7, 8, 9}});
        const Dataset data = simulated(rng, 15, 10, ModelSpec(Sets{{0, 1}, {5, 6}}), equicorrelation_sigma(0.5, 2));
        Rng a(1234);
        Rng b(1234);
        const FitResult fa = ml_fit_multistart(data, spec, a);
        const FitResult fb = ml_fit_multistart(data, spec, b);
        CHECK(fa.b_hat == fb.b_hat);
        CHECK(fa.sigma_hat == fb.sigma_hat);
        CHECK(fa.loglik == fb.loglik);
        CHECK(fa.jumps == fb.jumps);
        CHECK(fa.restarts_used == fb.restarts_used);
        CHECK(fa.cm_iterations == fb.cm_iterations);
    }
    SUBCASE("never worse than the identity start")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const ModelSpec spec = sur::testing::random_unequal_spec(rng, 2, 6, 5);
            const Dataset data = simulated(rng, 12, 6, spec, random_spd(rng, 2));
            Rng fit_rng(static_cast<std::uint64_t>(trial));
            const FitResult multi = ml_fit_multistart(data, spec, fit_rng);
            const FitResult single = cm_fit(data, spec, SpdMatrix::identity(2));
            CHECK(multi.loglik >= single.loglik - 1e-9);
            CHECK(multi.restarts_used >= 10);
        }
    }
    SUBCASE("restart policy is configurable")
    {
        const ModelSpec spec(Sets{{0}, {1}});
        const Dataset data = simulated(rng, 10, 2, spec, SpdMatrix::identity(2));
        Rng fit_rng(5);
        const FitResult fit = ml_fit_multistart(data, spec, fit_rng, {}, {.stable_restarts = 3});
        CHECK(fit.restarts_used == 3);
        Rng none(5);
        CHECK(ml_fit_multistart(data, spec, none, {}, {.stable_restarts = 0}).restarts_used == 0);
    }
}

TEST_CASE("Wishart draws via Bartlett have mean dof * scale")
{
    Rng rng(16);
    const SpdMatrix scale = random_spd(rng, 3);
    const int draws = 20000;
    const double dof = 3.0;
    Matrix sum = Matrix::Zero(3, 3);
    Matrix sum_sq = Matrix::Zero(3, 3);
    for (int k = 0; k < draws; ++k) {
        const Matrix w = wishart_bartlett(rng, scale, dof).matrix();
        sum += w;
        sum_sq += w.cwiseProduct(w);
    }
    const Matrix mean = sum / draws;
    for (Index i = 0; i < 3; ++i) {
        for (Index j = 0; j < 3; ++j) {
            // Var W_ij = dof (s_ij^2 + s_ii s_jj)
            const double var = dof * (scale(i, j) * scale(i, j) + scale(i, i) * scale(j, j));
            const double se = std::sqrt(var / draws);
            CHECK(std::abs(mean(i, j) - dof * scale(i, j)) < 4.0 * se);
        }
    }
    CHECK_THROWS_AS(wishart_bartlett(rng, scale, 2.0), Error);
}

TEST_CASE("substream seeds are deterministic and distinct")
{
    CHECK(derive_seed(1, {2, 3}) == derive_seed(1, {2, 3}));
    CHECK(derive_seed(1, {2, 3}) != derive_seed(1, {3, 2}));
    CHECK(derive_seed(1, {2}) != derive_seed(2, {2}));
    CHECK(key_of(0.0) == key_of(-0.0));
    CHECK(key_of(0.2) != key_of(0.5));
}
