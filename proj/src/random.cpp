#include "sur/random.hpp"

#include "sur/errors.hpp"

#include <bit>
#include <cmath>

namespace sur {

std::uint64_t mix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) noexcept
{
    std::uint64_t h = mix64(parent);
    for (auto k : keys) {
        h = mix64(h ^ mix64(k + 0x632be59bd9b4e019ULL));
    }
    return h;
}

std::uint64_t key_of(double value) noexcept
{
    // +0.0 and -0.0 should name the same stream
    if (value == 0.0) {
        value = 0.0;
    }
    return std::bit_cast<std::uint64_t>(value);
}

Matrix standard_normal_matrix(Rng& rng, Index rows, Index cols)
{
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix out(rows, cols);
    for (Index r = 0; r < rows; ++r) {
        for (Index c = 0; c < cols; ++c) {
            out(r, c) = normal(rng);
        }
    }
    return out;
}

SpdMatrix wishart_bartlett(Rng& rng, const SpdMatrix& scale, double dof)
{
    const Index p = scale.dim();
    if (!(dof >= static_cast<double>(p))) {
        throw Error(Errc::InvalidInput, "Wishart degrees of freedom must be at least p");
    }
    std::normal_distribution<double> normal(0.0, 1.0);
    Matrix a = Matrix::Zero(p, p);
    for (Index i = 0; i < p; ++i) {
        std::chi_squared_distribution<double> chi2(dof - static_cast<double>(i));
        a(i, i) = std::sqrt(chi2(rng));
        for (Index j = 0; j < i; ++j) {
            a(i, j) = normal(rng);
        }
    }
    const Matrix l = Eigen::LLT<Matrix>(scale.matrix()).matrixL();
    const Matrix la = l * a;
    return SpdMatrix(la * la.transpose());
}

} // namespace sur
