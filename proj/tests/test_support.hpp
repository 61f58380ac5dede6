#pragma once

// Random instance generators and brute-force oracles shared by the tests.
// Nothing here calls into the code paths it is used to check.

#include "sur/surcore.hpp"

#include <algorithm>
#include <random>
#include <vector>

namespace sur::testing {

using Sets = std::vector<std::vector<Index>>;

inline Matrix random_matrix(Rng& rng, Index rows, Index cols)
{
    std::normal_distribution<double> normal;
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i) {
        for (Index j = 0; j < cols; ++j) {
            m(i, j) = normal(rng);
        }
    }
    return m;
}

/// A A^T / p + 0.1 I: well conditioned, random orientation.
inline SpdMatrix random_spd(Rng& rng, Index p)
{
    const Matrix a = random_matrix(rng, p, p);
    Matrix s = a * a.transpose() / static_cast<double>(p) + 0.1 * Matrix::Identity(p, p);
    return SpdMatrix(0.5 * (s + s.transpose()));
}

/// Random nonempty subsets of 0..m-1, one per response.
inline ModelSpec random_spec(Rng& rng, Index p, Index m, Index max_size)
{
    std::vector<std::vector<Index>> sets;
    std::vector<Index> all(static_cast<std::size_t>(m));
    for (Index i = 0; i < m; ++i) {
        all[static_cast<std::size_t>(i)] = i;
    }
    std::uniform_int_distribution<Index> size_dist(1, max_size);
    for (Index j = 0; j < p; ++j) {
        std::shuffle(all.begin(), all.end(), rng);
        const auto size = static_cast<std::size_t>(size_dist(rng));
        sets.emplace_back(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(size));
    }
    return ModelSpec(std::move(sets));
}

/// Random spec whose sets are not all identical.
inline ModelSpec random_unequal_spec(Rng& rng, Index p, Index m, Index max_size)
{
    for (;;) {
        ModelSpec spec = random_spec(rng, p, m, max_size);
        if (!spec.shares_one_set()) {
            return spec;
        }
    }
}

/// 1-based multi-index (i, n) -> 0-based flat position, written out as in
/// the textbook formula (i - 1) N + n - 1.
inline Index flat(Index i1, Index n1, Index subjects) { return (i1 - 1) * subjects + n1 - 1; }

inline Matrix oracle_trace_subjects(const Matrix& a, Index p, Index subjects)
{
    Matrix out = Matrix::Zero(p, p);
    for (Index i = 1; i <= p; ++i) {
        for (Index j = 1; j <= p; ++j) {
            for (Index n = 1; n <= subjects; ++n) {
                out(i - 1, j - 1) += a(flat(i, n, subjects), flat(j, n, subjects));
            }
        }
    }
    return out;
}

inline Matrix oracle_trace_responses(const Matrix& a, Index p, Index subjects)
{
    Matrix out = Matrix::Zero(subjects, subjects);
    for (Index n = 1; n <= subjects; ++n) {
        for (Index m = 1; m <= subjects; ++m) {
            for (Index i = 1; i <= p; ++i) {
                out(n - 1, m - 1) += a(flat(i, n, subjects), flat(i, m, subjects));
            }
        }
    }
    return out;
}

inline Matrix oracle_transpose_subjects(const Matrix& a, Index p, Index subjects)
{
    Matrix out(a.rows(), a.cols());
    for (Index i = 1; i <= p; ++i) {
        for (Index j = 1; j <= p; ++j) {
            for (Index n = 1; n <= subjects; ++n) {
                for (Index m = 1; m <= subjects; ++m) {
                    out(flat(i, n, subjects), flat(j, m, subjects)) = a(flat(i, m, subjects), flat(j, n, subjects));
                }
            }
        }
    }
    return out;
}

inline double max_abs(const Matrix& m) { return m.cwiseAbs().maxCoeff(); }

} // namespace sur::testing
