#pragma once

#include "sur/tensorlinalg.hpp"

#include <cstdint>
#include <initializer_list>
#include <random>

namespace sur {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// Deterministic substream seed from a parent seed and a list of keys. The
/// same (parent, keys) always yields the same seed, and different key lists
/// give statistically unrelated streams.
std::uint64_t derive_seed(std::uint64_t parent, std::initializer_list<std::uint64_t> keys) noexcept;

/// Bit pattern of a double, for use as a substream key.
std::uint64_t key_of(double value) noexcept;

/// rows x cols matrix of independent N(0, 1) draws, filled row by row.
Matrix standard_normal_matrix(Rng& rng, Index rows, Index cols);

/// Draw from W_p(scale, dof) by the Bartlett decomposition: with L the
/// Cholesky factor of scale and A lower triangular, A_ii^2 ~ chi^2(dof - i)
/// (0-based i) and A_ij ~ N(0, 1) below the diagonal, W = L A A^T L^T.
/// Requires dof >= p.
SpdMatrix wishart_bartlett(Rng& rng, const SpdMatrix& scale, double dof);

} // namespace sur
