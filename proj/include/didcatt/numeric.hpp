#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace didcatt {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Deterministic reductions ---------------------------------------------------

/// Pairwise (cascade) summation; order is fixed by the input layout.
double pairwise_sum(std::span<const double> values);
double mean(std::span<const double> values);
/// Sample standard deviation (n - 1 denominator); 0 for fewer than two values.
double sample_sd(std::span<const double> values);

inline std::span<const double> as_span(const Vector& v) {
  return {v.data(), static_cast<std::size_t>(v.size())};
}

double sigmoid(double z);
double logit(double p);

// Seeds ----------------------------------------------------------------------

std::uint64_t splitmix64(std::uint64_t x);
/// Stable 64-bit FNV-1a hash, used to key child seeds by name.
std::uint64_t fnv1a(std::string_view text);

/// Counter-based child seed: a pure function of (parent, key, counter).
/// Adding new keys never changes the seeds produced for existing ones.
std::uint64_t derive_seed(std::uint64_t parent, std::string_view key,
                          std::uint64_t counter = 0);

using Rng = std::mt19937_64;

/// Fisher-Yates shuffle driven only by raw engine output, so the permutation
/// does not depend on the standard library's distribution implementations.
void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng);
/// Uniform draw in [0, 1) from 53 random bits.
double uniform01(Rng& rng);
/// Standard normal via Box-Muller on uniform01 draws.
double standard_normal(Rng& rng);

// Row selection helpers -------------------------------------------------------

Matrix select_rows(const Matrix& m, std::span<const std::size_t> rows);
Vector select_rows(const Vector& v, std::span<const std::size_t> rows);
Matrix select_cols(const Matrix& m, std::span<const std::size_t> cols);

}  // namespace didcatt
