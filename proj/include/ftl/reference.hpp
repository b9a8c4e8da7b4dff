#pragma once

// Plain serial reference implementations. These deliberately share no code
// with the optimized kernels they check: tests compare the two paths, and the
// bench tool times them against each other.

#include <vector>

#include "ftl/dataset_io.hpp"
#include "ftl/neuralnet.hpp"

namespace ftl::ref {

// Naive two-pass Pearson matrix over features + label, one pair at a time.
Matrix pearson_matrix(const Dataset& data);

// Brute-force per-parameter weighted average: sum_i (n_i/n) * w_i.
ModelWeights weighted_average(const std::vector<ModelWeights>& models,
                              const std::vector<std::size_t>& counts);

// Softmax cross entropy with long-double accumulation.
double cross_entropy(const Matrix& logits, const std::vector<int>& labels);

// Central finite differences of the mean loss through the real forward pass;
// the gradient oracle for backward().
GradientSet finite_difference_gradient(const ModelWeights& weights, const Batch& batch,
                                       double h);

} // namespace ftl::ref
