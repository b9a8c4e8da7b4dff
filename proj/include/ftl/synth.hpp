#pragma once

#include <cstdint>
#include <ostream>
#include <string>

#include "ftl/dataset_io.hpp"

namespace ftl {

// Gaussian blob classification task: one cluster per class, centers drawn
// uniformly in [-center_spread, center_spread]^d, balanced labels.
Dataset make_blobs(std::size_t n_samples, std::size_t n_features, std::size_t n_classes,
                   std::uint64_t seed, double center_spread = 4.0, double cluster_std = 1.0);

// Writes the bundled IIoT-flavoured intrusion CSV (flow statistics plus an
// attack-type label). Imbalanced classes, plus nuisance columns that exercise
// the cleaning and selection stages: a constant column, a column with "inf"
// cells, an uninformative noise column, and a near-duplicate column.
void write_iiot_fixture(std::ostream& out, std::size_t n_rows = 2000,
                        std::uint64_t seed = 20240917);

} // namespace ftl
