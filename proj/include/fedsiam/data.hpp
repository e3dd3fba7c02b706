#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <utility>
#include <vector>

#include "fedsiam/autodiff.hpp"

namespace fedsiam {

struct Dataset {
    std::size_t dim = 0;
    std::size_t num_classes = 0;
    std::vector<double> features;  // row-major n × dim
    std::vector<int> labels;

    std::size_t size() const { return labels.size(); }
    std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

    // Throws ConfigError if empty, ragged, or a label falls outside [0, num_classes).
    void validate() const;
};

struct Batch {
    ad::Tensor x;
    std::vector<int> y;
};

Batch gather(const Dataset& ds, std::span<const std::size_t> indices);

// CIFAR-10 binary layout: per record 1 label byte then 3072 pixel bytes (R, G, B planes of 32×32).
inline constexpr std::size_t kCifarRecordBytes = 3073;
inline constexpr std::size_t kCifarPixels = 3072;

// One data_batch_*.bin / test_batch.bin file, pixels scaled to [0, 1].
Dataset read_cifar10_file(const std::filesystem::path& file);

// data_batch_1..5.bin as train, test_batch.bin as test.
std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir);

struct BlobSpec {
    std::size_t classes = 10;
    std::size_t per_class = 200;
    std::size_t dim = 32;
    // Radial noise scale: per-coordinate std is spread / sqrt(dim), so the expected squared
    // noise norm is spread^2 regardless of dimension.
    double spread = 1.0;
};

// Gaussian blobs around unit-norm class centers. Centers depend only on `seed`; `stream`
// selects an independent sample draw around the same centers (e.g. 0 = train, 1 = test).
Dataset synth_blobs(const BlobSpec& spec, std::uint64_t seed, std::uint64_t stream = 0);

struct Partition {
    std::vector<std::vector<std::size_t>> clients;
};

// Per class, proportions q ~ Dir(beta·1_K) are drawn and the class's (shuffled) indices are
// split by largest-remainder rounding. The whole draw is repeated while any client has fewer
// than `min_samples` indices.
Partition dirichlet_partition(std::span<const int> labels, std::size_t clients, double beta, std::uint64_t seed,
                              std::size_t min_samples = 10);

// Per-client label histograms, [client][class].
std::vector<std::vector<std::size_t>> class_histograms(const Partition& p, std::span<const int> labels,
                                                       std::size_t num_classes);

}  // namespace fedsiam
