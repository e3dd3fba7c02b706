#include "fedsiam/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <string>

#include "fedsiam/error.hpp"
#include "fedsiam/rng.hpp"

namespace fedsiam {

void Dataset::validate() const {
    if (labels.empty()) throw ConfigError("dataset is empty");
    if (dim == 0 || features.size() != labels.size() * dim) throw ConfigError("dataset features are ragged");
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] < 0 || static_cast<std::size_t>(labels[i]) >= num_classes) {
            throw ConfigError("label " + std::to_string(labels[i]) + " at sample " + std::to_string(i) +
                              " is outside [0, " + std::to_string(num_classes) + ")");
        }
    }
}

Batch gather(const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<double> x;
    x.reserve(indices.size() * ds.dim);
    std::vector<int> y;
    y.reserve(indices.size());
    for (std::size_t i : indices) {
        auto r = ds.row(i);
        x.insert(x.end(), r.begin(), r.end());
        y.push_back(ds.labels[i]);
    }
    return {ad::Tensor::from({indices.size(), ds.dim}, std::move(x)), std::move(y)};
}

Dataset read_cifar10_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IngestionError("cannot open CIFAR-10 file " + file.string());
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (bytes.empty()) throw FormatError(file.string() + ": empty file");
    if (bytes.size() % kCifarRecordBytes != 0) {
        const std::size_t offset = bytes.size() - bytes.size() % kCifarRecordBytes;
        throw FormatError(file.string() + ": truncated record at byte offset " + std::to_string(offset));
    }
    Dataset ds;
    ds.dim = kCifarPixels;
    ds.num_classes = 10;
    const std::size_t n = bytes.size() / kCifarRecordBytes;
    ds.labels.reserve(n);
    ds.features.reserve(n * kCifarPixels);
    for (std::size_t r = 0; r < n; ++r) {
        const unsigned char* rec = bytes.data() + r * kCifarRecordBytes;
        if (rec[0] >= 10) {
            throw FormatError(file.string() + ": label byte " + std::to_string(rec[0]) + " at byte offset " +
                              std::to_string(r * kCifarRecordBytes));
        }
        ds.labels.push_back(rec[0]);
        for (std::size_t p = 1; p < kCifarRecordBytes; ++p) ds.features.push_back(rec[p] / 255.0);
    }
    return ds;
}

namespace {

void append(Dataset& dst, Dataset&& src) {
    if (dst.labels.empty()) {
        dst = std::move(src);
        return;
    }
    dst.features.insert(dst.features.end(), src.features.begin(), src.features.end());
    dst.labels.insert(dst.labels.end(), src.labels.begin(), src.labels.end());
}

}  // namespace

std::pair<Dataset, Dataset> load_cifar10(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw IngestionError("CIFAR-10 directory not found: " + dir.string());
    Dataset train;
    for (int i = 1; i <= 5; ++i) {
        const auto file = dir / ("data_batch_" + std::to_string(i) + ".bin");
        if (!std::filesystem::exists(file)) throw IngestionError("missing CIFAR-10 file " + file.string());
        append(train, read_cifar10_file(file));
    }
    const auto test_file = dir / "test_batch.bin";
    if (!std::filesystem::exists(test_file)) throw IngestionError("missing CIFAR-10 file " + test_file.string());
    return {std::move(train), read_cifar10_file(test_file)};
}

Dataset synth_blobs(const BlobSpec& spec, std::uint64_t seed, std::uint64_t stream) {
    if (spec.classes < 2) throw ConfigError("blobs need at least 2 classes");
    if (spec.dim < 2) throw ConfigError("blobs need at least 2 dimensions");
    if (spec.per_class == 0) throw ConfigError("blobs need at least 1 sample per class");
    if (!(spec.spread >= 0.0)) throw ConfigError("blob spread must be non-negative");

    Rng center_rng(derive_seed(seed, SeedTag::BlobCenters));
    std::vector<double> centers(spec.classes * spec.dim);
    for (std::size_t c = 0; c < spec.classes; ++c) {
        double* u = centers.data() + c * spec.dim;
        double norm = 0.0;
        do {
            norm = 0.0;
            for (std::size_t j = 0; j < spec.dim; ++j) {
                u[j] = center_rng.normal();
                norm += u[j] * u[j];
            }
            norm = std::sqrt(norm);
        } while (norm < 1e-9);
        for (std::size_t j = 0; j < spec.dim; ++j) u[j] /= norm;
    }

    Rng rng(derive_seed(seed, SeedTag::BlobSamples, {stream}));
    const double sigma = spec.spread / std::sqrt(static_cast<double>(spec.dim));
    Dataset ds;
    ds.dim = spec.dim;
    ds.num_classes = spec.classes;
    ds.features.reserve(spec.classes * spec.per_class * spec.dim);
    // Interleaved classes so that any prefix is roughly balanced.
    for (std::size_t i = 0; i < spec.per_class; ++i) {
        for (std::size_t c = 0; c < spec.classes; ++c) {
            for (std::size_t j = 0; j < spec.dim; ++j) {
                ds.features.push_back(centers[c * spec.dim + j] + sigma * rng.normal());
            }
            ds.labels.push_back(static_cast<int>(c));
        }
    }
    return ds;
}

namespace {

// Counts summing exactly to `total`; leftover units go to the largest fractional parts,
// ties to the lower client index.
std::vector<std::size_t> largest_remainder(std::span<const double> proportions, std::size_t total) {
    const std::size_t k = proportions.size();
    std::vector<std::size_t> counts(k);
    std::vector<double> frac(k);
    std::size_t assigned = 0;
    for (std::size_t i = 0; i < k; ++i) {
        const double exact = proportions[i] * static_cast<double>(total);
        counts[i] = static_cast<std::size_t>(std::floor(exact));
        frac[i] = exact - static_cast<double>(counts[i]);
        assigned += counts[i];
    }
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return frac[a] > frac[b]; });
    for (std::size_t i = 0; assigned < total; i = (i + 1) % k, ++assigned) ++counts[order[i]];
    // Rounding slop in the proportions can overshoot; trim from the smallest fractions.
    for (std::size_t i = k; assigned > total; --assigned) {
        do {
            i = (i == 0 ? k : i) - 1;
        } while (counts[order[i]] == 0);
        --counts[order[i]];
    }
    return counts;
}

std::vector<double> dirichlet(Rng& rng, std::size_t k, double beta) {
    std::vector<double> q(k);
    for (;;) {
        double total = 0.0;
        for (double& v : q) {
            v = rng.gamma(beta);
            total += v;
        }
        if (total > 0.0 && std::isfinite(total)) {
            for (double& v : q) v /= total;
            return q;
        }
    }
}

}  // namespace

Partition dirichlet_partition(std::span<const int> labels, std::size_t clients, double beta, std::uint64_t seed,
                              std::size_t min_samples) {
    if (clients < 2) throw ConfigError("dirichlet_partition needs at least 2 clients");
    if (!(beta > 0.0)) throw ConfigError("dirichlet concentration beta must be positive");
    if (clients * min_samples > labels.size()) {
        throw ConfigError("cannot give " + std::to_string(clients) + " clients " + std::to_string(min_samples) +
                          " samples each from " + std::to_string(labels.size()));
    }
    int max_label = -1;
    for (int y : labels) {
        if (y < 0) throw ConfigError("negative label in dirichlet_partition");
        max_label = std::max(max_label, y);
    }
    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(max_label + 1));
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[static_cast<std::size_t>(labels[i])].push_back(i);

    constexpr int kMaxAttempts = 10000;
    Rng rng(derive_seed(seed, SeedTag::Partition));
    for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
        Partition p;
        p.clients.resize(clients);
        for (const auto& members : by_class) {
            if (members.empty()) continue;
            std::vector<std::size_t> shuffled = members;
            rng.shuffle(shuffled.begin(), shuffled.end());
            const auto q = dirichlet(rng, clients, beta);
            const auto counts = largest_remainder(q, shuffled.size());
            std::size_t offset = 0;
            for (std::size_t k = 0; k < clients; ++k) {
                p.clients[k].insert(p.clients[k].end(), shuffled.begin() + offset,
                                    shuffled.begin() + offset + counts[k]);
                offset += counts[k];
            }
        }
        const bool ok = std::all_of(p.clients.begin(), p.clients.end(),
                                    [&](const auto& c) { return c.size() >= min_samples; });
        if (ok) {
            for (auto& c : p.clients) rng.shuffle(c.begin(), c.end());
            return p;
        }
    }
    throw ConfigError("no Dirichlet draw gave every client " + std::to_string(min_samples) + " samples after " +
                      std::to_string(kMaxAttempts) + " attempts; raise beta or lower min_samples");
}

std::vector<std::vector<std::size_t>> class_histograms(const Partition& p, std::span<const int> labels,
                                                       std::size_t num_classes) {
    std::vector<std::vector<std::size_t>> out(p.clients.size(), std::vector<std::size_t>(num_classes, 0));
    for (std::size_t k = 0; k < p.clients.size(); ++k) {
        for (std::size_t i : p.clients[k]) ++out[k][static_cast<std::size_t>(labels[i])];
    }
    return out;
}

}  // namespace fedsiam
