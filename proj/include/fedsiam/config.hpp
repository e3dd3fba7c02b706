#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "fedsiam/data.hpp"
#include "fedsiam/local_training.hpp"
#include "fedsiam/model.hpp"

namespace fedsiam {

enum class DatasetKind { Blobs, Cifar10 };

// Server-side combination rule. Auto picks dual for FedSiam-DA and sample-weighted
// averaging for the baselines.
enum class AggregationMode { Auto, Uniform, Weighted, Dual };

std::string_view to_string(AggregationMode m);
AggregationMode parse_aggregation(std::string_view name);

struct FederationConfig {
    DatasetKind dataset = DatasetKind::Blobs;
    std::filesystem::path cifar10_dir;
    BlobSpec blobs{10, 200, 32, 1.0};
    std::size_t blobs_test_per_class = 100;

    std::vector<std::size_t> backbone_hidden{128, 64};
    std::size_t projection_dim = 32;

    std::size_t clients = 10;
    std::size_t rounds = 50;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 32;
    double lr = 0.05;
    double momentum = 0.9;
    double weight_decay = 1e-5;
    double mu = 0.1;
    Strategy strategy = Strategy::FedSiamDA;
    AggregationMode aggregation = AggregationMode::Auto;
    double beta = 0.3;
    std::uint64_t seed = 0;
    std::size_t min_samples = 10;
    double moon_temperature = 0.5;
    GlobalCopyUpdate global_copy_update = GlobalCopyUpdate::PerBatch;
    double holdout_fraction = 0.1;
    std::filesystem::path output_dir;
    std::size_t threads = 1;
    // Off keeps metrics.csv byte-reproducible: the seconds column is written as 0.
    bool record_wall_clock = false;

    // Throws ConfigError on any out-of-range knob.
    void validate() const;

    AggregationMode effective_aggregation() const;
    StrategyConfig strategy_config() const;

    // Applies one `key = value` assignment. Throws ConfigError on unknown keys or bad values.
    void set(std::string_view key, std::string_view value);

    // Flat `key = value` text listing every key, in a fixed order; parse_config() reads it back.
    std::string resolved() const;
};

// Parses the flat key-value format: one `key = value` per line, `#` starts a comment.
FederationConfig parse_config(std::string_view text, FederationConfig base = {});
FederationConfig load_config(const std::filesystem::path& path);

}  // namespace fedsiam
