#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fedsiam/aggregation.hpp"
#include "fedsiam/config.hpp"
#include "fedsiam/data.hpp"
#include "fedsiam/local_training.hpp"
#include "fedsiam/model.hpp"

namespace fedsiam {

struct RoundMetrics {
    std::size_t round = 0;
    double global_test_acc = 0.0;
    double global_test_loss = 0.0;
    double mean_client_acc = 0.0;     // each local model on its own held-out split
    std::vector<double> weights;      // aggregation weight per client
    std::vector<double> similarities; // dual aggregation only
    std::size_t clamped = 0;          // similarities raised to the floor
    double seconds = 0.0;             // wall clock for the round

    bool operator==(const RoundMetrics&) const = default;
};

struct ClientSplit {
    std::vector<std::size_t> train;
    std::vector<std::size_t> holdout;  // last holdout_fraction of the shard
};

// Everything a run needs before the first round: data, partition and the initial model.
struct Experiment {
    Dataset train;
    Dataset test;
    Partition partition;
    std::vector<ClientSplit> splits;
    EncoderConfig encoder;
    Model initial_global;
};

Experiment prepare_experiment(const FederationConfig& cfg);

struct Evaluation {
    double accuracy = 0.0;
    double loss = 0.0;
};

// Eval-mode accuracy and mean cross-entropy over `indices` (all samples when empty).
Evaluation evaluate(const Model& model, const Dataset& ds, std::span<const std::size_t> indices = {});

struct RunOptions {
    // Processing order of clients within a round; empty means 0..K-1. Results do not depend on it.
    std::vector<std::size_t> client_order;
    std::function<void(const RoundMetrics&)> on_round;
};

struct FederationResult {
    std::vector<RoundMetrics> rounds;
    Model final_global;
};

// The full T-round loop. When cfg.output_dir is set, the directory is checked before training,
// config.resolved is written up front, and metrics plus final_model.bin afterwards; on failure
// the metrics gathered so far are flushed before the error propagates.
FederationResult run_federation(const FederationConfig& cfg, const RunOptions& opts = {});

// One aggregation step as configured; returns the new global model and fills the
// weight/similarity fields of `metrics`.
Model aggregate_round(std::span<const Model> locals, std::span<const double> sample_counts, AggregationMode mode,
                      RoundMetrics& metrics);

// Throws IoError unless `dir` exists (or can be created) and accepts a file.
void preflight_output_dir(const std::filesystem::path& dir);

// metrics.csv: round,global_test_acc,global_test_loss,mean_client_acc,seconds
// metrics.json: every field of every record.
void emit_metrics(std::span<const RoundMetrics> records, const std::filesystem::path& dir,
                  bool record_wall_clock = false);
std::string metrics_csv(std::span<const RoundMetrics> records, bool record_wall_clock = false);
std::string metrics_json(std::span<const RoundMetrics> records);
std::vector<RoundMetrics> parse_metrics_json(const std::string& text);

// final_model.bin: a text manifest
//   fedsiam-model 1
//   tensors <N>
//   <name> <d0>x<d1>...     (N lines)
//   values <total>
// followed by the flat trainable vector as little-endian IEEE-754 doubles.
void write_model_file(const std::filesystem::path& file, const Model& model);

struct ModelFile {
    std::vector<std::string> names;
    std::vector<ad::Shape> shapes;
    std::vector<double> values;
};

ModelFile read_model_file(const std::filesystem::path& file);

}  // namespace fedsiam
