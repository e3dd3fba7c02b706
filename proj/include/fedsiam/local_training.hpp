#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "fedsiam/autodiff.hpp"
#include "fedsiam/data.hpp"
#include "fedsiam/model.hpp"

namespace fedsiam {

enum class Strategy { FedAvg, FedProx, Moon, FedSiamDA };

// How the client-side copy of the global model is trained during FedSiam-DA rounds:
// one SGD step per minibatch, or never (the local model then only reads it).
enum class GlobalCopyUpdate { PerBatch, Off };

std::string_view to_string(Strategy s);
std::string_view to_string(GlobalCopyUpdate u);
// Throws ConfigError on an unknown name.
Strategy parse_strategy(std::string_view name);
GlobalCopyUpdate parse_global_copy_update(std::string_view name);

struct StrategyConfig {
    Strategy strategy = Strategy::FedSiamDA;
    double mu = 0.1;
    double moon_temperature = 0.5;
    std::size_t local_epochs = 5;
    std::size_t batch_size = 32;
    ad::SgdConfig sgd;
    GlobalCopyUpdate global_copy_update = GlobalCopyUpdate::PerBatch;

    void validate() const;
};

struct ClientState {
    std::size_t client_id = 0;
    std::vector<std::size_t> shard;  // training indices into the shared dataset
    Model local_model;
    // Local model at the end of the previous local epoch (or previous round at epoch 1).
    Model history_model;
    // Client-side copy of the broadcast global model; reset every round, never uploaded.
    std::optional<Model> global_copy;

    ClientState() = default;
    ClientState(std::size_t id, std::vector<std::size_t> shard_indices, const Model& initial_global);
};

// Round-level inputs shared by every client.
struct RoundContext {
    std::uint64_t seed = 0;
    std::size_t round = 0;
};

// Minibatches of `indices` in a freshly shuffled order. A trailing batch shorter than half of
// batch_size is folded into the previous one.
std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                   std::uint64_t seed);

ad::Tensor loss_ce(Model& model, const Batch& batch, ad::Mode mode);

// Positive cosine between a detached history representation and the current one.
ad::Tensor hist_term(const ad::Tensor& z_current, const ad::Tensor& z_history);
ad::Tensor loss_hist(Model& current, const Model& history, const ad::Tensor& x, ad::Mode mode);

struct BranchOutputs {
    ad::Tensor z;  // representation
    ad::Tensor p;  // prediction head output
};

// ½·D(p_gc, stopgrad(z_local)) + ½·D(p_local, stopgrad(z_gc)) with D the negative cosine.
ad::Tensor stop_term(const BranchOutputs& local, const BranchOutputs& global_copy);
ad::Tensor loss_stop(Model& local, Model& global_copy, const ad::Tensor& x, ad::Mode local_mode,
                     ad::Mode global_copy_mode);

// (mu / 2) · Σ ||w - w_global||² over trainable tensors.
ad::Tensor proximal_term(const Model& model, const Model& global, double mu);

// Mean over rows of -log(e^{s_g/τ} / (e^{s_g/τ} + e^{s_p/τ})), with s_g = cos(z, z_glob) and
// s_p = cos(z, z_prev) row-wise and both references detached.
ad::Tensor moon_contrastive(const ad::Tensor& z, const ad::Tensor& z_glob, const ad::Tensor& z_prev,
                            double temperature);

Model local_round_fedavg(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                         const RoundContext& ctx);
Model local_round_fedprox(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                          const RoundContext& ctx);
Model local_round_moon(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                       const RoundContext& ctx);
Model local_round_fedsiam(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                          const RoundContext& ctx);

// Dispatches on cfg.strategy.
Model local_round(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                  const RoundContext& ctx);

}  // namespace fedsiam
