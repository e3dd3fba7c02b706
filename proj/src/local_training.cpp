#include "fedsiam/local_training.hpp"

#include <cmath>
#include <functional>
#include <string>

#include "fedsiam/error.hpp"
#include "fedsiam/rng.hpp"

namespace fedsiam {

using ad::Mode;
using ad::Tensor;

std::string_view to_string(Strategy s) {
    switch (s) {
        case Strategy::FedAvg: return "fedavg";
        case Strategy::FedProx: return "fedprox";
        case Strategy::Moon: return "moon";
        case Strategy::FedSiamDA: return "fedsiam_da";
    }
    return "unknown";
}

std::string_view to_string(GlobalCopyUpdate u) { return u == GlobalCopyUpdate::PerBatch ? "per_batch" : "off"; }

Strategy parse_strategy(std::string_view name) {
    if (name == "fedavg") return Strategy::FedAvg;
    if (name == "fedprox") return Strategy::FedProx;
    if (name == "moon") return Strategy::Moon;
    if (name == "fedsiam_da" || name == "fedsiam-da") return Strategy::FedSiamDA;
    throw ConfigError("unknown strategy '" + std::string(name) + "' (expected fedavg, fedprox, moon, fedsiam_da)");
}

GlobalCopyUpdate parse_global_copy_update(std::string_view name) {
    if (name == "per_batch") return GlobalCopyUpdate::PerBatch;
    if (name == "off") return GlobalCopyUpdate::Off;
    throw ConfigError("unknown global_copy_update '" + std::string(name) + "' (expected per_batch, off)");
}

void StrategyConfig::validate() const {
    if (!(mu >= 0.0)) throw ConfigError("mu must be non-negative");
    if (!(moon_temperature > 0.0)) throw ConfigError("moon_temperature must be positive");
    if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(sgd.lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(sgd.momentum >= 0.0 && sgd.momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    if (!(sgd.weight_decay >= 0.0)) throw ConfigError("weight_decay must be non-negative");
}

ClientState::ClientState(std::size_t id, std::vector<std::size_t> shard_indices, const Model& initial_global)
    : client_id(id), shard(std::move(shard_indices)), local_model(initial_global.clone()),
      history_model(initial_global.clone()) {
    history_model.set_trainable(false);
}

std::vector<std::vector<std::size_t>> make_batches(std::vector<std::size_t> indices, std::size_t batch_size,
                                                   std::uint64_t seed) {
    Rng rng(seed);
    rng.shuffle(indices.begin(), indices.end());
    std::vector<std::vector<std::size_t>> batches;
    for (std::size_t start = 0; start < indices.size(); start += batch_size) {
        const std::size_t end = std::min(indices.size(), start + batch_size);
        batches.emplace_back(indices.begin() + start, indices.begin() + end);
    }
    if (batches.size() > 1 && 2 * batches.back().size() < batch_size) {
        auto& prev = batches[batches.size() - 2];
        prev.insert(prev.end(), batches.back().begin(), batches.back().end());
        batches.pop_back();
    }
    return batches;
}

Tensor loss_ce(Model& model, const Batch& batch, Mode mode) {
    return ad::softmax_cross_entropy(forward_logits(model, batch.x, mode), batch.y);
}

Tensor hist_term(const Tensor& z_current, const Tensor& z_history) {
    return ad::cosine_similarity(ad::detach(z_history), z_current);
}

Tensor loss_hist(Model& current, const Model& history, const Tensor& x, Mode mode) {
    const Tensor z_history = forward(history, x).z;
    return hist_term(forward_repr(current, x, mode), z_history);
}

Tensor stop_term(const BranchOutputs& local, const BranchOutputs& global_copy) {
    const Tensor aligned_copy = ad::cosine_similarity(global_copy.p, ad::detach(local.z));
    const Tensor aligned_local = ad::cosine_similarity(local.p, ad::detach(global_copy.z));
    return ad::scale(ad::add(aligned_copy, aligned_local), -0.5);
}

namespace {

BranchOutputs branch(Model& model, const Tensor& x, Mode mode) {
    Tensor z = forward_repr(model, x, mode);
    Tensor p = forward_pred(model, z, mode);
    return {z, p};
}

BranchOutputs branch(const Model& model, const Tensor& x) {
    Tensor z = forward(model, x).z;
    Tensor p = forward_pred(model, z);
    return {z, p};
}

}  // namespace

Tensor loss_stop(Model& local, Model& global_copy, const Tensor& x, Mode local_mode, Mode global_copy_mode) {
    const BranchOutputs l = branch(local, x, local_mode);
    const BranchOutputs g = branch(global_copy, x, global_copy_mode);
    return stop_term(l, g);
}

Tensor proximal_term(const Model& model, const Model& global, double mu) {
    require_same_architecture(model, global);
    const auto params = model.parameters();
    const auto anchor = global.parameters();
    Tensor total = ad::squared_distance(params[0], anchor[0].data());
    for (std::size_t i = 1; i < params.size(); ++i) {
        total = ad::add(total, ad::squared_distance(params[i], anchor[i].data()));
    }
    return ad::scale(total, 0.5 * mu);
}

Tensor moon_contrastive(const Tensor& z, const Tensor& z_glob, const Tensor& z_prev, double temperature) {
    const Tensor sim_glob = ad::rowwise_cosine(z, ad::detach(z_glob));
    const Tensor sim_prev = ad::rowwise_cosine(z, ad::detach(z_prev));
    // -log(e^a / (e^a + e^b)) = softplus(b - a)
    return ad::mean(ad::softplus(ad::scale(ad::sub(sim_prev, sim_glob), 1.0 / temperature)));
}

namespace {

struct StepSite {
    std::size_t client;
    std::size_t epoch;
    std::size_t batch;

    std::string describe() const {
        return "client " + std::to_string(client) + ", epoch " + std::to_string(epoch) + ", batch " +
               std::to_string(batch);
    }
};

void backward_and_step(const Tensor& loss, const Model& model, ad::SgdState& sgd, const StepSite& site) {
    if (!std::isfinite(loss.item())) throw NumericError("non-finite loss at " + site.describe());
    loss.backward();
    try {
        ad::sgd_step(model.parameters(), sgd);
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " at " + site.describe());
    }
}

// Extra objective on top of CE, built from the local model's train-mode outputs.
using ExtraLoss = std::function<Tensor(Model& local, const ForwardOutputs& outs, const Batch& batch)>;
// Runs before the local step of each minibatch.
using PreStep = std::function<void(Model& local, const Batch& batch, const StepSite& site)>;

// M local epochs of minibatch SGD from a fresh copy of the global model. The history model
// is snapshotted at every epoch end.
Model train_local(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                  const RoundContext& ctx, const ExtraLoss& extra, const PreStep& pre_step = {}) {
    cfg.validate();
    if (state.shard.empty()) throw ConfigError("client " + std::to_string(state.client_id) + " has no samples");
    require_same_architecture(state.history_model, global);

    Model local = global.clone();
    local.set_trainable(true);
    ad::SgdState sgd(cfg.sgd);
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        const auto seed = derive_seed(ctx.seed, SeedTag::BatchOrder, {state.client_id, ctx.round, epoch});
        const auto batches = make_batches(state.shard, cfg.batch_size, seed);
        for (std::size_t b = 0; b < batches.size(); ++b) {
            const StepSite site{state.client_id, epoch, b};
            const Batch batch = gather(data, batches[b]);
            if (pre_step) pre_step(local, batch, site);
            local.zero_grad();
            const ForwardOutputs outs = forward(local, batch.x, Mode::Train);
            Tensor loss = ad::softmax_cross_entropy(outs.logits, batch.y);
            if (extra) loss = ad::add(loss, extra(local, outs, batch));
            backward_and_step(loss, local, sgd, site);
        }
        state.history_model = local.clone();
        state.history_model.set_trainable(false);
    }
    local.zero_grad();
    state.local_model = local;
    return local;
}

}  // namespace

Model local_round_fedavg(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                         const RoundContext& ctx) {
    return train_local(state, global, cfg, data, ctx, {});
}

Model local_round_fedprox(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                          const RoundContext& ctx) {
    const Model anchor = global.clone();
    return train_local(state, global, cfg, data, ctx, [&](Model& local, const ForwardOutputs&, const Batch&) {
        return proximal_term(local, anchor, cfg.mu);
    });
}

Model local_round_moon(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                       const RoundContext& ctx) {
    Model reference = global.clone();
    reference.set_trainable(false);
    return train_local(state, global, cfg, data, ctx, [&](Model&, const ForwardOutputs& outs, const Batch& batch) {
        const Tensor z_glob = forward(static_cast<const Model&>(reference), batch.x).z;
        const Tensor z_prev = forward(state.history_model, batch.x).z;
        return ad::scale(moon_contrastive(outs.z, z_glob, z_prev, cfg.moon_temperature), cfg.mu);
    });
}

Model local_round_fedsiam(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                          const RoundContext& ctx) {
    state.global_copy = global.clone();
    Model& copy = *state.global_copy;
    copy.set_trainable(false);
    ad::SgdState copy_sgd(cfg.sgd);

    PreStep adversarial_step;
    if (cfg.global_copy_update == GlobalCopyUpdate::PerBatch) {
        // Phase A: the stop-gradient loss moves only the global copy toward the frozen local model.
        adversarial_step = [&](Model& local, const Batch& batch, const StepSite& site) {
            local.set_trainable(false);
            copy.set_trainable(true);
            copy.zero_grad();
            const BranchOutputs frozen_local = branch(static_cast<const Model&>(local), batch.x);
            const BranchOutputs live_copy = branch(copy, batch.x, Mode::Train);
            const Tensor loss = stop_term(frozen_local, live_copy);
            backward_and_step(loss, copy, copy_sgd, site);
            copy.zero_grad();
            copy.set_trainable(false);
            local.set_trainable(true);
        };
    }

    // Phase B: CE + mu * (L_hist + L_stop) against the updated, now frozen, global copy.
    auto objective = [&](Model& local, const ForwardOutputs& outs, const Batch& batch) {
        const Tensor p_local = forward_pred(local, outs.z, Mode::Train);
        const BranchOutputs frozen_copy = branch(static_cast<const Model&>(copy), batch.x);
        const Tensor z_history = forward(state.history_model, batch.x).z;
        const Tensor stop = stop_term({outs.z, p_local}, frozen_copy);
        const Tensor hist = hist_term(outs.z, z_history);
        return ad::scale(ad::add(hist, stop), cfg.mu);
    };
    return train_local(state, global, cfg, data, ctx, objective, adversarial_step);
}

Model local_round(ClientState& state, const Model& global, const StrategyConfig& cfg, const Dataset& data,
                  const RoundContext& ctx) {
    switch (cfg.strategy) {
        case Strategy::FedAvg: return local_round_fedavg(state, global, cfg, data, ctx);
        case Strategy::FedProx: return local_round_fedprox(state, global, cfg, data, ctx);
        case Strategy::Moon: return local_round_moon(state, global, cfg, data, ctx);
        case Strategy::FedSiamDA: return local_round_fedsiam(state, global, cfg, data, ctx);
    }
    throw ConfigError("unhandled strategy");
}

}  // namespace fedsiam
