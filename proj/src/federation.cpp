#include "fedsiam/federation.hpp"

#include <algorithm>
#include <atomic>
#include <bit>
#include <charconv>
#include <chrono>
#include <cmath>
#include <exception>
#include <fstream>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

#include "fedsiam/error.hpp"
#include "json.hpp"

namespace fedsiam {

Experiment prepare_experiment(const FederationConfig& cfg) {
    cfg.validate();
    Experiment ex;
    if (cfg.dataset == DatasetKind::Cifar10) {
        std::tie(ex.train, ex.test) = load_cifar10(cfg.cifar10_dir);
    } else {
        ex.train = synth_blobs(cfg.blobs, cfg.seed, 0);
        BlobSpec test_spec = cfg.blobs;
        test_spec.per_class = cfg.blobs_test_per_class;
        ex.test = synth_blobs(test_spec, cfg.seed, 1);
    }
    ex.train.validate();
    ex.test.validate();

    ex.partition = dirichlet_partition(ex.train.labels, cfg.clients, cfg.beta, cfg.seed, cfg.min_samples);
    for (std::size_t k = 0; k < ex.partition.clients.size(); ++k) {
        const auto& shard = ex.partition.clients[k];
        std::size_t holdout = static_cast<std::size_t>(std::floor(cfg.holdout_fraction * shard.size()));
        if (cfg.holdout_fraction > 0.0) holdout = std::max<std::size_t>(holdout, 1);
        if (shard.size() < holdout + 2) {
            throw ConfigError("client " + std::to_string(k) + " has " + std::to_string(shard.size()) +
                              " samples, too few to train; raise min_samples");
        }
        ClientSplit split;
        split.train.assign(shard.begin(), shard.end() - static_cast<std::ptrdiff_t>(holdout));
        split.holdout.assign(shard.end() - static_cast<std::ptrdiff_t>(holdout), shard.end());
        ex.splits.push_back(std::move(split));
    }

    ex.encoder = {ex.train.dim, cfg.backbone_hidden, cfg.projection_dim, ex.train.num_classes};
    ex.initial_global = Model::init(ex.encoder, cfg.seed);
    return ex;
}

Evaluation evaluate(const Model& model, const Dataset& ds, std::span<const std::size_t> indices) {
    std::vector<std::size_t> all;
    if (indices.empty()) {
        all.resize(ds.size());
        std::iota(all.begin(), all.end(), 0);
        indices = all;
    }
    if (indices.empty()) throw ConfigError("evaluate: empty dataset");
    constexpr std::size_t kChunk = 256;
    std::size_t correct = 0;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < indices.size(); start += kChunk) {
        const auto chunk = indices.subspan(start, std::min(kChunk, indices.size() - start));
        const Batch batch = gather(ds, chunk);
        const ad::Tensor logits = forward(model, batch.x).logits;
        loss_sum += ad::softmax_cross_entropy(logits, batch.y).item() * static_cast<double>(chunk.size());
        const std::size_t c = logits.dim(1);
        for (std::size_t i = 0; i < chunk.size(); ++i) {
            const auto row = logits.data().subspan(i * c, c);
            const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
            if (best == batch.y[i]) ++correct;
        }
    }
    const double n = static_cast<double>(indices.size());
    return {static_cast<double>(correct) / n, loss_sum / n};
}

Model aggregate_round(std::span<const Model> locals, std::span<const double> sample_counts, AggregationMode mode,
                      RoundMetrics& metrics) {
    const double k = static_cast<double>(locals.size());
    switch (mode) {
        case AggregationMode::Uniform:
            metrics.weights.assign(locals.size(), 1.0 / k);
            return aggregate_uniform(locals);
        case AggregationMode::Weighted: {
            const double total = std::accumulate(sample_counts.begin(), sample_counts.end(), 0.0);
            metrics.weights.clear();
            for (double c : sample_counts) metrics.weights.push_back(c / total);
            return aggregate_weighted(locals, sample_counts);
        }
        case AggregationMode::Dual:
        case AggregationMode::Auto: {
            AggregationReport report = dual_aggregate(locals);
            metrics.weights = report.weights;
            metrics.similarities = report.similarities;
            metrics.clamped = static_cast<std::size_t>(std::count(report.clamped.begin(), report.clamped.end(), true));
            return std::move(report.final_global);
        }
    }
    throw ConfigError("unhandled aggregation mode");
}

namespace {

// Trains every client for one round; clients are independent, so any worker may take any client.
std::vector<Model> train_clients(std::vector<ClientState>& clients, const Model& global, const StrategyConfig& scfg,
                                 const Dataset& train, const RoundContext& ctx, std::span<const std::size_t> order,
                                 std::size_t threads) {
    std::vector<Model> locals(clients.size());
    std::vector<std::exception_ptr> errors(clients.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < order.size(); i = next++) {
            const std::size_t k = order[i];
            try {
                locals[k] = local_round(clients[k], global, scfg, train, ctx);
            } catch (...) {
                errors[k] = std::current_exception();
            }
        }
    };
    const std::size_t n_workers = std::min(threads, order.size());
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_workers; ++t) pool.emplace_back(worker);
    }
    for (std::size_t k = 0; k < errors.size(); ++k) {
        if (!errors[k]) continue;
        try {
            std::rethrow_exception(errors[k]);
        } catch (const std::exception& e) {
            throw Error("round " + std::to_string(ctx.round) + ", client " + std::to_string(k) + ": " + e.what());
        }
    }
    return locals;
}

void write_text(const std::filesystem::path& file, const std::string& text) {
    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out << text;
    if (!out) throw IoError("write failed for " + file.string());
}

}  // namespace

FederationResult run_federation(const FederationConfig& cfg, const RunOptions& opts) {
    cfg.validate();
    const bool write_files = !cfg.output_dir.empty();
    if (write_files) {
        preflight_output_dir(cfg.output_dir);
        write_text(cfg.output_dir / "config.resolved", cfg.resolved());
    }

    Experiment ex = prepare_experiment(cfg);
    const StrategyConfig scfg = cfg.strategy_config();
    const AggregationMode mode = cfg.effective_aggregation();

    std::vector<std::size_t> order = opts.client_order;
    if (order.empty()) {
        order.resize(cfg.clients);
        std::iota(order.begin(), order.end(), 0);
    }
    {
        std::vector<std::size_t> sorted = order;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (sorted[i] != i || sorted.size() != cfg.clients) {
                throw ConfigError("client_order must be a permutation of 0.." + std::to_string(cfg.clients - 1));
            }
        }
    }

    std::vector<ClientState> clients;
    std::vector<double> counts;
    for (std::size_t k = 0; k < cfg.clients; ++k) {
        clients.emplace_back(k, ex.splits[k].train, ex.initial_global);
        counts.push_back(static_cast<double>(ex.splits[k].train.size()));
    }

    FederationResult result;
    Model global = ex.initial_global.clone();
    try {
        for (std::size_t t = 0; t < cfg.rounds; ++t) {
            const auto start = std::chrono::steady_clock::now();
            const RoundContext ctx{cfg.seed, t};
            const std::vector<Model> locals = train_clients(clients, global, scfg, ex.train, ctx, order, cfg.threads);

            RoundMetrics m;
            m.round = t;
            global = aggregate_round(locals, counts, mode, m);

            const Evaluation g = evaluate(global, ex.test);
            m.global_test_acc = g.accuracy;
            m.global_test_loss = g.loss;
            double client_acc = 0.0;
            std::size_t evaluated = 0;
            for (std::size_t k = 0; k < locals.size(); ++k) {
                if (ex.splits[k].holdout.empty()) continue;
                client_acc += evaluate(locals[k], ex.train, ex.splits[k].holdout).accuracy;
                ++evaluated;
            }
            m.mean_client_acc = evaluated ? client_acc / static_cast<double>(evaluated) : 0.0;
            m.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            result.rounds.push_back(m);
            if (opts.on_round) opts.on_round(m);
        }
    } catch (...) {
        if (write_files) {
            try {
                emit_metrics(result.rounds, cfg.output_dir, cfg.record_wall_clock);
            } catch (...) {
            }
        }
        throw;
    }

    result.final_global = std::move(global);
    if (write_files) {
        emit_metrics(result.rounds, cfg.output_dir, cfg.record_wall_clock);
        write_model_file(cfg.output_dir / "final_model.bin", result.final_global);
    }
    return result;
}

void preflight_output_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (!std::filesystem::is_directory(dir)) throw IoError("output directory unavailable: " + dir.string());
    const auto probe = dir / ".write_probe";
    {
        std::ofstream out(probe);
        if (!out || !(out << "ok")) throw IoError("output directory is not writable: " + dir.string());
    }
    std::filesystem::remove(probe, ec);
}

namespace {

std::string shortest(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

std::string metrics_csv(std::span<const RoundMetrics> records, bool record_wall_clock) {
    std::ostringstream os;
    os << "round,global_test_acc,global_test_loss,mean_client_acc,seconds\n";
    for (const RoundMetrics& r : records) {
        os << r.round << ',' << shortest(r.global_test_acc) << ',' << shortest(r.global_test_loss) << ','
           << shortest(r.mean_client_acc) << ',' << (record_wall_clock ? shortest(r.seconds) : "0") << '\n';
    }
    return os.str();
}

std::string metrics_json(std::span<const RoundMetrics> records) {
    nlohmann::json rounds = nlohmann::json::array();
    for (const RoundMetrics& r : records) {
        rounds.push_back({{"round", r.round},
                          {"global_test_acc", r.global_test_acc},
                          {"global_test_loss", r.global_test_loss},
                          {"mean_client_acc", r.mean_client_acc},
                          {"weights", r.weights},
                          {"similarities", r.similarities},
                          {"clamped", r.clamped},
                          {"seconds", r.seconds}});
    }
    return nlohmann::json{{"rounds", rounds}}.dump(2) + "\n";
}

std::vector<RoundMetrics> parse_metrics_json(const std::string& text) {
    std::vector<RoundMetrics> out;
    try {
        const auto doc = nlohmann::json::parse(text);
        for (const auto& r : doc.at("rounds")) {
            RoundMetrics m;
            m.round = r.at("round").get<std::size_t>();
            m.global_test_acc = r.at("global_test_acc").get<double>();
            m.global_test_loss = r.at("global_test_loss").get<double>();
            m.mean_client_acc = r.at("mean_client_acc").get<double>();
            m.weights = r.at("weights").get<std::vector<double>>();
            m.similarities = r.at("similarities").get<std::vector<double>>();
            m.clamped = r.at("clamped").get<std::size_t>();
            m.seconds = r.at("seconds").get<double>();
            out.push_back(std::move(m));
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("metrics.json: ") + e.what());
    }
    return out;
}

void emit_metrics(std::span<const RoundMetrics> records, const std::filesystem::path& dir, bool record_wall_clock) {
    write_text(dir / "metrics.csv", metrics_csv(records, record_wall_clock));
    write_text(dir / "metrics.json", metrics_json(records));
}

void write_model_file(const std::filesystem::path& file, const Model& model) {
    const auto params = model.parameters();
    const auto names = model.parameter_names();
    std::ostringstream header;
    header << "fedsiam-model 1\n" << "tensors " << params.size() << '\n';
    std::size_t total = 0;
    for (std::size_t i = 0; i < params.size(); ++i) {
        header << names[i] << ' ';
        const auto& shape = params[i].shape();
        for (std::size_t d = 0; d < shape.size(); ++d) header << (d ? "x" : "") << shape[d];
        header << '\n';
        total += params[i].numel();
    }
    header << "values " << total << '\n';

    std::ofstream out(file, std::ios::binary);
    if (!out) throw IoError("cannot write " + file.string());
    out << header.str();
    for (const auto& p : params) {
        for (double v : p.data()) {
            auto bits = std::bit_cast<std::uint64_t>(v);
            unsigned char bytes[8];
            for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
            out.write(reinterpret_cast<const char*>(bytes), 8);
        }
    }
    if (!out) throw IoError("write failed for " + file.string());
}

ModelFile read_model_file(const std::filesystem::path& file) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw IngestionError("cannot open model file " + file.string());
    auto expect_line = [&](std::string& line) {
        if (!std::getline(in, line)) throw FormatError(file.string() + ": truncated header");
    };
    std::string line;
    expect_line(line);
    if (line != "fedsiam-model 1") throw FormatError(file.string() + ": not a fedsiam model file");
    expect_line(line);
    std::size_t count = 0;
    if (std::sscanf(line.c_str(), "tensors %zu", &count) != 1) throw FormatError(file.string() + ": bad tensor count");
    ModelFile mf;
    std::size_t total = 0;
    for (std::size_t i = 0; i < count; ++i) {
        expect_line(line);
        const auto space = line.rfind(' ');
        if (space == std::string::npos) throw FormatError(file.string() + ": bad manifest line '" + line + "'");
        mf.names.push_back(line.substr(0, space));
        ad::Shape shape;
        std::stringstream dims(line.substr(space + 1));
        std::string dim;
        while (std::getline(dims, dim, 'x')) shape.push_back(std::stoul(dim));
        total += ad::shape_numel(shape);
        mf.shapes.push_back(std::move(shape));
    }
    expect_line(line);
    std::size_t declared = 0;
    if (std::sscanf(line.c_str(), "values %zu", &declared) != 1 || declared != total) {
        throw FormatError(file.string() + ": value count does not match the manifest");
    }
    mf.values.resize(total);
    for (std::size_t i = 0; i < total; ++i) {
        unsigned char bytes[8];
        if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
            throw FormatError(file.string() + ": truncated payload at value " + std::to_string(i));
        }
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        mf.values[i] = std::bit_cast<double>(bits);
    }
    return mf;
}

}  // namespace fedsiam
