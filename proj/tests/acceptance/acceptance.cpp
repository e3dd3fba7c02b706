// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only N] [--work DIR]

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "../support.hpp"
#include "CLI11.hpp"
#include "fedsiam/aggregation.hpp"
#include "fedsiam/config.hpp"
#include "fedsiam/data.hpp"
#include "fedsiam/federation.hpp"
#include "fedsiam/local_training.hpp"

using namespace fedsiam;
using namespace fedsiam::testing;
using ad::Mode;
using ad::Tensor;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = true;
    std::vector<std::string> notes;

    void require(bool ok, const std::string& what) {
        if (!ok) pass = false;
        notes.push_back(std::string(ok ? "ok    " : "FAILED") + "  " + what);
    }
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

double median(std::vector<double> v) {
    std::ranges::sort(v);
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---------------------------------------------------------------------------------------------
// 1. Gradient suite

constexpr int kGradientInstances = 20;
constexpr double kGradientTolerance = 1e-5;

struct Pair {
    Model a;
    Model b;
};

Pair random_pair(Rng& rng, std::uint64_t seed) {
    Pair p{Model::init(small_encoder(), seed), Model::init(small_encoder(), seed + 1)};
    randomize(p.a, rng);
    randomize(p.b, rng);
    return p;
}

Outcome gradient_suite() {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    Rng rng(1001);
    std::vector<std::pair<std::string, std::function<double(int)>>> ops;

    ops.emplace_back("matmul", [&](int) {
        const std::size_t m = 1 + rng.below(5), k = 1 + rng.below(5), n = 1 + rng.below(5);
        auto a = random_tensor({m, k}, rng);
        auto b = random_tensor({k, n}, rng);
        auto w = random_tensor({m, n}, rng, false);
        return gradient_check([&] { return ad::sum(ad::softplus(ad::add(ad::matmul(a, b), w))); }, {a, b});
    });
    ops.emplace_back("relu", [&](int) {
        auto x = random_tensor_off_zero({1 + rng.below(6), 1 + rng.below(6)}, rng);
        auto w = random_tensor(x.shape(), rng, false, 0.5, 2.0);
        return gradient_check([&] { return ad::sum(ad::softplus(ad::add(ad::relu(x), w))); }, {x});
    });
    ops.emplace_back("batch_norm", [&](int i) {
        const std::size_t b = 2 + rng.below(6), d = 1 + rng.below(5);
        auto x = random_tensor({b, d}, rng);
        auto gamma = random_tensor({d}, rng, true, 0.5, 1.5);
        auto beta = random_tensor({d}, rng);
        auto proj = random_tensor({b, d}, rng, false);
        ad::BatchNormStats stats(d);
        const Mode mode = i % 4 == 3 ? Mode::Eval : Mode::Train;
        return gradient_check(
            [&] { return ad::sum(ad::softplus(ad::add(ad::batch_norm(x, gamma, beta, mode, stats), proj))); },
            {x, gamma, beta});
    });
    ops.emplace_back("softmax_cross_entropy", [&](int) {
        const std::size_t b = 1 + rng.below(8), c = 2 + rng.below(8);
        auto logits = random_tensor({b, c}, rng, true, -3.0, 3.0);
        std::vector<int> y;
        for (std::size_t i = 0; i < b; ++i) y.push_back(static_cast<int>(rng.below(c)));
        return gradient_check([&] { return ad::softmax_cross_entropy(logits, y); }, {logits});
    });
    ops.emplace_back("cosine_similarity", [&](int) {
        const std::size_t b = 1 + rng.below(5), d = 2 + rng.below(8);
        auto a = random_tensor({b, d}, rng);
        auto c = random_tensor({b, d}, rng);
        return gradient_check([&] { return ad::cosine_similarity(a, c); }, {a, c});
    });
    ops.emplace_back("loss_hist", [&](int i) {
        Pair p = random_pair(rng, 2000 + 2 * static_cast<std::uint64_t>(i));
        auto x = random_tensor({6, 6}, rng, false);
        return gradient_check([&] { return loss_hist(p.a, p.b, x, Mode::Train); }, p.a.parameters());
    });
    ops.emplace_back("loss_stop", [&](int i) {
        Pair p = random_pair(rng, 3000 + 2 * static_cast<std::uint64_t>(i));
        auto x = random_tensor({6, 6}, rng, false);
        const Tensor z_a = forward_repr(p.a, x, Mode::Train).clone(false);
        const Tensor z_b = forward_repr(p.b, x, Mode::Train).clone(false);
        auto leaves = p.a.parameters();
        for (const Tensor& t : p.b.parameters()) leaves.push_back(t);
        for (Tensor t : leaves) t.zero_grad();
        loss_stop(p.a, p.b, x, Mode::Train, Mode::Train).backward();
        const auto analytic = analytic_gradient(leaves);
        const auto numeric = numeric_gradient(
            [&] {
                const Tensor pa = forward_pred(p.a, forward_repr(p.a, x, Mode::Train), Mode::Train);
                const Tensor pb = forward_pred(p.b, forward_repr(p.b, x, Mode::Train), Mode::Train);
                return stop_term({z_a, pa}, {z_b, pb}).item();
            },
            leaves);
        return relative_error(analytic, numeric);
    });
    ops.emplace_back("fedprox proximal term", [&](int i) {
        Pair p = random_pair(rng, 4000 + 2 * static_cast<std::uint64_t>(i));
        const double mu = rng.uniform(0.01, 2.0);
        return gradient_check([&] { return proximal_term(p.a, p.b, mu); }, p.a.parameters());
    });
    ops.emplace_back("moon contrastive", [&](int) {
        const std::size_t b = 1 + rng.below(5), d = 2 + rng.below(8);
        auto z = random_tensor({b, d}, rng);
        auto glob = random_tensor({b, d}, rng, false);
        auto prev = random_tensor({b, d}, rng, false);
        const double tau = rng.uniform(0.1, 1.0);
        return gradient_check([&] { return moon_contrastive(z, glob, prev, tau); }, {z});
    });

    for (auto& [name, check] : ops) {
        double worst = 0.0;
        for (int i = 0; i < kGradientInstances; ++i) worst = std::max(worst, check(i));
        out.require(worst < kGradientTolerance,
                    fmt("%-22s worst rel-err %.2e over %d instances (< %.0e)", name.c_str(), worst, kGradientInstances,
                        kGradientTolerance));
    }
    const double elapsed = seconds_since(start);
    out.require(elapsed < 60.0, fmt("runtime %.1fs (< 60s)", elapsed));
    return out;
}

// ---------------------------------------------------------------------------------------------
// 2. Stop-gradient isolation

constexpr double kStoppedTolerance = 1e-8;

Outcome stop_gradient_isolation() {
    Outcome out;
    Rng rng(2002);
    double worst_fd = 0.0, worst_analytic = 0.0, smallest_literal = std::numeric_limits<double>::infinity();
    for (int trial = 0; trial < 5; ++trial) {
        Pair p = random_pair(rng, 5000 + 2 * static_cast<std::uint64_t>(trial));
        Model& local = p.a;
        Model& copy = p.b;
        auto x = random_tensor({6, 6}, rng, false);

        // loss_stop, term by term: each term's stopped branch is the other model's representation.
        struct Term {
            Model* live;
            Model* stopped;
        };
        for (const Term& term : {Term{&copy, &local}, Term{&local, &copy}}) {
            const Tensor z_stopped = forward_repr(*term.stopped, x, Mode::Train).clone(false);
            auto value = [&](const Tensor& z_ref) {
                const Tensor p_live = forward_pred(*term.live, forward_repr(*term.live, x, Mode::Train), Mode::Train);
                return ad::scale(ad::cosine_similarity(p_live, ad::detach(z_ref)), -0.5);
            };
            const auto stopped_params = term.stopped->parameters();
            for (Tensor t : stopped_params) t.zero_grad();
            value(forward_repr(*term.stopped, x, Mode::Train)).backward();
            worst_analytic = std::max(worst_analytic, max_abs(analytic_gradient(stopped_params)));
            const auto fd = numeric_gradient([&] { return value(z_stopped).item(); }, stopped_params);
            worst_fd = std::max(worst_fd, max_abs(fd));
            // Without the stop the same parameters do move the value.
            const auto literal = numeric_gradient(
                [&] { return value(forward_repr(*term.stopped, x, Mode::Train)).item(); }, stopped_params);
            smallest_literal = std::min(smallest_literal, max_abs(literal));
        }

        // loss_hist: the history model is the stopped branch.
        Model history = copy.clone();
        history.set_trainable(true);
        const Tensor z_hist = forward(static_cast<const Model&>(history), x).z.clone(false);
        const auto hist_params = history.parameters();
        for (Tensor t : hist_params) t.zero_grad();
        loss_hist(local, history, x, Mode::Train).backward();
        worst_analytic = std::max(worst_analytic, max_abs(analytic_gradient(hist_params)));
        const auto fd = numeric_gradient([&] { return hist_term(forward_repr(local, x, Mode::Train), z_hist).item(); },
                                         hist_params);
        worst_fd = std::max(worst_fd, max_abs(fd));
        const auto literal = numeric_gradient([&] { return loss_hist(local, history, x, Mode::Train).item(); },
                                              hist_params);
        smallest_literal = std::min(smallest_literal, max_abs(literal));
    }
    out.require(worst_fd <= kStoppedTolerance,
                fmt("finite-difference gradient on stopped branches: max |g| = %.2e (<= 1e-8)", worst_fd));
    out.require(worst_analytic <= kStoppedTolerance,
                fmt("analytic gradient on stopped branches: max |g| = %.2e (<= 1e-8)", worst_analytic));
    out.notes.push_back(fmt("info    without stop-gradient the same parameters have |g| >= %.2e", smallest_literal));
    return out;
}

// ---------------------------------------------------------------------------------------------
// 3. Reduction equivalence

Outcome reduction_equivalence() {
    Outcome out;
    FederationConfig cfg;
    cfg.blobs = {10, 60, 32, 1.0};
    cfg.clients = 3;
    cfg.rounds = 3;
    cfg.local_epochs = 2;
    cfg.seed = 3;
    const Experiment ex = prepare_experiment(cfg);

    using Trajectory = std::vector<std::vector<double>>;
    auto trajectory = [&](Strategy s, GlobalCopyUpdate u) {
        FederationConfig c = cfg;
        c.strategy = s;
        c.mu = 0.0;
        c.global_copy_update = u;
        const StrategyConfig scfg = c.strategy_config();
        std::vector<ClientState> clients;
        std::vector<double> counts;
        for (std::size_t k = 0; k < c.clients; ++k) {
            clients.emplace_back(k, ex.splits[k].train, ex.initial_global);
            counts.push_back(static_cast<double>(ex.splits[k].train.size()));
        }
        Trajectory t;
        Model global = ex.initial_global.clone();
        for (std::size_t r = 0; r < c.rounds; ++r) {
            std::vector<Model> locals;
            for (auto& client : clients) {
                locals.push_back(local_round(client, global, scfg, ex.train, {c.seed, r}));
                t.push_back(flatten(locals.back()));
            }
            RoundMetrics m;
            global = aggregate_round(locals, counts, AggregationMode::Weighted, m);
            t.push_back(flatten(global));
        }
        return t;
    };

    const Trajectory reference = trajectory(Strategy::FedAvg, GlobalCopyUpdate::Off);
    struct Case {
        const char* name;
        Strategy strategy;
        GlobalCopyUpdate update;
    };
    for (const Case& c : {Case{"fedsiam_da mu=0 global_copy_update=off", Strategy::FedSiamDA, GlobalCopyUpdate::Off},
                          Case{"fedprox mu=0", Strategy::FedProx, GlobalCopyUpdate::Off},
                          Case{"moon mu=0", Strategy::Moon, GlobalCopyUpdate::Off}}) {
        const bool same = trajectory(c.strategy, c.update) == reference;
        out.require(same, fmt("%-40s bitwise equal to fedavg (3 rounds, K=3, locals and globals)", c.name));
    }
    return out;
}

// ---------------------------------------------------------------------------------------------
// 4. Aggregation oracles

std::vector<double> brute_force_xi(std::span<const Model> models, const Model& reference) {
    const auto r = flatten(reference);
    std::vector<double> s;
    for (const Model& m : models) {
        const auto w = flatten(m);
        double dot = 0, nw = 0, nr = 0;
        for (std::size_t i = 0; i < w.size(); ++i) {
            dot += w[i] * r[i];
            nw += w[i] * w[i];
            nr += r[i] * r[i];
        }
        s.push_back(std::max(dot / (std::sqrt(nw) * std::sqrt(nr)), kSimilarityFloor));
    }
    const double total = std::accumulate(s.begin(), s.end(), 0.0);
    for (double& x : s) x /= total;
    return s;
}

Outcome aggregation_oracles() {
    Outcome out;
    Rng rng(4004);
    const EncoderConfig enc{};
    double worst_sum = 0.0, worst_oracle = 0.0;
    bool bounded = true, uniform_exact = true, identity_exact = true;
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t k = 2 + rng.below(8);
        std::vector<Model> models;
        for (std::size_t i = 0; i < k; ++i) {
            Model m = Model::init(enc, 100 * static_cast<std::uint64_t>(trial) + i);
            randomize(m, rng, -0.5 + 0.05 * static_cast<double>(i), 1.0);
            models.push_back(m);
        }
        const auto report = dual_aggregate(models);
        worst_sum = std::max(worst_sum, std::abs(std::accumulate(report.weights.begin(), report.weights.end(), 0.0) - 1.0));
        const auto oracle = brute_force_xi(models, report.first_global);
        for (std::size_t i = 0; i < k; ++i) worst_oracle = std::max(worst_oracle, std::abs(report.weights[i] - oracle[i]));

        std::vector<std::vector<double>> flats;
        for (const Model& m : models) flats.push_back(flatten(m));
        const auto wf = flatten(report.final_global);
        for (std::size_t j = 0; j < wf.size(); ++j) {
            double lo = flats[0][j], hi = flats[0][j];
            for (const auto& f : flats) {
                lo = std::min(lo, f[j]);
                hi = std::max(hi, f[j]);
            }
            if (wf[j] < lo || wf[j] > hi) bounded = false;
        }

        std::vector<Model> same;
        for (std::size_t i = 0; i < k; ++i) same.push_back(models[0].clone());
        const auto identical = dual_aggregate(same);
        for (double x : identical.weights) uniform_exact &= x == 1.0 / static_cast<double>(k);
        identity_exact &= flatten(identical.final_global) == flats[0];
    }
    out.require(worst_sum <= 1e-12, fmt("|sum(xi) - 1| max %.2e over 20 random sets (<= 1e-12)", worst_sum));
    out.require(uniform_exact, "identical clients: xi == 1/K exactly");
    out.require(identity_exact, "identical clients: dual_aggregate returns the input model exactly");
    out.require(worst_oracle <= 1e-12, fmt("xi vs brute-force dot/norm oracle: max |diff| %.2e (<= 1e-12)", worst_oracle));
    out.require(bounded, "final global inside coordinatewise [min, max] of the locals");
    return out;
}

// ---------------------------------------------------------------------------------------------
// 5. Dirichlet partitioner

double mean_max_share(const Partition& p, std::span<const int> labels, std::size_t classes) {
    const auto hist = class_histograms(p, labels, classes);
    double total = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
        std::size_t n = 0, best = 0;
        for (const auto& h : hist) {
            n += h[c];
            best = std::max(best, h[c]);
        }
        total += static_cast<double>(best) / static_cast<double>(n);
    }
    return total / static_cast<double>(classes);
}

Outcome dirichlet_partitioner() {
    Outcome out;
    const Dataset ds = synth_blobs({10, 200, 2, 1.0}, 0);

    Rng rng(5005);
    int covers = 0;
    for (int draw = 0; draw < 100; ++draw) {
        const std::size_t k = 2 + rng.below(19);
        const double beta = std::exp(rng.uniform(std::log(0.05), std::log(100.0)));
        const auto p = dirichlet_partition(ds.labels, k, beta, rng.below(1ull << 40));
        std::vector<int> seen(ds.size(), 0);
        bool ok = p.clients.size() == k;
        for (const auto& c : p.clients) {
            for (std::size_t i : c) ok &= i < ds.size() && seen[i]++ == 0;
        }
        ok &= std::ranges::all_of(seen, [](int s) { return s == 1; });
        covers += ok;
    }
    out.require(covers == 100, fmt("disjoint cover on %d / 100 random draws", covers));

    const auto flat = dirichlet_partition(ds.labels, 5, 1e6, 1);
    const auto hist = class_histograms(flat, ds.labels, 10);
    double worst = 0.0;
    for (std::size_t k = 0; k < 5; ++k) {
        for (std::size_t c = 0; c < 10; ++c) {
            const double share = static_cast<double>(hist[k][c]) / static_cast<double>(flat.clients[k].size());
            worst = std::max(worst, std::abs(share - 0.1) / 0.1);
        }
    }
    out.require(worst <= 0.05, fmt("beta=1e6, K=5: max relative deviation from uniform %.2f%% (<= 5%%)", 100.0 * worst));

    double total = 0.0;
    for (std::uint64_t seed = 0; seed < 50; ++seed) {
        total += mean_max_share(dirichlet_partition(ds.labels, 10, 0.1, seed), ds.labels, 10);
    }
    out.require(total / 50.0 > 0.5, fmt("beta=0.1, K=10: mean max-client share %.3f over 50 seeds (> 0.5)", total / 50.0));
    return out;
}

// ---------------------------------------------------------------------------------------------
// 6 and 8. Desk-scale federation and determinism

struct DeskRun {
    std::vector<RoundMetrics> rounds;
    std::vector<double> final_global;
    fs::path dir;
};

DeskRun run_desk(const FederationConfig& base, Strategy s, std::uint64_t seed, const fs::path& dir,
                 std::size_t threads = 1) {
    FederationConfig cfg = base;
    cfg.strategy = s;
    cfg.seed = seed;
    cfg.output_dir = dir;
    cfg.threads = threads;
    const auto result = run_federation(cfg);
    return {result.rounds, flatten(result.final_global), dir};
}

double loss_volatility(const std::vector<RoundMetrics>& rounds) {
    std::vector<double> diffs;
    for (std::size_t i = 1; i < rounds.size(); ++i) diffs.push_back(rounds[i].global_test_loss - rounds[i - 1].global_test_loss);
    const double mean = std::accumulate(diffs.begin(), diffs.end(), 0.0) / static_cast<double>(diffs.size());
    double var = 0.0;
    for (double d : diffs) var += (d - mean) * (d - mean);
    return std::sqrt(var / static_cast<double>(diffs.size()));
}

struct DeskState {
    FederationConfig cfg;
    fs::path work;
    std::vector<DeskRun> fedsiam;
    std::vector<DeskRun> fedavg;
};

Outcome desk_federation(DeskState& desk) {
    Outcome out;
    const auto start = std::chrono::steady_clock::now();
    std::vector<double> acc_siam, acc_avg, vol_siam, vol_avg;
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        desk.fedsiam.push_back(
            run_desk(desk.cfg, Strategy::FedSiamDA, seed, desk.work / ("fedsiam_da_seed" + std::to_string(seed))));
        desk.fedavg.push_back(
            run_desk(desk.cfg, Strategy::FedAvg, seed, desk.work / ("fedavg_seed" + std::to_string(seed))));
        acc_siam.push_back(desk.fedsiam.back().rounds.back().global_test_acc);
        acc_avg.push_back(desk.fedavg.back().rounds.back().global_test_acc);
        vol_siam.push_back(loss_volatility(desk.fedsiam.back().rounds));
        vol_avg.push_back(loss_volatility(desk.fedavg.back().rounds));
        out.notes.push_back(fmt("info    seed %llu: acc fedsiam_da %.4f fedavg %.4f | loss-diff std fedsiam_da %.4f fedavg %.4f",
                                static_cast<unsigned long long>(seed), acc_siam.back(), acc_avg.back(), vol_siam.back(),
                                vol_avg.back()));
    }
    const double elapsed = seconds_since(start);
    out.require(median(acc_siam) >= median(acc_avg),
                fmt("median final test accuracy fedsiam_da %.4f >= fedavg %.4f", median(acc_siam), median(acc_avg)));
    out.require(median(vol_siam) < median(vol_avg),
                fmt("median std of successive global-loss differences fedsiam_da %.4f < fedavg %.4f", median(vol_siam),
                    median(vol_avg)));
    out.require(elapsed < 600.0, fmt("runtime %.0fs for 10 runs (< 600s)", elapsed));
    return out;
}

Outcome determinism(DeskState& desk) {
    Outcome out;
    if (desk.fedsiam.empty()) {
        desk.fedsiam.push_back(run_desk(desk.cfg, Strategy::FedSiamDA, 0, desk.work / "fedsiam_da_seed0"));
    }
    const DeskRun& first = desk.fedsiam.front();
    const DeskRun again = run_desk(desk.cfg, Strategy::FedSiamDA, 0, desk.work / "fedsiam_da_seed0_rerun");
    const bool csv_same = slurp(first.dir / "metrics.csv") == slurp(again.dir / "metrics.csv");
    out.require(csv_same, "two runs of the desk config: metrics.csv byte-identical");
    const DeskRun parallel = run_desk(desk.cfg, Strategy::FedSiamDA, 0, desk.work / "fedsiam_da_seed0_threads4", 4);
    out.require(parallel.final_global == first.final_global,
                "serial vs 4 worker threads: final global parameters identical");
    return out;
}

// ---------------------------------------------------------------------------------------------
// 7. Adversarial alignment

Outcome adversarial_alignment(const FederationConfig& base) {
    Outcome out;
    int aligned = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        FederationConfig cfg = base;
        cfg.seed = seed;
        cfg.strategy = Strategy::FedSiamDA;
        const Experiment ex = prepare_experiment(cfg);
        const std::size_t client = seed % cfg.clients;
        const Batch eval = gather(ex.train, ex.splits[client].holdout.size() >= 2
                                                ? std::span<const std::size_t>(ex.splits[client].holdout)
                                                : std::span<const std::size_t>(ex.splits[client].train));

        ClientState state(client, ex.splits[client].train, ex.initial_global);
        Model start_local = ex.initial_global.clone();
        Model start_copy = ex.initial_global.clone();
        const double before = loss_stop(start_local, start_copy, eval.x, Mode::Eval, Mode::Eval).item();
        Model local = local_round(state, ex.initial_global, cfg.strategy_config(), ex.train, {seed, 0});
        const double after = loss_stop(local, *state.global_copy, eval.x, Mode::Eval, Mode::Eval).item();
        aligned += after <= before;
        out.notes.push_back(fmt("info    seed %llu client %zu: loss_stop %.4f -> %.4f",
                                static_cast<unsigned long long>(seed), client, before, after));
    }
    out.require(aligned >= 7, fmt("loss_stop at round end <= round start in %d / 10 trials (>= 7)", aligned));
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance suite"};
    int only = 0;
    std::string work = (fs::temp_directory_path() / "fedsiam_acceptance").string();
    std::string config = (fs::path(FEDSIAM_SOURCE_DIR) / "configs" / "desk.cfg").string();
    app.add_option("--only", only, "Run a single criterion (1-8)");
    app.add_option("--work", work, "Scratch directory for run outputs");
    app.add_option("--config", config, "Desk-scale config");
    CLI11_PARSE(app, argc, argv);

    DeskState desk;
    desk.cfg = load_config(config);
    desk.work = work;
    fs::remove_all(desk.work);
    fs::create_directories(desk.work);

    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"stop-gradient isolation", stop_gradient_isolation},
        {"reduction equivalence", reduction_equivalence},
        {"aggregation oracles", aggregation_oracles},
        {"dirichlet partitioner", dirichlet_partitioner},
        {"desk-scale federation", [&] { return desk_federation(desk); }},
        {"adversarial alignment", [&] { return adversarial_alignment(desk.cfg); }},
        {"determinism", [&] { return determinism(desk); }},
    };

    int failed = 0;
    std::vector<std::string> summary;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        const int id = static_cast<int>(i) + 1;
        if (only != 0 && only != id) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o.require(false, std::string("exception: ") + e.what());
        }
        for (const auto& note : o.notes) std::printf("      %s\n", note.c_str());
        const std::string line = fmt("%s  criterion %d: %s (%.1fs)", o.pass ? "PASS" : "FAIL", id,
                                     criteria[i].first.c_str(), seconds_since(start));
        std::printf("%s\n", line.c_str());
        std::fflush(stdout);
        summary.push_back(line);
        failed += !o.pass;
    }
    std::printf("\nsummary\n");
    for (const auto& s : summary) std::printf("%s\n", s.c_str());
    std::printf("%d of %zu criteria failed\n", failed, summary.size());
    return failed ? 1 : 0;
}
