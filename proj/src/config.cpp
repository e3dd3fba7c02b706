#include "fedsiam/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "fedsiam/error.hpp"

namespace fedsiam {

std::string_view to_string(AggregationMode m) {
    switch (m) {
        case AggregationMode::Auto: return "auto";
        case AggregationMode::Uniform: return "uniform";
        case AggregationMode::Weighted: return "weighted";
        case AggregationMode::Dual: return "dual";
    }
    return "unknown";
}

AggregationMode parse_aggregation(std::string_view name) {
    if (name == "auto") return AggregationMode::Auto;
    if (name == "uniform") return AggregationMode::Uniform;
    if (name == "weighted") return AggregationMode::Weighted;
    if (name == "dual") return AggregationMode::Dual;
    throw ConfigError("unknown aggregation '" + std::string(name) + "' (expected auto, uniform, weighted, dual)");
}

namespace {

std::string_view trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

template <typename T>
T parse_number(std::string_view key, std::string_view value) {
    T out{};
    const char* end = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(value.data(), end, out);
    if (ec != std::errc() || ptr != end) {
        throw ConfigError("invalid value '" + std::string(value) + "' for " + std::string(key));
    }
    return out;
}

bool parse_bool(std::string_view key, std::string_view value) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError("invalid boolean '" + std::string(value) + "' for " + std::string(key));
}

std::vector<std::size_t> parse_widths(std::string_view key, std::string_view value) {
    std::vector<std::size_t> out;
    while (!value.empty()) {
        const auto comma = value.find(',');
        out.push_back(parse_number<std::size_t>(key, trim(value.substr(0, comma))));
        if (comma == std::string_view::npos) break;
        value.remove_prefix(comma + 1);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

}  // namespace

void FederationConfig::set(std::string_view key, std::string_view value) {
    value = trim(value);
    if (key == "dataset") {
        if (value == "blobs") dataset = DatasetKind::Blobs;
        else if (value == "cifar10") dataset = DatasetKind::Cifar10;
        else throw ConfigError("unknown dataset '" + std::string(value) + "' (expected blobs, cifar10)");
    } else if (key == "cifar10_dir") cifar10_dir = std::string(value);
    else if (key == "blobs_classes") blobs.classes = parse_number<std::size_t>(key, value);
    else if (key == "blobs_per_class") blobs.per_class = parse_number<std::size_t>(key, value);
    else if (key == "blobs_dim") blobs.dim = parse_number<std::size_t>(key, value);
    else if (key == "blobs_spread") blobs.spread = parse_number<double>(key, value);
    else if (key == "blobs_test_per_class") blobs_test_per_class = parse_number<std::size_t>(key, value);
    else if (key == "backbone_hidden") backbone_hidden = parse_widths(key, value);
    else if (key == "projection_dim") projection_dim = parse_number<std::size_t>(key, value);
    else if (key == "clients") clients = parse_number<std::size_t>(key, value);
    else if (key == "rounds") rounds = parse_number<std::size_t>(key, value);
    else if (key == "local_epochs") local_epochs = parse_number<std::size_t>(key, value);
    else if (key == "batch_size") batch_size = parse_number<std::size_t>(key, value);
    else if (key == "lr") lr = parse_number<double>(key, value);
    else if (key == "momentum") momentum = parse_number<double>(key, value);
    else if (key == "weight_decay") weight_decay = parse_number<double>(key, value);
    else if (key == "mu") mu = parse_number<double>(key, value);
    else if (key == "strategy") strategy = parse_strategy(value);
    else if (key == "aggregation") aggregation = parse_aggregation(value);
    else if (key == "beta") beta = parse_number<double>(key, value);
    else if (key == "seed") seed = parse_number<std::uint64_t>(key, value);
    else if (key == "min_samples") min_samples = parse_number<std::size_t>(key, value);
    else if (key == "moon_temperature") moon_temperature = parse_number<double>(key, value);
    else if (key == "global_copy_update") global_copy_update = parse_global_copy_update(value);
    else if (key == "holdout_fraction") holdout_fraction = parse_number<double>(key, value);
    else if (key == "output_dir") output_dir = std::string(value);
    else if (key == "threads") threads = parse_number<std::size_t>(key, value);
    else if (key == "record_wall_clock") record_wall_clock = parse_bool(key, value);
    else throw ConfigError("unknown config key '" + std::string(key) + "'");
}

void FederationConfig::validate() const {
    if (clients < 2) throw ConfigError("clients must be at least 2");
    if (rounds < 1) throw ConfigError("rounds must be at least 1");
    if (local_epochs < 1) throw ConfigError("local_epochs must be at least 1");
    if (batch_size < 2) throw ConfigError("batch_size must be at least 2");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (!(beta > 0.0)) throw ConfigError("beta must be positive");
    if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) throw ConfigError("holdout_fraction must lie in [0, 1)");
    if (threads < 1) throw ConfigError("threads must be at least 1");
    if (dataset == DatasetKind::Cifar10 && cifar10_dir.empty()) throw ConfigError("dataset cifar10 needs cifar10_dir");
    strategy_config().validate();
    const bool cifar = dataset == DatasetKind::Cifar10;
    EncoderConfig enc{cifar ? kCifarPixels : blobs.dim, backbone_hidden, projection_dim, cifar ? 10 : blobs.classes};
    enc.validate();
}

AggregationMode FederationConfig::effective_aggregation() const {
    if (aggregation != AggregationMode::Auto) return aggregation;
    return strategy == Strategy::FedSiamDA ? AggregationMode::Dual : AggregationMode::Weighted;
}

StrategyConfig FederationConfig::strategy_config() const {
    StrategyConfig s;
    s.strategy = strategy;
    s.mu = mu;
    s.moon_temperature = moon_temperature;
    s.local_epochs = local_epochs;
    s.batch_size = batch_size;
    s.sgd = {lr, momentum, weight_decay};
    s.global_copy_update = global_copy_update;
    return s;
}

std::string FederationConfig::resolved() const {
    std::ostringstream os;
    auto line = [&](std::string_view k, const std::string& v) { os << k << " = " << v << '\n'; };
    line("dataset", dataset == DatasetKind::Blobs ? "blobs" : "cifar10");
    line("cifar10_dir", cifar10_dir.string());
    line("blobs_classes", std::to_string(blobs.classes));
    line("blobs_per_class", std::to_string(blobs.per_class));
    line("blobs_dim", std::to_string(blobs.dim));
    line("blobs_spread", format_double(blobs.spread));
    line("blobs_test_per_class", std::to_string(blobs_test_per_class));
    std::string widths;
    for (std::size_t i = 0; i < backbone_hidden.size(); ++i) {
        if (i) widths += ',';
        widths += std::to_string(backbone_hidden[i]);
    }
    line("backbone_hidden", widths);
    line("projection_dim", std::to_string(projection_dim));
    line("clients", std::to_string(clients));
    line("rounds", std::to_string(rounds));
    line("local_epochs", std::to_string(local_epochs));
    line("batch_size", std::to_string(batch_size));
    line("lr", format_double(lr));
    line("momentum", format_double(momentum));
    line("weight_decay", format_double(weight_decay));
    line("mu", format_double(mu));
    line("strategy", std::string(to_string(strategy)));
    line("aggregation", std::string(to_string(aggregation)));
    line("beta", format_double(beta));
    line("seed", std::to_string(seed));
    line("min_samples", std::to_string(min_samples));
    line("moon_temperature", format_double(moon_temperature));
    line("global_copy_update", std::string(to_string(global_copy_update)));
    line("holdout_fraction", format_double(holdout_fraction));
    line("output_dir", output_dir.string());
    line("threads", std::to_string(threads));
    line("record_wall_clock", record_wall_clock ? "true" : "false");
    return os.str();
}

FederationConfig parse_config(std::string_view text, FederationConfig base) {
    std::size_t line_no = 0;
    while (!text.empty()) {
        const auto nl = text.find('\n');
        std::string_view line = text.substr(0, nl);
        text = nl == std::string_view::npos ? std::string_view{} : text.substr(nl + 1);
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) {
            throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        }
        try {
            base.set(trim(line.substr(0, eq)), line.substr(eq + 1));
        } catch (const ConfigError& e) {
            throw ConfigError("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return base;
}

FederationConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot read config file " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

}  // namespace fedsiam
