#pragma once

#include "mtlinear/common.hpp"
#include "mtlinear/data.hpp"
#include "mtlinear/diagnostics.hpp"
#include "mtlinear/sweep.hpp"
#include "mtlinear/trainer.hpp"

#include <json.hpp>

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <sstream>

namespace mtlinear {

/// Raised for malformed settings; the CLI maps it to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

using Settings = std::map<std::string, std::string>;

namespace detail {

inline std::string strip(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return std::string(s);
}

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = strip(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

inline double parse_double(const std::string& key, std::string_view s) {
    double v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError("invalid number '" + std::string(s) + "' for " + key);
    return v;
}

template <typename T>
T parse_unsigned(const std::string& key, std::string_view s) {
    T v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw ConfigError("invalid non-negative integer '" + std::string(s) + "' for " + key);
    return v;
}

inline bool parse_bool(const std::string& key, const std::string& s) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw ConfigError("invalid boolean '" + s + "' for " + key);
}

inline std::string format_double(double v) { return nlohmann::json(v).dump(); }

} // namespace detail

/// Parses an angle: plain radians ("0.5236"), "pi", "pi/6", "2pi/3", "2*pi/3".
inline double parse_angle(std::string text) {
    text.erase(std::remove_if(text.begin(), text.end(), [](unsigned char c) { return std::isspace(c); }), text.end());
    std::transform(text.begin(), text.end(), text.begin(), [](unsigned char c) { return std::tolower(c); });
    const auto pos = text.find("pi");
    if (pos == std::string::npos) return detail::parse_double("alpha_bar", text);
    std::string coef = text.substr(0, pos);
    if (!coef.empty() && coef.back() == '*') coef.pop_back();
    double value = std::numbers::pi * (coef.empty() ? 1.0 : detail::parse_double("alpha_bar", coef));
    std::string rest = text.substr(pos + 2);
    if (!rest.empty()) {
        if (rest.front() != '/') throw ConfigError("invalid angle '" + text + "'");
        const double denom = detail::parse_double("alpha_bar", rest.substr(1));
        if (denom == 0) throw ConfigError("invalid angle '" + text + "'");
        value /= denom;
    }
    return value;
}

/// `key = value` lines; `#` starts a comment.
inline Settings parse_settings(std::istream& in, const std::string& origin = "config") {
    Settings s;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        line = detail::strip(line);
        if (line.empty()) continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError(origin + ":" + std::to_string(n) + ": expected 'key = value'");
        s[detail::strip(line.substr(0, eq))] = detail::strip(line.substr(eq + 1));
    }
    return s;
}

inline Settings load_settings(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
    return parse_settings(in, path.string());
}

struct RunConfig {
    std::string dataset;
    std::filesystem::path dataset_path;
    std::string date_column = "date";
    TrainConfig train;
    std::vector<std::size_t> horizons;
    std::vector<double> alpha_grid;
    std::vector<double> a_grid;
    bool grid = false;
    std::vector<std::uint64_t> seeds{2021, 2022, 2023};
    std::size_t jobs = 1;
    std::filesystem::path out = "mtlinear_out";
    bool diagnostics = false;
    ConflictMode diagnostics_mode = ConflictMode::per_step;
    bool normalize = true;
    SplitOptions split;

    std::string dataset_name() const { return dataset_path.stem().string(); }

    SweepConfig sweep() const {
        SweepConfig s;
        s.dataset = dataset_name();
        s.base = train;
        s.horizons = horizons;
        s.seeds = seeds;
        s.grid = grid;
        s.alpha_grid = alpha_grid;
        s.a_grid = a_grid;
        s.jobs = jobs;
        return s;
    }
};

inline bool is_ili(const std::filesystem::path& p) {
    std::string stem = p.stem().string();
    std::transform(stem.begin(), stem.end(), stem.begin(), [](unsigned char c) { return std::tolower(c); });
    return stem == "ili" || stem.find("illness") != std::string::npos;
}

/// Dataset path lookup: as given, then relative to $MTLINEAR_DATA_DIR.
inline std::filesystem::path resolve_dataset(const std::string& name) {
    std::filesystem::path p(name);
    if (std::filesystem::exists(p)) return p;
    if (const char* base = std::getenv("MTLINEAR_DATA_DIR"); base && p.is_relative()) {
        auto q = std::filesystem::path(base) / p;
        if (std::filesystem::exists(q)) return q;
    }
    return p;
}

inline const std::vector<std::string>& known_settings() {
    static const std::vector<std::string> keys{
        "dataset", "date_column", "variant", "lookback", "horizons", "alpha_bar", "a", "grid", "seeds", "jobs",
        "out", "diagnostics", "diagnostics_mode", "normalize", "lr", "batch", "max_epochs", "patience", "optimizer",
        "beta1", "beta2", "adam_eps", "use_bias", "ma_kernel", "penalty_ema", "lr_halving", "split.train_frac",
        "split.val_frac", "split.train_end", "split.val_end", "split.test_end"};
    return keys;
}

/// Typed view of the settings with every default filled in. `grid_default` is the command's
/// default for grid search (on for bench).
inline RunConfig resolve(const Settings& s, bool grid_default = false) {
    for (const auto& [k, v] : s)
        if (std::find(known_settings().begin(), known_settings().end(), k) == known_settings().end())
            throw ConfigError("unknown setting '" + k + "'");
    auto get = [&](const std::string& k) -> const std::string* {
        auto it = s.find(k);
        return it == s.end() ? nullptr : &it->second;
    };
    RunConfig c;
    if (auto v = get("dataset")) c.dataset = *v;
    if (c.dataset.empty()) throw ConfigError("no dataset given (--dataset)");
    c.dataset_path = resolve_dataset(c.dataset);
    if (auto v = get("date_column")) c.date_column = *v;

    TrainConfig& t = c.train;
    try {
        if (auto v = get("variant")) t.variant = parse_variant(*v);
        if (auto v = get("optimizer")) t.optimizer = parse_optimizer(*v);
        if (auto v = get("diagnostics_mode")) c.diagnostics_mode = parse_conflict_mode(*v);
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }

    const bool ili = is_ili(c.dataset_path);
    t.lookback = ili ? 36 : 96;
    c.horizons = ili ? std::vector<std::size_t>{24, 36, 48, 60} : std::vector<std::size_t>{96, 192, 336, 720};
    if (auto v = get("lookback")) t.lookback = detail::parse_unsigned<std::size_t>("lookback", *v);
    if (auto v = get("horizons")) {
        c.horizons.clear();
        for (const auto& h : detail::split_list(*v)) c.horizons.push_back(detail::parse_unsigned<std::size_t>("horizons", h));
        if (c.horizons.empty()) throw ConfigError("horizons list is empty");
    }
    t.horizon = c.horizons.front();

    c.grid = grid_default;
    if (auto v = get("grid")) c.grid = detail::parse_bool("grid", *v);
    c.alpha_grid = c.grid ? default_alpha_grid() : std::vector<double>{std::numbers::pi / 4};
    c.a_grid = c.grid ? default_a_grid() : std::vector<double>{1};
    if (auto v = get("alpha_bar")) {
        c.alpha_grid.clear();
        for (const auto& x : detail::split_list(*v)) c.alpha_grid.push_back(parse_angle(x));
    }
    if (auto v = get("a")) {
        c.a_grid.clear();
        for (const auto& x : detail::split_list(*v)) c.a_grid.push_back(detail::parse_double("a", x));
    }
    if (c.alpha_grid.empty() || c.a_grid.empty()) throw ConfigError("alpha_bar and a grids must be non-empty");
    for (double x : c.alpha_grid)
        if (!(x >= 0 && x <= std::numbers::pi / 2 + 1e-12)) throw ConfigError("alpha_bar must lie in [0, pi/2]");
    for (double x : c.a_grid)
        if (!(x >= 0)) throw ConfigError("penalty exponent a must be non-negative");
    t.alpha_bar = c.alpha_grid.front();
    t.a = c.a_grid.front();

    if (auto v = get("seeds")) {
        c.seeds.clear();
        for (const auto& x : detail::split_list(*v)) c.seeds.push_back(detail::parse_unsigned<std::uint64_t>("seeds", x));
        if (c.seeds.empty()) throw ConfigError("seeds list is empty");
    }
    t.seed = c.seeds.front();
    c.jobs = default_jobs();
    if (auto v = get("jobs")) c.jobs = std::max<std::size_t>(1, detail::parse_unsigned<std::size_t>("jobs", *v));
    t.jobs = c.jobs;
    if (auto v = get("out")) c.out = *v;
    if (auto v = get("diagnostics")) c.diagnostics = detail::parse_bool("diagnostics", *v);
    if (auto v = get("normalize")) c.normalize = detail::parse_bool("normalize", *v);
    if (auto v = get("lr")) t.lr = detail::parse_double("lr", *v);
    if (auto v = get("batch")) t.batch = detail::parse_unsigned<std::size_t>("batch", *v);
    if (auto v = get("max_epochs")) t.max_epochs = detail::parse_unsigned<std::size_t>("max_epochs", *v);
    if (auto v = get("patience")) t.patience = detail::parse_unsigned<std::size_t>("patience", *v);
    if (auto v = get("beta1")) t.beta1 = detail::parse_double("beta1", *v);
    if (auto v = get("beta2")) t.beta2 = detail::parse_double("beta2", *v);
    if (auto v = get("adam_eps")) t.adam_eps = detail::parse_double("adam_eps", *v);
    if (auto v = get("use_bias")) t.use_bias = detail::parse_bool("use_bias", *v);
    if (auto v = get("ma_kernel")) t.ma_kernel = detail::parse_unsigned<std::size_t>("ma_kernel", *v);
    if (auto v = get("penalty_ema")) t.penalty_ema = detail::parse_double("penalty_ema", *v);
    if (auto v = get("lr_halving")) t.lr_halving = detail::parse_bool("lr_halving", *v);
    if (auto v = get("split.train_frac")) c.split.train_frac = detail::parse_double("split.train_frac", *v);
    if (auto v = get("split.val_frac")) c.split.val_frac = detail::parse_double("split.val_frac", *v);
    const auto* te = get("split.train_end");
    const auto* ve = get("split.val_end");
    const auto* xe = get("split.test_end");
    if (te || ve || xe) {
        if (!(te && ve && xe)) throw ConfigError("explicit split needs split.train_end, split.val_end and split.test_end");
        c.split.rows = SplitBounds{detail::parse_unsigned<std::size_t>("split.train_end", *te),
                                   detail::parse_unsigned<std::size_t>("split.val_end", *ve),
                                   detail::parse_unsigned<std::size_t>("split.test_end", *xe)};
    }
    try {
        t.validate();
    } catch (const Error& e) {
        throw ConfigError(e.what());
    }
    return c;
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F&& fmt) {
    std::string out;
    for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + fmt(v[i]);
    return out;
}

/// Every effective setting, in a form `resolve` reads back to the same values.
inline std::string serialize(const RunConfig& c, const std::optional<SplitBounds>& effective_split = std::nullopt) {
    const TrainConfig& t = c.train;
    auto num = [](double v) { return detail::format_double(v); };
    auto str = [](auto v) { return std::to_string(v); };
    std::ostringstream os;
    os << "# resolved settings\n";
    os << "dataset = " << c.dataset << "\n";
    os << "date_column = " << c.date_column << "\n";
    os << "variant = " << to_string(t.variant) << "\n";
    os << "lookback = " << t.lookback << "\n";
    os << "horizons = " << join(c.horizons, str) << "\n";
    os << "alpha_bar = " << join(c.alpha_grid, num) << "\n";
    os << "a = " << join(c.a_grid, num) << "\n";
    os << "grid = " << (c.grid ? "true" : "false") << "\n";
    os << "seeds = " << join(c.seeds, str) << "\n";
    os << "jobs = " << c.jobs << "\n";
    os << "out = " << c.out.string() << "\n";
    os << "diagnostics = " << (c.diagnostics ? "true" : "false") << "\n";
    os << "diagnostics_mode = " << (c.diagnostics_mode == ConflictMode::per_step ? "per_step" : "probe_epoch") << "\n";
    os << "normalize = " << (c.normalize ? "true" : "false") << "\n";
    os << "lr = " << num(t.lr) << "\n";
    os << "batch = " << t.batch << "\n";
    os << "max_epochs = " << t.max_epochs << "\n";
    os << "patience = " << t.patience << "\n";
    os << "optimizer = " << to_string(t.optimizer) << "\n";
    os << "beta1 = " << num(t.beta1) << "\n";
    os << "beta2 = " << num(t.beta2) << "\n";
    os << "adam_eps = " << num(t.adam_eps) << "\n";
    os << "use_bias = " << (t.use_bias ? "true" : "false") << "\n";
    os << "ma_kernel = " << t.ma_kernel << "\n";
    os << "penalty_ema = " << num(t.penalty_ema) << "\n";
    os << "lr_halving = " << (t.lr_halving ? "true" : "false") << "\n";
    if (auto sp = effective_split ? effective_split : c.split.rows) {
        os << "split.train_end = " << sp->train_end << "\n";
        os << "split.val_end = " << sp->val_end << "\n";
        os << "split.test_end = " << sp->test_end << "\n";
    }
    return os.str();
}

} // namespace mtlinear
