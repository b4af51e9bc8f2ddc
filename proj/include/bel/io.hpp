#pragma once

// JSON experiment configuration and CSV formatting shared by the tools.

#include "bel/blocking.hpp"
#include "bel/core.hpp"
#include "bel/estimator.hpp"
#include "bel/expansion.hpp"
#include "bel/filters.hpp"
#include "bel/linproc.hpp"

#include <json.hpp>

#include <charconv>
#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace bel {

using Json = nlohmann::ordered_json;

/// 17 significant digits, shortest exponent form; round-trips every double.
[[nodiscard]] inline std::string format_double(double v) {
    char buf[40];
    const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
    return std::string(buf, res.ptr);
}

/// Comma-separated table with a header row.
class CsvWriter {
public:
    explicit CsvWriter(std::vector<std::string> header) : width_(header.size()) { row_strings(header); }

    CsvWriter& row(std::initializer_list<double> values) { return row(std::vector<double>(values)); }

    CsvWriter& row(const std::vector<double>& values) {
        std::vector<std::string> cells;
        cells.reserve(values.size());
        for (double v : values) cells.push_back(format_double(v));
        return row_strings(cells);
    }

    CsvWriter& row_strings(const std::vector<std::string>& cells) {
        if (cells.size() != width_) throw ConfigError("csv: row width differs from header");
        for (std::size_t k = 0; k < cells.size(); ++k) out_ << (k ? "," : "") << cells[k];
        out_ << '\n';
        return *this;
    }

    [[nodiscard]] std::string str() const { return out_.str(); }

private:
    std::size_t width_;
    std::ostringstream out_;
};

// ------------------------------------------------------------------- config

namespace detail {

/// Field access with dotted-path diagnostics and rejection of unknown keys.
class Section {
public:
    Section(const Json& node, std::string path) : node_(node), path_(std::move(path)) {
        if (!node_.is_object()) fail("must be an object");
    }

    [[noreturn]] void fail(const std::string& what) const { throw ConfigError("config field '" + path_ + "': " + what); }

    void allow(std::initializer_list<std::string_view> keys) const {
        for (const auto& [k, v] : node_.items()) {
            bool ok = false;
            for (auto key : keys) ok = ok || k == key;
            if (!ok) throw ConfigError("config field '" + child(k) + "': unknown key");
        }
    }

    [[nodiscard]] bool has(const std::string& key) const { return node_.contains(key) && !node_.at(key).is_null(); }

    [[nodiscard]] std::string child(std::string_view key) const {
        return path_.empty() ? std::string(key) : path_ + "." + std::string(key);
    }

    [[nodiscard]] Section section(const std::string& key) const {
        if (!node_.contains(key)) throw ConfigError("config field '" + child(key) + "': missing section");
        return Section(node_.at(key), child(key));
    }

    [[nodiscard]] std::optional<Section> optional_section(const std::string& key) const {
        if (!has(key)) return std::nullopt;
        return Section(node_.at(key), child(key));
    }

    [[nodiscard]] double number(const std::string& key, std::optional<double> fallback = std::nullopt) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError("config field '" + child(key) + "': missing number");
        }
        const auto& v = node_.at(key);
        if (!v.is_number()) throw ConfigError("config field '" + child(key) + "': expected a number");
        return v.get<double>();
    }

    [[nodiscard]] std::uint64_t integer(const std::string& key, std::optional<std::uint64_t> fallback = std::nullopt) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError("config field '" + child(key) + "': missing integer");
        }
        const auto& v = node_.at(key);
        if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<std::int64_t>() < 0))
            throw ConfigError("config field '" + child(key) + "': expected a non-negative integer");
        return v.get<std::uint64_t>();
    }

    [[nodiscard]] std::string text(const std::string& key, std::optional<std::string> fallback = std::nullopt) const {
        if (!has(key)) {
            if (fallback) return *fallback;
            throw ConfigError("config field '" + child(key) + "': missing string");
        }
        const auto& v = node_.at(key);
        if (!v.is_string()) throw ConfigError("config field '" + child(key) + "': expected a string");
        return v.get<std::string>();
    }

    [[nodiscard]] bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const auto& v = node_.at(key);
        if (!v.is_boolean()) throw ConfigError("config field '" + child(key) + "': expected true or false");
        return v.get<bool>();
    }

    [[nodiscard]] const Json& raw(const std::string& key) const { return node_.at(key); }
    [[nodiscard]] const std::string& path() const noexcept { return path_; }

private:
    const Json& node_;
    std::string path_;
};

/// Re-labels a library ConfigError with the config field it came from.
template <class F>
auto at_field(const Section& s, F&& f) -> decltype(f()) {
    try {
        return f();
    } catch (const ConfigError& e) {
        throw ConfigError("config field '" + s.path() + "': " + e.what());
    }
}

}  // namespace detail

struct RankSettings {
    int max_order = 3;
    std::size_t samples = 1'000'000;
    std::uint64_t seed = 1;
    std::size_t level = kInfinity;
};

struct RateSettings {
    std::optional<double> alpha1;  // defaults to 2 beta - 1
    std::optional<Regime> regime;
    double c = 0.5;
};

struct GenSettings {
    std::size_t n = 1024;
    std::size_t series = 1;
    std::uint64_t seed = 1;
};

/// A parsed configuration file together with the echo of every effective
/// value (defaults included).
struct ToolConfig {
    std::optional<Process> process;
    std::optional<FilterSpec> filter;
    std::optional<ExperimentConfig> experiment;
    RankSettings rank;
    RateSettings rate;
    GenSettings gen;
    Json echo = Json::object();
};

namespace detail {

inline Process parse_process(const Section& s, Json& echo) {
    s.allow({"model", "horizon", "innovations", "unit_variance"});
    const auto horizon = static_cast<std::size_t>(s.integer("horizon", kDefaultHorizon));
    const Section m = s.section("model");
    const std::string kind = m.text("kind");
    echo["horizon"] = horizon;
    auto model = at_field(m, [&]() -> CoefficientModel {
        if (kind == "hyperbolic") {
            m.allow({"kind", "beta", "scale"});
            const double beta = m.number("beta"), scale = m.number("scale", 1.0);
            echo["model"] = {{"kind", kind}, {"beta", beta}, {"scale", scale}};
            return CoefficientModel::hyperbolic(beta, scale, horizon);
        }
        if (kind == "farima") {
            m.allow({"kind", "d"});
            const double d = m.number("d");
            echo["model"] = {{"kind", kind}, {"d", d}};
            return CoefficientModel::farima(d, horizon);
        }
        if (kind == "finite") {
            m.allow({"kind", "taps"});
            if (!m.has("taps") || !m.raw("taps").is_array()) m.fail("finite model needs a 'taps' array");
            std::vector<double> taps;
            for (const auto& v : m.raw("taps")) {
                if (!v.is_number()) m.fail("taps must be numbers");
                taps.push_back(v.get<double>());
            }
            echo["model"] = {{"kind", kind}, {"taps", taps}};
            const std::size_t h = s.has("horizon") ? horizon : taps.size();
            echo["horizon"] = h;
            return CoefficientModel::finite(std::move(taps), h);
        }
        m.fail("kind must be hyperbolic, farima or finite");
    });
    InnovationSpec innov;
    if (auto is = s.optional_section("innovations")) {
        const std::string dist = is->text("dist", "gaussian");
        const int order = static_cast<int>(is->integer("required_moment_order", 8));
        innov = at_field(*is, [&]() -> InnovationSpec {
            if (dist == "gaussian") {
                is->allow({"dist", "sigma", "required_moment_order"});
                const double sigma = is->number("sigma", 1.0);
                echo["innovations"] = {{"dist", dist}, {"sigma", sigma}, {"required_moment_order", order}};
                return InnovationSpec(Gaussian{sigma}, order);
            }
            if (dist == "rademacher") {
                is->allow({"dist", "required_moment_order"});
                echo["innovations"] = {{"dist", dist}, {"required_moment_order", order}};
                return InnovationSpec(Rademacher{}, order);
            }
            if (dist == "uniform") {
                is->allow({"dist", "half_width", "required_moment_order"});
                const double h = is->number("half_width", 1.0);
                echo["innovations"] = {{"dist", dist}, {"half_width", h}, {"required_moment_order", order}};
                return InnovationSpec(CenteredUniform{h}, order);
            }
            is->fail("dist must be gaussian, rademacher or uniform");
        });
    } else {
        echo["innovations"] = {{"dist", "gaussian"}, {"sigma", 1.0}, {"required_moment_order", 8}};
    }
    const bool unit = s.flag("unit_variance", false);
    echo["unit_variance"] = unit;
    Process proc(std::move(model), innov);
    return unit ? at_field(s, [&] { return proc.unit_variance(); }) : proc;
}

inline FilterSpec parse_filter(const Section& s, Json& echo) {
    const std::string kind = s.text("kind");
    return at_field(s, [&]() -> FilterSpec {
        if (kind == "zero_crossing") {
            s.allow({"kind"});
            echo = {{"kind", kind}, {"d", 1}};
            return FilterSpec::zero_crossing();
        }
        if (kind == "lag_product") {
            s.allow({"kind", "d"});
            const auto d = static_cast<std::size_t>(s.integer("d", 1));
            echo = {{"kind", kind}, {"d", d}};
            return FilterSpec::lag_product(d);
        }
        if (kind == "identity") {
            s.allow({"kind"});
            echo = {{"kind", kind}, {"d", 0}};
            return FilterSpec::identity();
        }
        if (kind == "polynomial") {
            s.allow({"kind", "d", "terms"});
            const auto d = static_cast<std::size_t>(s.integer("d"));
            if (!s.has("terms") || !s.raw("terms").is_array()) s.fail("polynomial filter needs a 'terms' array");
            Polynomial poly(d + 1);
            Json terms = Json::array();
            for (const auto& t : s.raw("terms")) {
                if (!t.is_object() || !t.contains("index") || !t.contains("coef") || !t["coef"].is_number() ||
                    !t["index"].is_array())
                    s.fail("each term needs an 'index' array and a numeric 'coef'");
                MultiIndex idx;
                for (const auto& e : t["index"]) {
                    if (!e.is_number_integer()) s.fail("multi-index entries must be integers");
                    idx.push_back(e.get<int>());
                }
                poly.add(idx, t["coef"].get<double>());
                terms.push_back({{"index", idx}, {"coef", t["coef"].get<double>()}});
            }
            echo = {{"kind", kind}, {"d", d}, {"terms", terms}};
            return FilterSpec::polynomial(std::move(poly));
        }
        s.fail("kind must be zero_crossing, lag_product, identity or polynomial");
    });
}

inline ExperimentConfig parse_experiment(const Section& s, const Process& process, const FilterSpec& filter,
                                         Json& echo) {
    s.allow({"p", "n_grid", "replicates", "seed", "sigma2", "tuple_cap", "mean_samples"});
    ExperimentConfig cfg{process, filter, 0, {}, 2000, 12345, {}, {}};
    cfg.p = static_cast<int>(s.integer("p", 0));
    if (!s.has("n_grid") || !s.raw("n_grid").is_array()) s.fail("needs an 'n_grid' array");
    for (const auto& v : s.raw("n_grid")) {
        if (!v.is_number_unsigned()) s.fail("n_grid entries must be positive integers");
        cfg.n_grid.push_back(v.get<std::size_t>());
    }
    cfg.replicates = static_cast<std::size_t>(s.integer("replicates", 2000));
    cfg.seed = s.integer("seed", 12345);
    cfg.correction.tuple_cap = static_cast<std::size_t>(s.integer("tuple_cap", kDefaultTupleCap));
    cfg.correction.mean.samples = static_cast<std::size_t>(s.integer("mean_samples", 1'000'000));
    cfg.correction.mean.seed = derive_seed(cfg.seed, {stream::mean});
    cfg.correction.smoothing.seed = derive_seed(cfg.seed, {stream::coefficients});
    Json sig = Json::object();
    if (auto ss = s.optional_section("sigma2")) {
        ss->allow({"method", "max_lag", "batches", "paths", "path_length"});
        const std::string method = ss->text("method", "autocov_sum");
        if (method == "autocov_sum") cfg.sigma2.kind = Sigma2Method::Kind::autocov_sum;
        else if (method == "batch_means") cfg.sigma2.kind = Sigma2Method::Kind::batch_means;
        else ss->fail("method must be autocov_sum or batch_means");
        cfg.sigma2.max_lag = static_cast<std::size_t>(ss->integer("max_lag", cfg.sigma2.max_lag));
        cfg.sigma2.batches = static_cast<std::size_t>(ss->integer("batches", cfg.sigma2.batches));
        cfg.sigma2.paths = static_cast<std::size_t>(ss->integer("paths", cfg.sigma2.paths));
        cfg.sigma2.path_length = static_cast<std::size_t>(ss->integer("path_length", cfg.sigma2.path_length));
    }
    sig = {{"method", cfg.sigma2.kind == Sigma2Method::Kind::autocov_sum ? "autocov_sum" : "batch_means"},
           {"max_lag", cfg.sigma2.max_lag},
           {"batches", cfg.sigma2.batches},
           {"paths", cfg.sigma2.paths},
           {"path_length", cfg.sigma2.path_length}};
    echo = {{"p", cfg.p},
            {"n_grid", cfg.n_grid},
            {"replicates", cfg.replicates},
            {"seed", cfg.seed},
            {"sigma2", sig},
            {"tuple_cap", cfg.correction.tuple_cap},
            {"mean_samples", cfg.correction.mean.samples}};
    at_field(s, [&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

}  // namespace detail

/// Parses a configuration document. Sections: process, filter, experiment,
/// rank, rate, gen; every section is optional at this level and commands
/// check for the ones they need.
[[nodiscard]] inline ToolConfig parse_config(const Json& doc) {
    using detail::Section;
    const Section root(doc, "");
    root.allow({"process", "filter", "experiment", "rank", "rate", "gen"});
    ToolConfig cfg;
    if (auto s = root.optional_section("process")) {
        Json e = Json::object();
        cfg.process = detail::parse_process(*s, e);
        cfg.echo["process"] = e;
    }
    if (auto s = root.optional_section("filter")) {
        Json e;
        cfg.filter = detail::parse_filter(*s, e);
        cfg.echo["filter"] = e;
        if (cfg.process) detail::at_field(*s, [&] {
            validate_moments(*cfg.filter, cfg.process->innovations());
            return 0;
        });
    }
    if (auto s = root.optional_section("experiment")) {
        if (!cfg.process || !cfg.filter) s->fail("experiment needs process and filter sections");
        Json e;
        cfg.experiment = detail::parse_experiment(*s, *cfg.process, *cfg.filter, e);
        cfg.echo["experiment"] = e;
    }
    if (auto s = root.optional_section("rank")) {
        s->allow({"max_order", "samples", "seed", "level"});
        cfg.rank.max_order = static_cast<int>(s->integer("max_order", 3));
        cfg.rank.samples = static_cast<std::size_t>(s->integer("samples", cfg.rank.samples));
        cfg.rank.seed = s->integer("seed", cfg.rank.seed);
        if (s->has("level") && !(s->raw("level").is_string() && s->raw("level") == "infinity"))
            cfg.rank.level = static_cast<std::size_t>(s->integer("level"));
    }
    cfg.echo["rank"] = {{"max_order", cfg.rank.max_order},
                        {"samples", cfg.rank.samples},
                        {"seed", cfg.rank.seed},
                        {"level", cfg.rank.level == kInfinity ? Json("infinity") : Json(cfg.rank.level)}};
    if (auto s = root.optional_section("rate")) {
        s->allow({"alpha1", "regime", "c"});
        if (s->has("alpha1")) cfg.rate.alpha1 = s->number("alpha1");
        const std::string regime = s->text("regime", "auto");
        if (regime == "long") cfg.rate.regime = Regime::long_memory;
        else if (regime == "short") cfg.rate.regime = Regime::short_memory;
        else if (regime != "auto") s->fail("regime must be long, short or auto");
        cfg.rate.c = s->number("c", 0.5);
    }
    cfg.echo["rate"] = {{"alpha1", cfg.rate.alpha1 ? Json(*cfg.rate.alpha1) : Json("2*beta-1")},
                        {"regime", cfg.rate.regime ? to_string(*cfg.rate.regime) : "auto"},
                        {"c", cfg.rate.c}};
    if (auto s = root.optional_section("gen")) {
        s->allow({"n", "series", "seed"});
        cfg.gen.n = static_cast<std::size_t>(s->integer("n", cfg.gen.n));
        cfg.gen.series = static_cast<std::size_t>(s->integer("series", cfg.gen.series));
        cfg.gen.seed = s->integer("seed", cfg.gen.seed);
        if (cfg.gen.n == 0 || cfg.gen.series == 0) s->fail("n and series must be >= 1");
    }
    cfg.echo["gen"] = {{"n", cfg.gen.n}, {"series", cfg.gen.series}, {"seed", cfg.gen.seed}};
    return cfg;
}

/// Parses JSON text; syntax errors report the line and column.
[[nodiscard]] inline ToolConfig parse_config_text(const std::string& text) {
    Json doc;
    try {
        doc = Json::parse(text);
    } catch (const Json::parse_error& e) {
        std::size_t line = 1, col = 1;
        for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
            if (text[k] == '\n') {
                ++line;
                col = 1;
            } else {
                ++col;
            }
        }
        throw ConfigError("config syntax error at line " + std::to_string(line) + ", column " + std::to_string(col) +
                          ": " + e.what());
    }
    return parse_config(doc);
}

}  // namespace bel
