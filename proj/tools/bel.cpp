// bel: command-line driver for generation, power ranks, rate experiments,
// blocking plans and digest-checked reproduction.
//
// Exit codes: 0 ok, 1 numeric failure, 2 configuration error, 3 I/O error,
// 4 rank above max-order, 5 degenerate variance, 6 rate not applicable,
// 7 N too small for a blocking plan, 8 reproduction digest mismatch.

#include "bel/bel.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using bel::Json;

namespace {

enum Exit : int {
    kOk = 0,
    kNumeric = 1,
    kConfig = 2,
    kIo = 3,
    kRankExceeds = 4,
    kDegenerate = 5,
    kNotApplicable = 6,
    kPlanTooSmall = 7,
    kMismatch = 8,
};

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct PlanArgs {
    double beta = 0.0;
    std::optional<double> alpha1;
    int p = 1;
    std::string regime = "auto";
    std::uint64_t n = 0;
    double c = 0.5;
};

/// Everything a command needs; a manifest stores enough of it to rebuild one.
struct Invocation {
    std::string command;
    std::string config_path;
    std::string config_text;
    std::optional<std::uint64_t> seed;
    std::optional<std::uint64_t> replicates;
    unsigned threads = 1;
    std::optional<fs::path> out;
    PlanArgs plan;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot read '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Output directory plus the inventory of what was written into it.
class Outputs {
public:
    explicit Outputs(std::optional<fs::path> dir) : dir_(std::move(dir)) {
        if (dir_ && !fs::is_directory(*dir_)) throw IoError("output directory '" + dir_->string() + "' does not exist");
    }

    [[nodiscard]] bool enabled() const noexcept { return dir_.has_value(); }

    void write(const std::string& name, const std::string& content, bool inventory = true) {
        if (!dir_) return;
        const fs::path path = *dir_ / name;
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write '" + path.string() + "'");
        out << content;
        out.close();
        if (!out) throw IoError("write failed for '" + path.string() + "'");
        if (inventory)
            files_.push_back({{"file", name}, {"bytes", content.size()}, {"digest", bel::digest_hex(content)}});
    }

    [[nodiscard]] const Json& files() const noexcept { return files_; }

private:
    std::optional<fs::path> dir_;
    Json files_ = Json::array();
};

Json load_document(const Invocation& inv) {
    const fs::path p(inv.config_path);
    if (p.extension() == ".toml")
        throw bel::ConfigError("config '" + inv.config_path + "': TOML is not supported, use a JSON file");
    Json doc;
    try {
        doc = Json::parse(inv.config_text);
    } catch (const Json::parse_error&) {
        (void)bel::parse_config_text(inv.config_text);  // rethrows with line and column
        throw;
    }
    if (!doc.is_object()) throw bel::ConfigError("config: top level must be an object");
    auto ensure = [&](const char* key) -> Json& {
        if (!doc.contains(key) || doc[key].is_null()) doc[key] = Json::object();
        return doc[key];
    };
    if (inv.seed) {
        if (inv.command == "gen") ensure("gen")["seed"] = *inv.seed;
        if (inv.command == "rank") ensure("rank")["seed"] = *inv.seed;
        if (inv.command == "rate" && doc.contains("experiment")) doc["experiment"]["seed"] = *inv.seed;
    }
    if (inv.replicates && inv.command == "rate" && doc.contains("experiment"))
        doc["experiment"]["replicates"] = *inv.replicates;
    return doc;
}

Json manifest_head(const Invocation& inv, const Json& echo) {
    Json m;
    m["tool"] = "bel";
    m["version"] = bel::kVersion;
    m["command"] = inv.command;
    if (!inv.config_path.empty()) {
        m["config"] = {{"path", inv.config_path},
                       {"digest", bel::digest_hex(inv.config_text)},
                       {"bytes", inv.config_text.size()},
                       {"text", inv.config_text},
                       {"echo", echo}};
    }
    m["overrides"] = {{"seed", inv.seed ? Json(*inv.seed) : Json()},
                      {"replicates", inv.replicates ? Json(*inv.replicates) : Json()}};
    m["threads"] = inv.threads;
    return m;
}

void finish_manifest(Outputs& out, Json manifest, double total_seconds) {
    manifest["timings"]["total_seconds"] = total_seconds;
    manifest["outputs"] = out.files();
    out.write("manifest.json", manifest.dump(2) + "\n", false);
}

template <class T>
const T& require(const std::optional<T>& v, const char* section, const char* command) {
    if (!v) throw bel::ConfigError(std::string("config: '") + section + "' section required by " + command);
    return *v;
}

// -------------------------------------------------------------------- gen

int cmd_gen(const Invocation& inv, std::string& status) {
    const auto t0 = Clock::now();
    if (!inv.out) throw bel::ConfigError("gen: --out <directory> is required");
    const auto cfg = bel::parse_config(load_document(inv));
    const auto& proc = require(cfg.process, "process", "gen");
    if (cfg.filter) bel::validate_moments(*cfg.filter, proc.innovations());
    Outputs out(inv.out);

    std::vector<bel::SeriesSample> series;
    Json seeds = Json::array();
    for (std::size_t k = 0; k < cfg.gen.series; ++k) {
        const auto seed = bel::derive_seed(cfg.gen.seed, {bel::stream::series, k});
        series.push_back(bel::generate(proc, cfg.gen.n, seed));
        seeds.push_back(seed);
    }
    std::vector<std::string> header{"t"};
    for (std::size_t k = 0; k < series.size(); ++k) header.push_back("series_" + std::to_string(k + 1));
    bel::CsvWriter csv(header);
    for (std::size_t t = 0; t < cfg.gen.n; ++t) {
        std::vector<std::string> row{std::to_string(t)};
        for (const auto& s : series) row.push_back(bel::format_double(s.values()[t]));
        csv.row_strings(row);
    }
    out.write("series.csv", csv.str());

    Json m = manifest_head(inv, cfg.echo);
    m["master_seed"] = cfg.gen.seed;
    m["seeds"] = {{"series", seeds}};
    m["process_digest"] = proc.digest(cfg.gen.seed);
    finish_manifest(out, m, seconds_since(t0));
    status = "gen: wrote " + std::to_string(cfg.gen.series) + " series of length " + std::to_string(cfg.gen.n);
    return kOk;
}

// ------------------------------------------------------------------- rank

int cmd_rank(const Invocation& inv, std::string& status) {
    const auto t0 = Clock::now();
    const auto cfg = bel::parse_config(load_document(inv));
    const auto& proc = require(cfg.process, "process", "rank");
    const auto& filter = require(cfg.filter, "filter", "rank");
    Outputs out(inv.out);

    bel::SmoothingOptions opt;
    opt.samples = cfg.rank.samples;
    opt.seed = cfg.rank.seed;
    opt.threads = inv.threads;
    const bel::SmoothedKernel kernel(filter, proc, cfg.rank.level, opt);
    const auto rep = bel::power_rank(kernel, cfg.rank.max_order);

    Json derivs = Json::array();
    for (const auto& d : rep.derivatives)
        derivs.push_back({{"index", d.index},
                          {"value", d.value.estimate.value},
                          {"se", d.value.estimate.se},
                          {"step", d.value.step},
                          {"tolerance", bel::zero_tolerance(d.value.estimate.se)},
                          {"nonzero", d.nonzero}});
    Json report = {{"rank", rep.rank ? Json(*rep.rank) : Json()},
                   {"status", bel::to_string(rep.status)},
                   {"max_order", rep.max_order},
                   {"level", rep.level},
                   {"provenance", bel::to_string(rep.provenance)},
                   {"tolerance", {{"se_factor", rep.tolerance_factor}, {"floor", rep.tolerance_floor}}},
                   {"filter", filter.describe()},
                   {"derivatives", derivs}};
    if (out.enabled()) {
        out.write("rank.json", report.dump(2) + "\n");
        Json m = manifest_head(inv, cfg.echo);
        m["master_seed"] = cfg.rank.seed;
        m["seeds"] = {{"smoothing", cfg.rank.seed}};
        finish_manifest(out, m, seconds_since(t0));
    } else {
        std::cerr << report.dump(2) << "\n";
    }
    if (!rep.rank) {
        status = "rank: rank > max-order " + std::to_string(rep.max_order);
        return kRankExceeds;
    }
    status = "rank: nu=" + std::to_string(*rep.rank) + " (" + bel::to_string(rep.provenance) + ")";
    return kOk;
}

// ------------------------------------------------------------------- rate

Json plan_json(const bel::BlockingPlan& p) {
    return {{"N", p.n},     {"a", p.a},         {"b", p.b},       {"c", p.c},
            {"delta", p.delta}, {"qprime", p.qprime}, {"A_N", p.big}, {"B_N", p.gap},
            {"l_N", p.ell}, {"k_N", p.blocks}, {"remainder", p.remainder}};
}

[[noreturn]] void not_applicable(const bel::RateParams& rp) {
    throw bel::RateNotApplicableError(
        "rate-not-applicable: (p+1)(2beta-1) = " + std::to_string((rp.p + 1) * (2 * rp.beta - 1)) +
        " <= 1. With power rank one in the long-memory regime the limit is non-central and the Q' "
        "formula for the normal-approximation rate is not applicable.");
}

bel::RateParams rate_params(double beta, std::optional<double> alpha1, int p, std::optional<bel::Regime> regime) {
    if (!std::isfinite(beta) && !alpha1)
        throw bel::ConfigError("config field 'rate.alpha1': required for finite-order models");
    return bel::qprime(beta, alpha1.value_or(2.0 * beta - 1.0), p, regime);
}

int cmd_rate(const Invocation& inv, std::string& status) {
    const auto t0 = Clock::now();
    if (!inv.out) throw bel::ConfigError("rate: --out <directory> is required");
    const auto cfg = bel::parse_config(load_document(inv));
    auto ex = require(cfg.experiment, "experiment", "rate");
    Outputs out(inv.out);

    const double beta = ex.process.model().decay_exponent();
    const auto rp = rate_params(beta, cfg.rate.alpha1, ex.p, cfg.rate.regime);
    if (!rp.applicable) not_applicable(rp);
    const double delta = bel::delta(rp.qprime);

    ex.correction.smoothing.threads = inv.threads;
    ex.correction.mean.threads = inv.threads;
    const auto res = bel::run_experiment(ex, inv.threads);
    const auto fit = bel::fit_rate(res, delta);
    const bool monotone = bel::non_increasing_up_to_floor(res);

    bel::CsvWriter mc({"N", "D_N", "sigma2", "sigma2_se", "floor", "sample_variance", "mean", "mean_se",
                       "centering_se"});
    bel::CsvWriter samples({"N", "replicate", "value"});
    bel::CsvWriter seeds({"grid", "N", "replicate", "seed"});
    bel::CsvWriter plot({"N", "log_N", "log_D_N", "log_bound", "log_floor_guard", "near_floor"});
    const double anchor = fit.bound_constant > 0.0
                              ? fit.bound_constant
                              : res.records.front().distance * std::pow(static_cast<double>(res.records.front().n), delta);
    for (std::size_t g = 0; g < res.records.size(); ++g) {
        const auto& r = res.records[g];
        const double n = static_cast<double>(r.n);
        mc.row({n, r.distance, res.sigma2.estimate.value, res.sigma2.estimate.se, r.floor, r.sample_variance,
                res.mean.value(), res.mean.estimate.se, r.centering_se});
        for (std::size_t k = 0; k < r.samples.size(); ++k) {
            samples.row_strings({std::to_string(r.n), std::to_string(k), bel::format_double(r.samples[k])});
            seeds.row_strings({std::to_string(g), std::to_string(r.n), std::to_string(k),
                               std::to_string(bel::replicate_seed(res.seed, g, k))});
        }
        plot.row({n, std::log(n), std::log(r.distance), std::log(anchor) - delta * std::log(n), std::log(2.0 * r.floor),
                  fit.near_floor[g] ? 1.0 : 0.0});
    }

    Json plan = Json();
    try {
        plan = plan_json(bel::plan(ex.n_grid.back(), rp, cfg.rate.c));
    } catch (const bel::PlanTooSmallError& e) {
        plan = {{"error", e.what()}, {"minimum_n", e.minimum_n()}};
    }
    Json fit_json = {{"slope", fit.slope},
                     {"intercept", fit.intercept},
                     {"residual_se", fit.residual_se},
                     {"used_points", fit.used_points},
                     {"theoretical_slope", fit.theoretical_slope},
                     {"status", bel::to_string(fit.status)},
                     {"verdict", bel::to_string(fit.verdict)},
                     {"bound_constant", fit.bound_constant},
                     {"near_floor", fit.near_floor},
                     {"non_increasing_up_to_floor", monotone},
                     {"qprime", rp.qprime},
                     {"delta", delta},
                     {"regime", bel::to_string(rp.regime)},
                     {"alpha1", rp.alpha1},
                     {"beta", rp.beta},
                     {"p", rp.p},
                     {"mean_provenance", bel::to_string(res.mean.provenance)},
                     {"sigma2", {{"value", res.sigma2.estimate.value},
                                 {"se", res.sigma2.estimate.se},
                                 {"method", res.sigma2.method}}},
                     {"plan_at_max_N", plan}};

    out.write("mc_result.csv", mc.str());
    out.write("samples.csv", samples.str());
    out.write("seeds.csv", seeds.str());
    out.write("plot_data.csv", plot.str());
    out.write("rate_fit.json", fit_json.dump(2) + "\n");

    Json m = manifest_head(inv, cfg.echo);
    m["master_seed"] = ex.seed;
    m["seeds"] = {{"sigma2", bel::derive_seed(ex.seed, {bel::stream::sigma2})},
                  {"mean", ex.correction.mean.seed},
                  {"coefficients", ex.correction.smoothing.seed},
                  {"replicates", "seeds.csv"}};
    m["result_digest"] = res.digest();
    m["plan"] = plan;
    m["timings"]["experiment_seconds"] = res.wall_seconds;
    finish_manifest(out, m, seconds_since(t0));

    std::ostringstream os;
    os << "rate: D_N(" << res.records.back().n << ")=" << bel::format_double(res.records.back().distance)
       << " verdict=" << bel::to_string(fit.verdict) << " fit=" << bel::to_string(fit.status);
    status = os.str();
    return kOk;
}

// ------------------------------------------------------------------- plan

int cmd_plan(const Invocation& inv, std::string& status) {
    const auto t0 = Clock::now();
    const auto& a = inv.plan;
    std::optional<bel::Regime> regime;
    if (a.regime == "long") regime = bel::Regime::long_memory;
    else if (a.regime == "short") regime = bel::Regime::short_memory;
    else if (a.regime != "auto") throw bel::ConfigError("plan: --regime must be long, short or auto");
    if (a.n == 0) throw bel::ConfigError("plan: --n must be >= 1");
    Outputs out(inv.out);
    const auto rp = rate_params(a.beta, a.alpha1, a.p, regime);
    if (!rp.applicable) not_applicable(rp);
    const auto p = bel::plan(a.n, rp, a.c);
    Json j = plan_json(p);
    j["regime"] = bel::to_string(rp.regime);
    j["alpha1"] = rp.alpha1;
    j["beta"] = rp.beta;
    j["p"] = rp.p;
    if (out.enabled()) {
        out.write("plan.json", j.dump(2) + "\n");
        Json m = manifest_head(inv, Json());
        m["arguments"] = {{"beta", a.beta},
                          {"alpha1", a.alpha1 ? Json(*a.alpha1) : Json()},
                          {"p", a.p},
                          {"regime", a.regime},
                          {"n", a.n},
                          {"c", a.c}};
        finish_manifest(out, m, seconds_since(t0));
    } else {
        std::cerr << j.dump(2) << "\n";
    }
    std::ostringstream os;
    os << "plan: Q'=" << bel::format_double(p.qprime) << " delta=" << bel::format_double(p.delta)
       << " a=" << bel::format_double(p.a) << " b=" << bel::format_double(p.b) << " A_N=" << p.big << " B_N=" << p.gap
       << " l_N=" << p.ell << " k_N=" << p.blocks;
    status = os.str();
    return kOk;
}

int dispatch(const Invocation& inv, std::string& status);

// -------------------------------------------------------------- reproduce

int cmd_reproduce(const fs::path& manifest_path, const Invocation& base, std::string& status) {
    if (!base.out) throw bel::ConfigError("reproduce: --out <directory> is required");
    Json m;
    try {
        m = Json::parse(read_file(manifest_path));
    } catch (const Json::parse_error& e) {
        throw bel::ConfigError("reproduce: manifest is not valid JSON: " + std::string(e.what()));
    }
    if (!m.contains("command") || !m.contains("outputs")) throw bel::ConfigError("reproduce: not a bel manifest");
    Invocation inv = base;
    inv.command = m["command"].get<std::string>();
    if (m.contains("config")) {
        inv.config_path = m["config"]["path"].get<std::string>();
        inv.config_text = m["config"]["text"].get<std::string>();
        if (bel::digest_hex(inv.config_text) != m["config"]["digest"].get<std::string>())
            throw bel::ConfigError("reproduce: stored config text does not match its digest");
    }
    const auto& ov = m["overrides"];
    if (!ov["seed"].is_null()) inv.seed = ov["seed"].get<std::uint64_t>();
    if (!ov["replicates"].is_null()) inv.replicates = ov["replicates"].get<std::uint64_t>();
    if (m.contains("arguments")) {
        const auto& a = m["arguments"];
        inv.plan.beta = a["beta"].get<double>();
        if (!a["alpha1"].is_null()) inv.plan.alpha1 = a["alpha1"].get<double>();
        inv.plan.p = a["p"].get<int>();
        inv.plan.regime = a["regime"].get<std::string>();
        inv.plan.n = a["n"].get<std::uint64_t>();
        inv.plan.c = a["c"].get<double>();
    }
    std::string inner;
    const int code = dispatch(inv, inner);
    if (code != kOk) {
        status = "reproduce: re-run exited with " + std::to_string(code);
        return code;
    }
    std::size_t checked = 0, bad = 0;
    for (const auto& f : m["outputs"]) {
        const auto name = f["file"].get<std::string>();
        const auto fresh = bel::digest_hex(read_file(*inv.out / name));
        ++checked;
        if (fresh != f["digest"].get<std::string>()) {
            ++bad;
            std::cerr << "reproduce: digest mismatch for " << name << ": manifest " << f["digest"].get<std::string>()
                      << ", re-run " << fresh << "\n";
        }
    }
    if (bad) {
        status = "reproduce: " + std::to_string(bad) + " of " + std::to_string(checked) + " outputs differ";
        return kMismatch;
    }
    status = "reproduce: " + std::to_string(checked) + " outputs match";
    return kOk;
}

int dispatch(const Invocation& inv, std::string& status) {
    if (inv.command == "gen") return cmd_gen(inv, status);
    if (inv.command == "rank") return cmd_rank(inv, status);
    if (inv.command == "rate") return cmd_rate(inv, status);
    if (inv.command == "plan") return cmd_plan(inv, status);
    throw bel::ConfigError("unknown command '" + inv.command + "'");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Berry-Esseen experiments for functionals of linear processes"};
    app.set_version_flag("--version", std::string(bel::kVersion));
    app.require_subcommand(1);

    Invocation inv;
    std::string config, out, manifest;
    std::optional<unsigned> threads;

    auto common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config, "JSON configuration file");
        if (needs_config) c->required();
        sub->add_option("--out", out, "existing output directory");
        sub->add_option("--seed", inv.seed, "override the master seed");
        sub->add_option("--threads", threads, "worker threads (default: BEL_THREADS or 1)");
        sub->add_option("--replicates", inv.replicates, "override the replicate count R");
    };
    auto* gen = app.add_subcommand("gen", "simulate series from a process config");
    common(gen, true);
    auto* rank = app.add_subcommand("rank", "power rank of the configured filter");
    common(rank, true);
    auto* rate = app.add_subcommand("rate", "Monte Carlo rate experiment");
    common(rate, true);
    auto* plan = app.add_subcommand("plan", "blocking plan for given exponents");
    common(plan, false);
    plan->add_option("--beta", inv.plan.beta, "decay exponent beta")->required();
    plan->add_option("--alpha1", inv.plan.alpha1, "alpha_1 (default 2 beta - 1)");
    plan->add_option("--p", inv.plan.p, "expansion order p")->capture_default_str();
    plan->add_option("--regime", inv.plan.regime, "long, short or auto")->capture_default_str();
    plan->add_option("--n", inv.plan.n, "sample size N")->required();
    plan->add_option("--c", inv.plan.c, "truncation fraction c in (0,1)")->capture_default_str();
    auto* repro = app.add_subcommand("reproduce", "re-run from a manifest and verify digests");
    repro->add_option("--manifest", manifest, "manifest.json of an earlier run")->required();
    repro->add_option("--out", out, "existing directory for the re-run")->required();
    repro->add_option("--threads", threads, "worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForVersion& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        std::cout << "error: usage (exit " << kConfig << ")\n";
        return kConfig;
    }

    inv.threads = threads.value_or(bel::threads_from_env());
    if (inv.threads == 0) inv.threads = 1;
    if (!out.empty()) inv.out = fs::path(out);
    std::string status;
    int code = kOk;
    try {
        if (*repro) {
            code = cmd_reproduce(manifest, inv, status);
        } else {
            for (auto* sub : {gen, rank, rate, plan})
                if (*sub) inv.command = sub->get_name();
            if (!config.empty()) {
                inv.config_path = config;
                inv.config_text = read_file(config);
            }
            code = dispatch(inv, status);
        }
    } catch (const bel::ConfigError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: config";
        code = kConfig;
    } catch (const IoError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: io";
        code = kIo;
    } catch (const bel::DegenerateVarianceError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: degenerate-variance";
        code = kDegenerate;
    } catch (const bel::RateNotApplicableError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: rate-not-applicable";
        code = kNotApplicable;
    } catch (const bel::PlanTooSmallError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: plan-too-small (minimum N " + std::to_string(e.minimum_n()) + ")";
        code = kPlanTooSmall;
    } catch (const bel::NumericError& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: numeric";
        code = kNumeric;
    } catch (const Json::exception& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: config";
        code = kConfig;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "bel: " << e.what() << "\n";
        status = "error: io";
        code = kIo;
    }
    std::cout << status << " (exit " << code << ")\n";
    return code;
}
