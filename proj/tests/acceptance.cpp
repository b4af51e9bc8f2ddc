// Acceptance suite: one PASS/FAIL line per criterion, fixed seed 12345.

#include "bel/bel.hpp"

#include <boost/rational.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <unistd.h>
#include <vector>

using namespace bel;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 12345;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

double mean_of(const std::vector<double>& v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample covariance and the standard error of the mean product.
std::pair<double, double> cov_se(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = mean_of(x), my = mean_of(y);
    std::vector<double> prod(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) prod[i] = (x[i] - mx) * (y[i] - my);
    const double m = mean_of(prod);
    double ss = 0.0;
    for (double p : prod) ss += (p - m) * (p - m);
    const double n = static_cast<double>(x.size());
    return {m, std::sqrt(ss / (n - 1) / n)};
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::vector<std::vector<double>> read_csv(const fs::path& p) {
    std::ifstream in(p);
    std::string line;
    std::getline(in, line);
    std::vector<std::vector<double>> rows;
    while (std::getline(in, line)) {
        std::vector<double> row;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) row.push_back(std::strtod(cell.c_str(), nullptr));
        rows.push_back(row);
    }
    return rows;
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(BEL_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int raw = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("bel_acceptance_" + std::to_string(::getpid())) / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

Process gaussian(CoefficientModel m) { return Process(std::move(m), InnovationSpec(Gaussian{1.0})); }

// 1. b_coeffs of x_1 x_{d+1} against the coefficients of the product expansion.
Outcome coefficient_oracle() {
    const std::size_t m = 200;
    const auto model = CoefficientModel::hyperbolic(0.85, 1.0, m);
    double worst = 0.0;
    bool remark = true;
    for (std::size_t d : {1u, 2u, 3u}) {
        const SmoothedKernel k(FilterSpec::lag_product(d), gaussian(model));
        const auto b1 = b_coeffs(k, 1, k.level());
        for (const auto& e : b1.entries()) worst = std::max(worst, std::abs(e.value));
        const auto b2 = b_coeffs(k, 2, k.level());

        // X_n X_{n+d} = sum_{i,k} a_i a_k eps_{n-i} eps_{n+d-k}; eps_{n-i} has age i+d.
        std::map<std::pair<std::size_t, std::size_t>, double> direct;
        for (std::size_t i = 1; i <= m; ++i)
            for (std::size_t kk = 1; kk <= m; ++kk) {
                const std::size_t u = i + d, v = kk;
                if (u == v) continue;
                direct[{std::min(u, v), std::max(u, v)}] +=
                    model.a(static_cast<std::ptrdiff_t>(i)) * model.a(static_cast<std::ptrdiff_t>(kk));
            }
        for (const auto& e : b2.entries()) {
            const auto it = direct.find({e.tuple[0], e.tuple[1]});
            const double ref = it == direct.end() ? 0.0 : it->second;
            worst = std::max(worst, std::abs(e.value - ref));
        }
        for (const auto& [key, v] : direct)
            if (b2.at({key.first, key.second}) == 0.0 && v != 0.0) worst = std::max(worst, std::abs(v));
        remark = remark && std::abs(b2.at({1, d + 1}) - model.a(1) * model.a(1)) <= 1e-10;
        for (std::size_t j = 2; j <= d; ++j) remark = remark && b2.at({1, j}) == 0.0;
    }
    return {worst <= 1e-10 && remark,
            "max |b - direct| = " + fmt(worst) + " (tol 1e-10), b_{1,d+1}=a1^2 and b_{1,j}=0 for 1<j<=d: " +
                (remark ? "yes" : "no")};
}

// 2. Power ranks at 3 SE with at most 1e6 Monte Carlo samples.
Outcome power_ranks() {
    const auto proc = gaussian(CoefficientModel::hyperbolic(0.85, 1.0, kDefaultHorizon));
    SmoothingOptions opt;
    opt.samples = 1'000'000;
    opt.seed = kSeed;
    const auto zc = power_rank(SmoothedKernel(FilterSpec::zero_crossing(), proc.unit_variance(), kInfinity, opt), 3);
    const auto lp = power_rank(SmoothedKernel(FilterSpec::lag_product(1), proc, kInfinity, opt), 3);
    const auto id = power_rank(SmoothedKernel(FilterSpec::identity(), proc, kInfinity, opt), 3);
    auto show = [](const PowerRankReport& r) { return r.rank ? std::to_string(*r.rank) : std::string("none"); };
    return {zc.rank == 2 && lp.rank == 2 && id.rank == 1,
            "zero-crossing " + show(zc) + ", lag-product " + show(lp) + ", identity " + show(id) + " (expected 2, 2, 1)"};
}

// 3. The martingale differences of x^2 sum to K(X_n) - E K(X_n).
Outcome telescoping() {
    const auto model = CoefficientModel::finite({0.7, -0.4, 0.25});
    const auto proc = gaussian(model);
    const auto f = FilterSpec::polynomial(Polynomial::monomial(1, {2}));
    const KernelLadder ladder(f, proc, kInfinity);
    double ek = 0.0;
    for (std::size_t i = 1; i <= 3; ++i) ek += std::pow(model.a(static_cast<std::ptrdiff_t>(i)), 2);
    double worst = 0.0;
    for (std::size_t r = 0; r < 1000; ++r) {
        const auto s = generate(proc, 8, derive_seed(kSeed, {3, r}));
        for (std::size_t t = 0; t < 8; ++t) {
            double sum = 0.0;
            for (std::size_t j = 1; j <= ladder.top(); ++j) sum += martingale_term(ladder, s, t, j).value;
            const double x = s.values()[t];
            worst = std::max(worst, std::abs(sum - (x * x - ek)));
        }
    }
    return {worst <= 1e-10, "max error " + fmt(worst) + " over 1000 realizations x 8 times (tol 1e-10)"};
}

// 4. Martingale differences with distinct innovation times, and expansion
// terms of different orders, are uncorrelated.
Outcome orthogonality() {
    const std::size_t reps = 100000;
    const auto proc = Process(CoefficientModel::hyperbolic(0.85, 1.0, 12), InnovationSpec(Gaussian{1.0}, 12));
    auto poly = Polynomial::monomial(1, {1});
    poly.add({2}, 1.0).add({3}, 1.0);
    const auto f = FilterSpec::polynomial(poly);
    const KernelLadder ladder(f, proc, kInfinity);
    const CorrectedSum cs(f, proc, 3);

    // (n, j) pairs; the innovation touched at step j of window n is eps_{n-j}.
    const std::vector<std::pair<std::size_t, std::size_t>> terms{{0, 1}, {0, 2}, {1, 1}, {3, 1}, {2, 5}};
    const std::vector<std::pair<std::size_t, std::size_t>> pairs{{0, 1}, {0, 2}, {1, 2}, {0, 3}, {3, 4}};
    std::vector<std::vector<double>> m(terms.size(), std::vector<double>(reps));
    std::vector<std::vector<double>> z(3, std::vector<double>(reps));
    const std::size_t n = 16;
    parallel_for(reps, threads_from_env(), [&](std::size_t r) {
        const auto s = generate(proc, n, derive_seed(kSeed, {4, r}));
        for (std::size_t k = 0; k < terms.size(); ++k)
            m[k][r] = martingale_term(ladder, s, terms[k].first, terms[k].second).value;
        for (std::size_t k = 0; k < 3; ++k) z[k][r] = znr(cs.coefficients()[k], s, n);
    });
    bool ok = true;
    double worst = 0.0;
    for (const auto& [a, b] : pairs) {
        const auto [c, se] = cov_se(m[a], m[b]);
        ok = ok && std::abs(c) <= 3.0 * se;
        worst = std::max(worst, std::abs(c) / se);
    }
    for (const auto& [a, b] : std::vector<std::pair<int, int>>{{0, 1}, {0, 2}, {1, 2}}) {
        const auto [c, se] = cov_se(z[static_cast<std::size_t>(a)], z[static_cast<std::size_t>(b)]);
        ok = ok && std::abs(c) <= 3.0 * se;
        worst = std::max(worst, std::abs(c) / se);
    }
    return {ok, "8 covariances at 1e5 replicates, largest |cov|/SE = " + fmt(worst) + " (tol 3)"};
}

// 5. N^{-1} var(Q_{N,1} - Q_{N,1,l}) decays in l at least like l^{-0.8 Q}.
Outcome truncation_decay() {
    const double beta = 0.9;
    const auto proc = gaussian(CoefficientModel::hyperbolic(beta, 1.0, kDefaultHorizon));
    const auto f = FilterSpec::polynomial(Polynomial::monomial(1, {2}));
    const std::size_t n = 4096, reps = 2000;
    const std::vector<std::size_t> levels{16, 32, 64, 128, 256, 512};
    const CorrectedSum full(f, proc, 1);
    std::vector<CorrectedSum> trunc;
    for (auto l : levels) trunc.emplace_back(f, proc, 1, l);
    std::vector<std::vector<double>> diff(levels.size(), std::vector<double>(reps));
    parallel_for(reps, threads_from_env(), [&](std::size_t r) {
        const auto s = generate(proc, n, derive_seed(kSeed, {5, r}));
        const double q = full.sum(s, n);
        for (std::size_t k = 0; k < levels.size(); ++k) diff[k][r] = q - trunc[k].sum(s, n);
    });
    std::vector<double> x, y;
    std::string series;
    for (std::size_t k = 0; k < levels.size(); ++k) {
        const double mu = mean_of(diff[k]);
        double ss = 0.0;
        for (double v : diff[k]) ss += (v - mu) * (v - mu);
        const double v = ss / static_cast<double>(reps - 1) / static_cast<double>(n);
        x.push_back(std::log(static_cast<double>(levels[k])));
        y.push_back(std::log(v));
        series += (k ? ", " : "") + fmt(v, 3);
    }
    const double mx = mean_of(x), my = mean_of(y);
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        sxy += (x[k] - mx) * (y[k] - my);
        sxx += (x[k] - mx) * (x[k] - mx);
    }
    const double slope = sxy / sxx;
    const double q = std::min({2 * beta - 1, 2 * beta - 1, 2 * (2 * beta - 1) - 1});
    const double threshold = -0.8 * q;
    return {slope <= threshold,
            "slope " + fmt(slope) + " <= " + fmt(threshold) + " (variances " + series + ")"};
}

// 6 and 7. CLT experiments through the CLI; 11 re-runs 6 with another thread count.
struct RateRun {
    int code = -1;
    std::vector<std::vector<double>> mc;
    std::string verdict;
    double delta = 0.0;
    fs::path dir;
};

RateRun rate_run(const std::string& config, const std::string& name, unsigned threads) {
    RateRun r;
    r.dir = scratch(name);
    r.code = run_cli("rate --config " + std::string(BEL_CONFIG_DIR) + "/" + config + " --seed " + std::to_string(kSeed) +
                     " --threads " + std::to_string(threads) + " --out " + r.dir.string());
    if (r.code == 0) {
        r.mc = read_csv(r.dir / "mc_result.csv");
        const auto fit = Json::parse(slurp(r.dir / "rate_fit.json"));
        r.verdict = fit["verdict"].get<std::string>();
        r.delta = fit["delta"].get<double>();
    }
    return r;
}

std::pair<bool, std::string> clt_summary(const RateRun& r) {
    std::vector<double> d, fl;
    std::string ds;
    for (const auto& row : r.mc) {
        d.push_back(row[1]);
        fl.push_back(row[4]);
        ds += (ds.empty() ? "" : ", ") + fmt(row[1], 3);
    }
    const bool mono = non_increasing_up_to_floor(d, fl);
    const bool last = !d.empty() && d.back() <= 0.05;
    return {mono && last, "D_N = [" + ds + "], floor " + fmt(fl.empty() ? 0.0 : fl[0], 3) +
                              ", non-increasing up to floor: " + (mono ? "yes" : "no") + ", D(2^14) <= 0.05: " +
                              (last ? "yes" : "no")};
}

RateRun g_long_memory;

Outcome long_memory_clt() {
    g_long_memory = rate_run("rate_long_memory.json", "crit6_threads1", 1);
    if (g_long_memory.code != 0) return {false, "bel rate exited with " + std::to_string(g_long_memory.code)};
    const auto [ok, text] = clt_summary(g_long_memory);
    const bool verdict = g_long_memory.verdict == "consistent-with-bound";
    return {ok && verdict, text + ", verdict " + g_long_memory.verdict + " (delta " + fmt(g_long_memory.delta) + ")"};
}

Outcome short_memory_clt() {
    const auto r = rate_run("rate_short_memory.json", "crit7", 1);
    if (r.code != 0) return {false, "bel rate exited with " + std::to_string(r.code)};
    const auto [ok, text] = clt_summary(r);
    return {ok, text};
}

// 8. Exponent algebra.
Outcome rate_algebra() {
    using R = boost::rational<long long>;
    bool ok = std::abs(delta(0.2) - 1.0 / 21.0) <= 1e-15 && std::abs(delta(1.0) - 1.0 / 9.0) <= 1e-15;
    double prev = 0.0, top = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double d = delta(0.1 * k);
        ok = ok && d > prev && d < 1.0 / 6.0;
        prev = d;
        top = d;
    }
    ok = ok && std::abs(delta(1e12) - 1.0 / 6.0) < 1e-11;
    const auto e = solve_exponents(R(1, 5));
    const bool exact = e.a == R(6, 7) && e.b == R(5, 7) && e.delta == R(1, 21) && exponent_inequalities_hold(R(1, 5), e);
    const auto p = plan(1000000, qprime(0.8, 0.6, 1));
    const bool fp = std::abs(p.a - 6.0 / 7.0) < 1e-15 && std::abs(p.b - 5.0 / 7.0) < 1e-15;
    return {ok && exact && fp, "delta(0.2)=1/21, delta(1)=1/9, monotone on 100 points (delta(10)=" + fmt(top) +
                                   " < 1/6), a=6/7 b=5/7 exact in rationals: " + (exact ? "yes" : "no")};
}

// 9. var(S_N) / N^{1.5} for beta = 0.75, exact.
Outcome partial_sum_growth() {
    const auto model = CoefficientModel::hyperbolic(0.75, 1.0, std::size_t{1} << 20);
    std::vector<double> r;
    for (std::size_t n : {std::size_t{1} << 12, std::size_t{1} << 13, std::size_t{1} << 14})
        r.push_back(partial_sum_variance(model, 1.0, n) / std::pow(static_cast<double>(n), 1.5));
    const double ratio = *std::max_element(r.begin(), r.end()) / *std::min_element(r.begin(), r.end());
    return {ratio <= 1.10, "ratios " + fmt(r[0]) + ", " + fmt(r[1]) + ", " + fmt(r[2]) + "; max/min " + fmt(ratio) +
                               " (tol 1.10), M = 2^20"};
}

// 10. Truncated m-block sums separated by B_N > l_N + d are uncorrelated.
Outcome blocking_independence() {
    const auto proc = gaussian(CoefficientModel::hyperbolic(0.85, 1.0, kDefaultHorizon));
    const std::uint64_t n = std::uint64_t{1} << 14;
    const auto p = plan(n, qprime(0.85, 0.7, 1));
    const auto f = FilterSpec::lag_product(1);
    const CorrectedSum sum(f, proc, 1, p.ell);
    const bool gap = p.gap > p.ell + f.d();
    const auto c = block_independence(sum, p, 2000, kSeed, threads_from_env());

    const auto sample = generate(proc, n + f.d(), kSeed);
    const auto t = sum.terms(sample, n);
    const auto dec = block_decompose(t, p);
    std::vector<int> hits(n, 0);
    double direct = 0.0;
    auto cover = [&](IndexRange r) {
        for (std::size_t i = r.begin; i < r.end; ++i) hits[i]++;
    };
    for (auto r : dec.m_ranges) cover(r);
    for (auto r : dec.b_ranges) cover(r);
    cover(dec.remainder_range);
    for (std::size_t i = dec.remainder_range.begin; i < dec.remainder_range.end; ++i) direct += t[i];
    const bool partition = std::all_of(hits.begin(), hits.end(), [](int h) { return h == 1; }) &&
                           p.blocks * (p.big + p.gap) + p.remainder == n &&
                           std::abs(direct - dec.remainder) <= 1e-9 * (1.0 + std::abs(direct));
    const bool ok = gap && partition && std::abs(c.correlation) <= 3.0 * c.se;
    return {ok, "A_N=" + std::to_string(p.big) + " B_N=" + std::to_string(p.gap) + " l_N=" + std::to_string(p.ell) +
                    ", corr " + fmt(c.correlation) + " (3 SE = " + fmt(3 * c.se) + "), partition exact: " +
                    (partition ? "yes" : "no")};
}

// 11. Same seed, different --threads: identical CSV bytes.
Outcome reproducibility() {
    if (g_long_memory.code != 0) return {false, "first run failed"};
    const auto second = rate_run("rate_long_memory.json", "crit11_threads2", 2);
    if (second.code != 0) return {false, "second run exited with " + std::to_string(second.code)};
    bool same = true;
    std::string files;
    for (const char* name : {"mc_result.csv", "samples.csv", "seeds.csv", "plot_data.csv"}) {
        const bool eq = slurp(g_long_memory.dir / name) == slurp(second.dir / name);
        same = same && eq;
        files += std::string(files.empty() ? "" : ", ") + name + (eq ? " =" : " differs");
    }
    return {same, "--threads 1 vs 2: " + files};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"1 coefficient oracle", coefficient_oracle},
        {"2 power ranks", power_ranks},
        {"3 telescoping identity", telescoping},
        {"4 orthogonality", orthogonality},
        {"5 truncation-variance decay", truncation_decay},
        {"6 long-memory CLT", long_memory_clt},
        {"7 short-memory CLT", short_memory_clt},
        {"8 rate algebra", rate_algebra},
        {"9 partial-sum variance growth", partial_sum_growth},
        {"10 blocking independence", blocking_independence},
        {"11 reproducibility", reproducibility},
    };
    const auto start = std::chrono::steady_clock::now();
    int failures = 0;
    for (const auto& [name, fn] : criteria) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s criterion %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
        std::fflush(stdout);
        failures += o.pass ? 0 : 1;
    }
    const double total = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("%d of %zu criteria passed, total runtime %.1fs\n", static_cast<int>(criteria.size()) - failures,
                criteria.size(), total);
    fs::remove_all(fs::temp_directory_path() / ("bel_acceptance_" + std::to_string(::getpid())));
    return failures == 0 ? 0 : 1;
}
