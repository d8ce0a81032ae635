// Acceptance checks: one PASS/FAIL line per criterion, non-zero exit status
// if any criterion fails.

#include "oracles.hpp"
#include "test_util.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <functional>
#include <iostream>
#include <set>
#include <sstream>

using namespace nndm;
using testutil::vec;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, v);
    return buf;
}

PipelineConfig load(const std::string& name) { return load_config(std::string(NNDM_CONFIG_DIR) + "/" + name); }

struct HullInstance {
    Polytope hull;
    KernelTarget target;
};

HullInstance random_hull(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-2.5, 2.5), w(0.05, 2.5);
    std::uniform_int_distribution<int> count(3, 8);
    HullInstance inst;
    const int k = count(rng);
    for (int i = 0; i < k; ++i)
        inst.hull.vertices.push_back(vec({u(rng), u(rng)}));
    const Vector lo = vec({u(rng), u(rng)});
    inst.target = KernelTarget(lo, lo + vec({w(rng), w(rng)}));
    return inst;
}

/// At least 10^4 points of conv(H): the grid is refined until enough of it
/// falls inside the hull.
std::vector<Vector> dense_points(const Polytope& hull) {
    for (int per_axis = 100;; per_axis += 50) {
        auto pts = oracle::dense_hull_samples(hull.vertices, per_axis);
        if (pts.size() >= 10000 || per_axis >= 1000)
            return pts;
    }
}

// 1 ---------------------------------------------------------------------------
Outcome kernel_vs_quadrature() {
    std::mt19937_64 rng(1001);
    std::uniform_real_distribution<double> u(-4.0, 4.0), w(0.01, 4.0);
    std::uniform_int_distribution<int> dims(1, 3);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const int n = dims(rng);
        Vector z(n), lo(n), hi(n);
        for (int l = 0; l < n; ++l) {
            z(l) = u(rng);
            lo(l) = u(rng);
            hi(l) = lo(l) + w(rng);
        }
        worst = std::max(worst, std::abs(kernel_g(z, KernelTarget(lo, hi)) - oracle::gaussian_box(z, lo, hi)));
    }
    return {worst < 1e-8, "1000 instances, max |error| " + fmt("%.3g", worst) + " (< 1e-8)"};
}

// 2 ---------------------------------------------------------------------------
Outcome vertex_minimum() {
    std::mt19937_64 rng(1002);
    double worst = 0.0;
    std::size_t fewest = std::numeric_limits<std::size_t>::max();
    for (int i = 0; i < 200; ++i) {
        const auto inst = random_hull(rng);
        const auto pts = dense_points(inst.hull);
        fewest = std::min(fewest, pts.size());
        double dense = 1.0;
        for (const auto& p : pts)
            dense = std::min(dense, kernel_g(p, inst.target));
        worst = std::max(worst, std::abs(min_over_hull(inst.hull, inst.target) - dense));
    }
    return {worst <= 1e-6 && fewest >= 10000, "200 instances, >= " + std::to_string(fewest) +
                                                  " hull points each, max |vertex min - dense min| " +
                                                  fmt("%.3g", worst) + " (<= 1e-6)"};
}

// 3 ---------------------------------------------------------------------------
Outcome rect_extreme_dominance() {
    std::mt19937_64 rng(1003);
    double slack_min = std::numeric_limits<double>::infinity();
    double slack_max = std::numeric_limits<double>::infinity();
    double slack_hull = std::numeric_limits<double>::infinity();
    for (int i = 0; i < 1000; ++i) {
        const auto inst = random_hull(rng);
        const auto z = rect_extreme_points(rect_hull(inst.hull), inst.target);
        double lo = 1.0, hi = 0.0;
        for (const auto& p : oracle::dense_hull_samples(inst.hull.vertices))
            lo = std::min(lo, kernel_g(p, inst.target)), hi = std::max(hi, kernel_g(p, inst.target));
        slack_min = std::min(slack_min, lo - kernel_g(z.z_min, inst.target));
        slack_max = std::min(slack_max, kernel_g(z.z_max, inst.target) - hi);
        slack_hull = std::min(slack_hull, kernel_g(z.z_max, inst.target) - max_over_hull(inst.hull, inst.target));
    }
    const bool ok = slack_min >= -1e-12 && slack_max >= -1e-12 && slack_hull >= -1e-12;
    return {ok, "1000 instances, min slack: lower " + fmt("%.3g", slack_min) + ", upper " + fmt("%.3g", slack_max) +
                    ", upper vs hull maximum " + fmt("%.3g", slack_hull) + " (>= -1e-12)"};
}

// 4 ---------------------------------------------------------------------------
Outcome grouped_rows() {
    const auto full = preset_networks("fixture2d", 1);
    std::map<std::string, Network> nets;
    std::vector<std::string> names;
    for (std::size_t a = 0; a < 3; ++a) {
        names.push_back(full.action_name(a));
        nets[names.back()] = full.network(a);
    }
    const NeuralDynamics nd(2, names, nets);
    const RegionGrid g = build_grid(testutil::box({-2, -2}, {2, 2}), mahalanobis(0.2 * Matrix::Identity(2, 2)),
                                    {10, 10}, {});
    std::size_t rows = 0, equal = 0;
    for (std::size_t q = 0; q < g.num_cells(); ++q)
        for (std::size_t a = 0; a < nd.num_actions(); ++a) {
            const auto post = make_post_image(relax(nd, a, g.transform(), g.cell(q)), g.cell(q));
            ++rows;
            equal += compute_row(g, post, q, a) == compute_row_naive(g, post, q, a);
        }
    return {equal == rows && rows == 300,
            std::to_string(equal) + "/" + std::to_string(rows) + " rows bit-identical (10x10 grid, 3 actions)"};
}

// 5 ---------------------------------------------------------------------------
Outcome relaxation_soundness() {
    Matrix cov(2, 2);
    cov << 0.2, 0.05, 0.05, 0.1;
    const Transform t = mahalanobis(cov);
    std::size_t checks = 0, violations = 0, cases = 0;
    std::uint64_t seed = 500;
    const std::vector<std::vector<int>> shapes{{2, 20, 20, 20, 2}, {2, 50, 50, 50, 50, 2}, {2, 100, 100, 100, 100, 100, 2}};
    const std::vector<HyperRect> regions{testutil::box({-0.2, -0.2}, {0.2, 0.2}), testutil::box({0.5, -1.5}, {1.5, -0.5})};
    for (Activation act : {Activation::relu, Activation::tanh, Activation::sigmoid})
        for (const auto& shape : shapes) {
            const auto nd = testutil::random_dynamics(shape, act, 2, seed++);
            for (std::size_t a = 0; a < nd.num_actions(); ++a)
                for (const auto& r : regions) {
                    ++cases;
                    const LinearBounds b = relax(nd, a, t, r);
                    std::mt19937_64 rng(seed * 31 + a);
                    const int n = 100000;
                    Matrix zs(2, n);
                    for (int i = 0; i < n; ++i)
                        zs.col(i) = testutil::uniform_in(r, rng);
                    const Matrix ys = t.T * nd.evaluate_batch(a, t.T_inv * zs);
                    const Matrix lo = (b.A_lo * zs).colwise() + b.b_lo;
                    const Matrix hi = (b.A_hi * zs).colwise() + b.b_hi;
                    for (Eigen::Index i = 0; i < ys.size(); ++i) {
                        const double tol = 1e-9 * (1.0 + std::abs(ys.data()[i]));
                        violations += lo.data()[i] > ys.data()[i] + tol || ys.data()[i] > hi.data()[i] + tol;
                        ++checks;
                    }
                }
        }
    return {violations == 0, std::to_string(violations) + " violations in " + std::to_string(checks) +
                                 " bound checks (" + std::to_string(cases) +
                                 " network/action/region cases, 1e5 samples each, up to 5x100)"};
}

// 6 ---------------------------------------------------------------------------
Outcome value_iteration_oracles() {
    std::mt19937_64 rng(1006);
    ValueIterationOptions opts;
    opts.tolerance = 1e-12;
    opts.max_sweeps = 1000000;
    double worst_lp = 0.0, worst_mdp = 0.0;
    for (int trial = 0; trial < 60; ++trial) {
        const std::size_t n = 4 + static_cast<std::size_t>(trial % 17);
        const std::size_t na = 1 + static_cast<std::size_t>(trial % 3);
        std::vector<char> acc(n, 0), sink(n, 0);
        acc[n - 2] = 1;
        sink[n - 1] = 1;
        const Imdp m = oracle::random_imdp(rng, n, na, 5);
        const auto r = robust_value_iteration(m, acc, sink, opts);
        const auto ref = oracle::maximin_lp(m, acc, sink);
        for (std::size_t s = 0; s < n; ++s)
            worst_lp = std::max(worst_lp, std::abs(r.values[s] - ref[s]));

        const Imdp d = oracle::random_imdp(rng, n, na, 5, true);
        std::vector<std::vector<std::vector<double>>> P(n, std::vector<std::vector<double>>(na, std::vector<double>(n, 0.0)));
        for (std::size_t s = 0; s < n; ++s)
            for (std::size_t a = 0; a < na; ++a)
                for (const auto& e : d.row(s, a).entries)
                    P[s][a][e.target] = e.lower;
        const auto rd = robust_value_iteration(d, acc, sink, opts);
        const auto mdp = oracle::mdp_value_iteration(P, acc, sink);
        for (std::size_t s = 0; s < n; ++s)
            worst_mdp = std::max(worst_mdp, std::abs(rd.values[s] - mdp[s]));
    }
    return {worst_lp <= 1e-6 && worst_mdp <= 2e-6,
            "60 random IMDPs (4-20 states): max |VI - LP oracle| " + fmt("%.3g", worst_lp) +
                " (<= 1e-6); degenerate vs MDP VI " + fmt("%.3g", worst_mdp) + " (<= 2e-6)"};
}

// 8 ---------------------------------------------------------------------------
// Refinement with the invariants checked after every round, including the
// incremental-update-equals-full-rebuild check.
Outcome refinement_efficacy(const PipelineConfig& cfg) {
    const auto nd = load_dynamics(cfg);
    const Dfa dfa = load_spec(cfg);
    Abstraction abs(nd, build_grid(cfg.domain, mahalanobis(cfg.covariance), cfg.grid, cfg.regions));
    auto syn = synthesize(abs.imdp(), dfa, abs.grid().unsafe_id(), cfg.vi);
    const double w0 = mean_width(abs.grid(), syn.p_lower, syn.p_upper);
    const std::size_t n0 = abs.grid().num_cells();
    std::ostringstream widths;
    widths << fmt("%.4f", w0);
    bool invariants = true;
    std::string broken;
    for (std::size_t round = 1; round <= cfg.refinement.rounds; ++round) {
        refine_round(abs, syn, cfg.refinement);
        syn = synthesize(abs.imdp(), dfa, abs.grid().unsafe_id(), cfg.vi);
        widths << " -> " << fmt("%.4f", mean_width(abs.grid(), syn.p_lower, syn.p_upper));
        const RegionGrid& g = abs.grid();
        double vol = 0.0;
        for (std::size_t q = 0; q < g.num_cells(); ++q) {
            vol += g.cell(q).volume();
            if (syn.p_lower[q] > syn.p_upper[q] || g.label(q) != g.label_at_transformed(g.cell(q).center()))
                invariants = false, broken = "interval order or labels";
        }
        if (std::abs(vol - g.domain().volume()) > 1e-9 * g.domain().volume())
            invariants = false, broken = "partition volume";
        try {
            abs.imdp().validate();
        } catch (const Error& e) {
            invariants = false, broken = e.what();
        }
        if (!(Abstraction(nd, g).imdp() == abs.imdp()))
            invariants = false, broken = "incremental rows differ from a full rebuild";
        if (!syn.converged)
            invariants = false, broken = "value iteration did not converge";
    }
    const double w5 = mean_width(abs.grid(), syn.p_lower, syn.p_upper);
    const bool ok = w5 < w0 && invariants && abs.grid().num_cells() > n0;
    return {ok, "mean width " + widths.str() + ", states " + std::to_string(n0 + 1) + " -> " +
                    std::to_string(abs.grid().num_states()) + ", invariants " + (invariants ? "hold" : "broken: " + broken)};
}

// 7 ---------------------------------------------------------------------------
Outcome monte_carlo(const PipelineResult& r) {
    if (!r.validation)
        return {false, "no validation report"};
    std::size_t trials = 0;
    for (const auto& v : r.validation->regions)
        trials = std::max(trials, v.trials);
    return {r.validation->flagged == 0 && r.validation->regions.size() == 20 && trials >= 10000,
            std::to_string(r.validation->flagged) + " of " + std::to_string(r.validation->regions.size()) +
                " start cells flagged, " + std::to_string(trials) + " trials each (" +
                std::to_string(r.grid().num_states()) + " states after " + std::to_string(r.rounds.size()) +
                " refinement rounds)"};
}

// 9 ---------------------------------------------------------------------------
Outcome car_scale(double& seconds) {
    PipelineConfig cfg = load("car.json");
    cfg.threads = 1;
    const auto t0 = std::chrono::steady_clock::now();
    const auto r = run_pipeline(cfg, {true, false, false});
    seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::size_t ordered = 0;
    for (std::size_t q = 0; q < r.grid().num_cells(); ++q)
        ordered += r.synthesis.p_lower[q] <= r.synthesis.p_upper[q];
    const bool ok = r.grid().num_states() >= 1500 && seconds < 1800.0 && ordered == r.grid().num_cells() &&
                    r.synthesis.converged;
    return {ok, std::to_string(r.grid().num_states()) + " states, " + std::to_string(r.dynamics->num_actions()) +
                    " actions, abstraction " + fmt("%.1f", r.times.abstraction) + " s + synthesis " +
                    fmt("%.1f", r.times.synthesis) + " s (< 1800 s, 1 thread)"};
}

// 10 --------------------------------------------------------------------------
Outcome determinism(const PipelineResult& one, const PipelineConfig& cfg) {
    PipelineConfig c8 = cfg;
    c8.threads = 8;
    const auto eight = run_pipeline(c8);
    const bool csv = regions_csv(one) == regions_csv(eight);
    bool mc = one.validation && eight.validation && one.validation->regions.size() == eight.validation->regions.size();
    if (mc)
        for (std::size_t i = 0; i < one.validation->regions.size(); ++i)
            mc &= one.validation->regions[i].successes == eight.validation->regions[i].successes &&
                  one.validation->regions[i].successes_long == eight.validation->regions[i].successes_long;
    return {csv && mc, std::string("regions.csv at 1 and 8 threads ") + (csv ? "byte-identical" : "DIFFERENT") +
                           " (" + std::to_string(regions_csv(one).size()) + " bytes); Monte Carlo counts " +
                           (mc ? "identical" : "DIFFERENT")};
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Acceptance criteria"};
    std::vector<int> only;
    app.add_option("criteria", only, "Run only these criteria (1-10)");
    CLI11_PARSE(app, argc, argv);
    const std::set<int> selected(only.begin(), only.end());
    auto wanted = [&](int k) { return selected.empty() || selected.count(k) > 0; };

    int failures = 0;
    auto report = [&](int k, const std::string& name, const std::function<Outcome()>& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = fn();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        failures += o.pass ? 0 : 1;
        std::cout << (o.pass ? "PASS" : "FAIL") << " [" << k << "] " << name << ": " << o.detail << " ["
                  << fmt("%.1f", s) << " s]" << std::endl;
    };

    if (wanted(1))
        report(1, "kernel vs quadrature", kernel_vs_quadrature);
    if (wanted(2))
        report(2, "vertex minimum over hull", vertex_minimum);
    if (wanted(3))
        report(3, "rect-hull extreme-point dominance", rect_extreme_dominance);
    if (wanted(4))
        report(4, "grouped rows equal naive rows", grouped_rows);
    if (wanted(5))
        report(5, "relaxation soundness", relaxation_soundness);
    if (wanted(6))
        report(6, "robust value iteration vs oracles", value_iteration_oracles);

    const PipelineConfig fixture = [] {
        PipelineConfig c = load("fixture2d.json");
        c.threads = 1;
        return c;
    }();
    if (wanted(8))
        report(8, "refinement efficacy (5 rounds, 5%)", [&] { return refinement_efficacy(fixture); });
    std::optional<PipelineResult> fixture_run;
    auto run_fixture = [&]() -> const PipelineResult& {
        if (!fixture_run)
            fixture_run = run_pipeline(fixture);
        return *fixture_run;
    };
    if (wanted(7))
        report(7, "Monte Carlo vs certified bounds", [&] { return monte_carlo(run_fixture()); });
    if (wanted(9)) {
        double seconds = 0.0;
        report(9, "car-scale abstraction and synthesis", [&] { return car_scale(seconds); });
    }
    if (wanted(10))
        report(10, "determinism across thread counts", [&] { return determinism(run_fixture(), fixture); });

    std::cout << (failures == 0 ? "ALL PASS" : std::to_string(failures) + " FAILED") << std::endl;
    return failures == 0 ? 0 : 1;
}
