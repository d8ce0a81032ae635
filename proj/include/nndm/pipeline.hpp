#pragma once

// End-to-end pipeline: configuration, abstraction, synthesis, refinement,
// closed-loop Monte Carlo validation and result files.

#include "nndm/abstraction.hpp"
#include "nndm/automata.hpp"
#include "nndm/fixtures.hpp"
#include "nndm/refinement.hpp"
#include "nndm/synthesis.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace nndm {

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct ValidationConfig {
    std::size_t trials = 0;       // per start cell; 0 disables validation
    std::size_t start_cells = 20;
    std::size_t horizon = 200;
    std::size_t long_horizon_factor = 5;
    double z_score = 2.5758293035489004; // two-sided 99%
};

struct PipelineConfig {
    // Network: a file path, or a preset name with its seed.
    std::string network_path;
    std::string network_preset;
    std::uint64_t network_seed = 1;

    HyperRect domain;
    Matrix covariance;
    std::vector<std::size_t> grid;
    std::vector<RegionOfInterest> regions;

    std::string spec_template = "reach_avoid";
    std::map<std::string, std::string> spec_labels;
    std::string dfa_path;

    RefinementConfig refinement;
    ValueIterationOptions vi;
    ValidationConfig validation;
    RowOptions rows;
    double threshold = 0.95;
    std::vector<int> projection; // original-coordinate dimensions for plot columns
    std::uint64_t seed = 0;
    int threads = 1;
    std::string output = "out";
};

namespace detail {

inline Vector vector_of(const nlohmann::json& j) {
    const auto v = j.get<std::vector<double>>();
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline std::string resolve_path(const std::string& p, const std::filesystem::path& base) {
    if (p.empty() || std::filesystem::path(p).is_absolute() || base.empty())
        return p;
    return (base / p).string();
}

} // namespace detail

/// Parses a configuration; relative file paths resolve against `base_dir`.
inline PipelineConfig config_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {}) {
    PipelineConfig c;
    try {
        const auto& net = j.at("network");
        if (net.is_string()) {
            c.network_path = detail::resolve_path(net.get<std::string>(), base_dir);
        } else {
            c.network_preset = net.at("preset").get<std::string>();
            c.network_seed = net.value("seed", std::uint64_t{1});
        }
        const auto dom = j.at("domain").get<std::vector<std::vector<double>>>();
        Vector lo(static_cast<Eigen::Index>(dom.size())), hi(static_cast<Eigen::Index>(dom.size()));
        for (std::size_t l = 0; l < dom.size(); ++l) {
            if (dom[l].size() != 2)
                throw Error("synthesis_pipeline", "domain entries must be [lo, hi] pairs");
            lo(static_cast<Eigen::Index>(l)) = dom[l][0];
            hi(static_cast<Eigen::Index>(l)) = dom[l][1];
        }
        c.domain = HyperRect(lo, hi);
        const auto cov = j.at("covariance").get<std::vector<std::vector<double>>>();
        c.covariance = Matrix(static_cast<Eigen::Index>(cov.size()), static_cast<Eigen::Index>(cov.size()));
        for (std::size_t r = 0; r < cov.size(); ++r) {
            if (cov[r].size() != cov.size())
                throw Error("synthesis_pipeline", "covariance must be square");
            for (std::size_t k = 0; k < cov.size(); ++k)
                c.covariance(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) = cov[r][k];
        }
        c.grid = j.at("grid").get<std::vector<std::size_t>>();
        for (const auto& r : j.value("regions", nlohmann::json::array()))
            c.regions.push_back({r.at("label").get<std::string>(),
                                 HyperRect(detail::vector_of(r.at("lo")), detail::vector_of(r.at("hi")))});
        if (j.contains("spec")) {
            const auto& s = j.at("spec");
            if (s.contains("dfa"))
                c.dfa_path = detail::resolve_path(s.at("dfa").get<std::string>(), base_dir);
            else
                c.spec_template = s.value("template", c.spec_template);
            c.spec_labels = s.value("labels", c.spec_labels);
        }
        if (j.contains("refinement")) {
            const auto& r = j.at("refinement");
            c.refinement.rounds = r.value("rounds", c.refinement.rounds);
            c.refinement.n_ref = r.value("n_ref", c.refinement.n_ref);
            c.refinement.n_ref_fraction = r.value("n_ref_fraction", c.refinement.n_ref_fraction);
            c.refinement.stop_width = r.value("stop_width", c.refinement.stop_width);
            if (r.contains("rule"))
                c.refinement.rule = parse_split_rule(r.at("rule").get<std::string>());
            if (c.refinement.n_ref == 0)
                throw Error("refinement", "n_ref must be at least 1");
        }
        if (j.contains("value_iteration")) {
            const auto& v = j.at("value_iteration");
            c.vi.tolerance = v.value("tolerance", c.vi.tolerance);
            c.vi.max_sweeps = v.value("max_sweeps", c.vi.max_sweeps);
        }
        if (j.contains("validation")) {
            const auto& v = j.at("validation");
            c.validation.trials = v.value("trials", c.validation.trials);
            c.validation.start_cells = v.value("start_cells", c.validation.start_cells);
            c.validation.horizon = v.value("horizon", c.validation.horizon);
            c.validation.long_horizon_factor = v.value("long_horizon_factor", c.validation.long_horizon_factor);
        }
        c.threshold = j.value("threshold", c.threshold);
        c.projection = j.value("projection", c.projection);
        c.seed = j.value("seed", c.seed);
        c.threads = j.value("threads", c.threads);
        c.output = j.value("output", c.output);
    } catch (const nlohmann::json::exception& e) {
        throw Error("synthesis_pipeline", std::string("malformed configuration: ") + e.what());
    }
    const Eigen::Index n = c.domain.dim();
    if (c.covariance.rows() != n || c.grid.size() != static_cast<std::size_t>(n))
        throw Error("synthesis_pipeline", "domain, covariance and grid dimensions differ");
    for (const auto& r : c.regions)
        if (r.box.dim() != n)
            throw Error("synthesis_pipeline", "region '" + r.label + "' has the wrong dimension");
    if (c.projection.empty())
        for (int p = 0; p < std::min<int>(2, static_cast<int>(n)); ++p)
            c.projection.push_back(p);
    for (int p : c.projection)
        if (p < 0 || p >= n)
            throw Error("synthesis_pipeline", "projection dimension out of range");
    return c;
}

inline PipelineConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in)
        throw Error("synthesis_pipeline", "cannot open configuration '" + path + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("synthesis_pipeline", "cannot parse '" + path + "': " + e.what());
    }
    return config_from_json(j, std::filesystem::path(path).parent_path());
}

inline NeuralDynamics load_dynamics(const PipelineConfig& c) {
    NeuralDynamics nd = c.network_path.empty() ? preset_networks(c.network_preset, c.network_seed)
                                               : load_networks(c.network_path);
    if (nd.dim() != c.domain.dim())
        throw Error("synthesis_pipeline", "network dimension does not match the domain");
    return nd;
}

inline Dfa load_spec(const PipelineConfig& c) {
    return c.dfa_path.empty() ? dfa_template(c.spec_template, c.spec_labels) : load_dfa(c.dfa_path);
}

// ---------------------------------------------------------------------------
// Strategy mapping
// ---------------------------------------------------------------------------

/// Controller for the concrete system: tracks the current cell through the
/// point map and the automaton state through the observed labels; the action
/// is the product strategy at (cell, automaton state).
class SwitchingStrategy {
public:
    SwitchingStrategy(const RegionGrid& grid, const Dfa& dfa, std::vector<std::size_t> product_strategy)
        : grid_(&grid), dfa_(&dfa), strategy_(std::move(product_strategy)) {
        if (strategy_.size() != grid.num_states() * dfa.num_states())
            throw Error("synthesis_pipeline", "strategy does not match the product size");
    }

    std::size_t action(std::size_t cell, std::size_t dfa_state) const {
        return strategy_.at(cell * dfa_->num_states() + dfa_state);
    }

    /// Action at original-coordinate point x with automaton state d; nullopt
    /// outside the domain.
    std::optional<std::size_t> action_at(const Vector& x, std::size_t dfa_state) const {
        const auto cell = grid_->locate(x);
        if (!cell)
            return std::nullopt;
        return action(*cell, dfa_state);
    }

    /// Automaton state after observing the first point of a path.
    std::size_t initial_dfa_state(const Vector& x0) const { return dfa_->step(dfa_->initial(), grid_->label_at(x0)); }

    const RegionGrid& grid() const { return *grid_; }
    const Dfa& dfa() const { return *dfa_; }
    const std::vector<std::size_t>& product_strategy() const { return strategy_; }

private:
    const RegionGrid* grid_;
    const Dfa* dfa_;
    std::vector<std::size_t> strategy_;
};

inline SwitchingStrategy map_strategy(const SynthesisResult& r, const RegionGrid& grid, const Dfa& dfa) {
    return SwitchingStrategy(grid, dfa, r.strategy);
}

enum class PathOutcome { accepted, rejected, exited, unfinished };

struct PathRecord {
    std::vector<Vector> states;
    std::vector<std::size_t> actions;
    std::vector<std::size_t> dfa_states;
    PathOutcome outcome = PathOutcome::unfinished;
    std::size_t steps = 0; // steps taken when the outcome was decided
};

/// Closed-loop simulation from x0 until acceptance, a dead automaton state,
/// leaving the domain, or `horizon` steps.
template <typename Rng>
PathRecord simulate_path(const NeuralDynamics& nd, const GaussianNoise& noise, const SwitchingStrategy& sw,
                         const std::vector<char>& dead, Vector x0, std::size_t horizon, Rng& rng,
                         bool record = false) {
    PathRecord p;
    const Dfa& dfa = sw.dfa();
    Vector x = std::move(x0);
    if (!sw.grid().locate(x)) {
        p.outcome = PathOutcome::exited;
        return p;
    }
    std::size_t d = sw.initial_dfa_state(x);
    if (record) {
        p.states.push_back(x);
        p.dfa_states.push_back(d);
    }
    for (std::size_t k = 0;; ++k) {
        if (dfa.accepting(d)) {
            p.outcome = PathOutcome::accepted;
            p.steps = k;
            return p;
        }
        if (dead[d]) {
            p.outcome = PathOutcome::rejected;
            p.steps = k;
            return p;
        }
        if (k == horizon) {
            p.steps = k;
            return p;
        }
        const auto a = sw.action_at(x, d);
        x = nd.evaluate(*a, x) + noise.sample(rng);
        if (record)
            p.actions.push_back(*a);
        if (!sw.grid().locate(x)) {
            p.outcome = PathOutcome::exited;
            p.steps = k + 1;
            if (record)
                p.states.push_back(x);
            return p;
        }
        d = dfa.step(d, sw.grid().label_at(x));
        if (record) {
            p.states.push_back(x);
            p.dfa_states.push_back(d);
        }
    }
}

// ---------------------------------------------------------------------------
// Monte Carlo validation
// ---------------------------------------------------------------------------

struct Interval {
    double lo;
    double hi;
};

/// Wilson score interval for k successes out of n.
inline Interval wilson_interval(std::size_t k, std::size_t n, double z) {
    if (n == 0)
        return {0.0, 1.0};
    const double nn = static_cast<double>(n);
    const double p = static_cast<double>(k) / nn;
    const double z2 = z * z;
    const double den = 1.0 + z2 / nn;
    const double center = (p + z2 / (2.0 * nn)) / den;
    const double half = z * std::sqrt(p * (1.0 - p) / nn + z2 / (4.0 * nn * nn)) / den;
    return {k == 0 ? 0.0 : std::max(0.0, center - half), k == n ? 1.0 : std::min(1.0, center + half)};
}

struct RegionValidation {
    std::size_t cell = 0;
    std::size_t trials = 0;
    std::size_t successes = 0;       // within the horizon
    std::size_t successes_long = 0;  // within long_horizon_factor * horizon
    std::size_t unfinished_long = 0;
    Interval ci{};
    Interval ci_long{};
    double p_lower = 0.0;
    double p_upper = 0.0;
    bool flagged = false;
};

struct ValidationReport {
    std::vector<RegionValidation> regions;
    std::size_t flagged = 0;
};

/// Start cells: a seeded sample of distinct cells, in ascending order.
inline std::vector<std::size_t> sample_start_cells(std::size_t num_cells, std::size_t count, std::uint64_t seed) {
    std::vector<std::size_t> ids(num_cells);
    std::iota(ids.begin(), ids.end(), 0);
    if (count >= num_cells)
        return ids;
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
        std::uniform_int_distribution<std::size_t> pick(i, num_cells - 1);
        std::swap(ids[i], ids[pick(rng)]);
    }
    ids.resize(count);
    std::sort(ids.begin(), ids.end());
    return ids;
}

/// Simulates `trials` closed-loop paths from the center of each start cell.
/// A cell is flagged when the 99% interval of the horizon-bounded frequency
/// lies entirely below p_lower, or the interval of the long-horizon frequency
/// lies entirely above p_upper.
inline ValidationReport validate_monte_carlo(const NeuralDynamics& nd, const Matrix& covariance,
                                             const SwitchingStrategy& sw, const std::vector<double>& p_lower,
                                             const std::vector<double>& p_upper,
                                             const std::vector<std::size_t>& start_cells,
                                             const ValidationConfig& vc, std::uint64_t seed, int threads) {
    const GaussianNoise noise(covariance);
    const auto dead = sw.dfa().dead_states();
    const std::size_t long_horizon = vc.horizon * std::max<std::size_t>(1, vc.long_horizon_factor);
    ValidationReport rep;
    for (std::size_t cell : start_cells) {
        RegionValidation r;
        r.cell = cell;
        r.trials = vc.trials;
        r.p_lower = p_lower.at(cell);
        r.p_upper = p_upper.at(cell);
        const Vector x0 = sw.grid().transform().backward(sw.grid().cell(cell).center());
        std::vector<PathRecord> out(vc.trials);
        parallel_for(vc.trials, threads, [&](std::size_t t) {
            std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                              static_cast<std::uint32_t>(cell), static_cast<std::uint32_t>(t)};
            std::mt19937_64 rng(seq);
            out[t] = simulate_path(nd, noise, sw, dead, x0, long_horizon, rng);
        });
        for (const auto& p : out) {
            if (p.outcome == PathOutcome::accepted) {
                ++r.successes_long;
                if (p.steps <= vc.horizon)
                    ++r.successes;
            } else if (p.outcome == PathOutcome::unfinished) {
                ++r.unfinished_long;
            }
        }
        r.ci = wilson_interval(r.successes, r.trials, vc.z_score);
        r.ci_long = wilson_interval(r.successes_long, r.trials, vc.z_score);
        r.flagged = r.ci.hi < r.p_lower || r.ci_long.lo > r.p_upper;
        rep.flagged += r.flagged ? 1 : 0;
        rep.regions.push_back(r);
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Pipeline
// ---------------------------------------------------------------------------

struct RoundLog {
    std::size_t round = 0;
    std::vector<std::size_t> split_states;
    std::vector<Eigen::Index> dimensions;
    std::size_t states = 0;
    std::size_t recomputed_rows = 0;
    double mean_width = 0.0;
    double max_width = 0.0;
    double seconds = 0.0;
};

struct StageTimes {
    double abstraction = 0.0;
    double synthesis = 0.0;
    double refinement = 0.0;
    double validation = 0.0;
};

struct PipelineResult {
    PipelineConfig config;
    std::unique_ptr<NeuralDynamics> dynamics;
    std::unique_ptr<Dfa> dfa;
    std::unique_ptr<Abstraction> abstraction;
    SynthesisResult synthesis;
    double initial_mean_width = 0.0;
    std::vector<RoundLog> rounds;
    std::optional<ValidationReport> validation;
    StageTimes times;

    const RegionGrid& grid() const { return abstraction->grid(); }
    SwitchingStrategy strategy() const { return map_strategy(synthesis, grid(), *dfa); }
};

using Clock = std::chrono::steady_clock;

inline double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct PipelineStages {
    bool synthesize = true;
    bool refine = true;
    bool validate = true;
};

/// Callback receiving progress messages.
using ProgressFn = std::function<void(const std::string&)>;

inline PipelineResult run_pipeline(const PipelineConfig& config, PipelineStages stages = {},
                                   const ProgressFn& progress = {}) {
    auto say = [&](const std::string& m) {
        if (progress)
            progress(m);
    };
    PipelineResult res;
    res.config = config;
    const int threads = resolve_threads(config.threads);
    ValueIterationOptions vi = config.vi;
    vi.threads = threads;

    res.dynamics = std::make_unique<NeuralDynamics>(load_dynamics(config));
    res.dfa = std::make_unique<Dfa>(load_spec(config));

    auto t0 = Clock::now();
    const Transform transform = mahalanobis(config.covariance);
    RegionGrid grid = build_grid(config.domain, transform, config.grid, config.regions);
    res.abstraction =
        std::make_unique<Abstraction>(*res.dynamics, std::move(grid), AbstractionOptions{config.rows, threads});
    res.times.abstraction = seconds_since(t0);
    say("abstraction: " + std::to_string(res.grid().num_states()) + " states");
    if (!stages.synthesize)
        return res;

    t0 = Clock::now();
    res.synthesis = synthesize(res.abstraction->imdp(), *res.dfa, res.grid().unsafe_id(), vi);
    res.times.synthesis = seconds_since(t0);
    res.initial_mean_width = mean_width(res.grid(), res.synthesis.p_lower, res.synthesis.p_upper);
    say("synthesis: mean width " + std::to_string(res.initial_mean_width));

    if (stages.refine) {
        for (std::size_t round = 1; round <= config.refinement.rounds; ++round) {
            const double width = mean_width(res.grid(), res.synthesis.p_lower, res.synthesis.p_upper);
            if (width < config.refinement.stop_width)
                break;
            const auto tr = Clock::now();
            const RoundRecord rec = refine_round(*res.abstraction, res.synthesis, config.refinement);
            if (rec.split_states.empty())
                break;
            const double t_ref = seconds_since(tr);
            const auto ts = Clock::now();
            res.synthesis = synthesize(res.abstraction->imdp(), *res.dfa, res.grid().unsafe_id(), vi);
            res.times.synthesis += seconds_since(ts);
            res.times.refinement += t_ref;
            RoundLog log;
            log.round = round;
            log.split_states = rec.split_states;
            log.dimensions = rec.dimensions;
            log.states = res.grid().num_states();
            log.recomputed_rows = rec.recomputed_rows;
            log.mean_width = mean_width(res.grid(), res.synthesis.p_lower, res.synthesis.p_upper);
            log.max_width = max_width(res.grid(), res.synthesis.p_lower, res.synthesis.p_upper);
            log.seconds = seconds_since(tr);
            res.rounds.push_back(log);
            say("refinement round " + std::to_string(round) + ": " + std::to_string(log.states) +
                " states, mean width " + std::to_string(log.mean_width));
        }
    }

    if (stages.validate && config.validation.trials > 0) {
        t0 = Clock::now();
        const auto starts = sample_start_cells(res.grid().num_cells(), config.validation.start_cells, config.seed);
        res.validation = validate_monte_carlo(*res.dynamics, config.covariance, res.strategy(),
                                              res.synthesis.p_lower, res.synthesis.p_upper, starts,
                                              config.validation, config.seed, threads);
        res.times.validation = seconds_since(t0);
        say("validation: " + std::to_string(res.validation->flagged) + " flagged regions");
    }
    return res;
}

// ---------------------------------------------------------------------------
// Output
// ---------------------------------------------------------------------------

enum class RegionClass { yes, no, maybe };

inline RegionClass classify(double p_lower, double p_upper, double threshold) {
    if (p_lower >= threshold)
        return RegionClass::yes;
    if (p_upper < threshold)
        return RegionClass::no;
    return RegionClass::maybe;
}

inline const char* to_string(RegionClass c) {
    switch (c) {
    case RegionClass::yes: return "yes";
    case RegionClass::no: return "no";
    case RegionClass::maybe: return "maybe";
    }
    return "maybe";
}

inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

/// regions.csv content: one line per cell.
inline std::string regions_csv(const PipelineResult& r) {
    const RegionGrid& g = r.grid();
    const Eigen::Index n = g.dim();
    std::ostringstream os;
    os << "id";
    for (Eigen::Index l = 0; l < n; ++l)
        os << ",x" << l << "_lo,x" << l << "_hi";
    for (Eigen::Index l = 0; l < n; ++l)
        os << ",z" << l << "_lo,z" << l << "_hi";
    os << ",label,p_lower,p_upper,action,class";
    for (int p : r.config.projection)
        os << ",proj" << p << "_lo,proj" << p << "_hi";
    os << "\n";
    for (std::size_t q = 0; q < g.num_cells(); ++q) {
        const HyperRect& z = g.cell(q);
        const HyperRect x = g.transform().preimage_box(z);
        os << q;
        for (Eigen::Index l = 0; l < n; ++l)
            os << ',' << format_double(x.lo(l)) << ',' << format_double(x.hi(l));
        for (Eigen::Index l = 0; l < n; ++l)
            os << ',' << format_double(z.lo(l)) << ',' << format_double(z.hi(l));
        const double lo = r.synthesis.p_lower[q], hi = r.synthesis.p_upper[q];
        os << ',' << join_labels(g.label(q)) << ',' << format_double(lo) << ',' << format_double(hi) << ','
           << r.dynamics->action_name(r.synthesis.action[q]) << ',' << to_string(classify(lo, hi, r.config.threshold));
        for (int p : r.config.projection)
            os << ',' << format_double(x.lo(p)) << ',' << format_double(x.hi(p));
        os << "\n";
    }
    return os.str();
}

inline nlohmann::json strategy_json(const PipelineResult& r) {
    const Dfa& dfa = *r.dfa;
    nlohmann::json entries = nlohmann::json::array();
    for (std::size_t q = 0; q < r.grid().num_cells(); ++q)
        for (std::size_t d = 0; d < dfa.num_states(); ++d)
            entries.push_back({{"region", q},
                               {"dfa", dfa.state_name(d)},
                               {"action", r.dynamics->action_name(r.synthesis.strategy[q * dfa.num_states() + d])}});
    return {{"dfa_states", dfa.state_names()}, {"entries", entries}};
}

inline std::string refinement_jsonl(const PipelineResult& r) {
    std::ostringstream os;
    for (const auto& log : r.rounds) {
        nlohmann::json j = {{"round", log.round},
                            {"split_states", log.split_states},
                            {"dimensions", log.dimensions},
                            {"states", log.states},
                            {"recomputed_rows", log.recomputed_rows},
                            {"mean_width", log.mean_width},
                            {"max_width", log.max_width},
                            {"wall_time_s", log.seconds}};
        os << j.dump() << "\n";
    }
    return os.str();
}

inline nlohmann::json summary_json(const PipelineResult& r) {
    std::size_t yes = 0, no = 0, maybe = 0;
    const auto& s = r.synthesis;
    for (std::size_t q = 0; q < r.grid().num_cells(); ++q) {
        switch (classify(s.p_lower[q], s.p_upper[q], r.config.threshold)) {
        case RegionClass::yes: ++yes; break;
        case RegionClass::no: ++no; break;
        case RegionClass::maybe: ++maybe; break;
        }
    }
    nlohmann::json j = {
        {"cells", r.grid().num_cells()},
        {"states", r.grid().num_states()},
        {"actions", r.dynamics->num_actions()},
        {"dfa_states", r.dfa->num_states()},
        {"product_states", r.grid().num_states() * r.dfa->num_states()},
        {"refinement_rounds", r.rounds.size()},
        {"threshold", r.config.threshold},
        {"classes", {{"yes", yes}, {"no", no}, {"maybe", maybe}}},
        {"mean_width", mean_width(r.grid(), s.p_lower, s.p_upper)},
        {"max_width", max_width(r.grid(), s.p_lower, s.p_upper)},
        {"initial_mean_width", r.initial_mean_width},
        {"value_iteration", {{"converged", s.converged}, {"sweeps_maximin", s.sweeps_maximin},
                             {"sweeps_lower", s.sweeps_lower}, {"sweeps_upper", s.sweeps_upper}}},
        {"timing_s",
         {{"abstraction", r.times.abstraction}, {"synthesis", r.times.synthesis},
          {"refinement", r.times.refinement}, {"validation", r.times.validation}}},
    };
    if (r.validation) {
        nlohmann::json regions = nlohmann::json::array();
        for (const auto& v : r.validation->regions)
            regions.push_back({{"region", v.cell},
                               {"trials", v.trials},
                               {"frequency", static_cast<double>(v.successes) / static_cast<double>(v.trials)},
                               {"frequency_long", static_cast<double>(v.successes_long) / static_cast<double>(v.trials)},
                               {"ci", {v.ci.lo, v.ci.hi}},
                               {"ci_long", {v.ci_long.lo, v.ci_long.hi}},
                               {"p_lower", v.p_lower},
                               {"p_upper", v.p_upper},
                               {"flagged", v.flagged}});
        j["validation"] = {{"flagged", r.validation->flagged}, {"regions", regions}};
    }
    return j;
}

inline void write_file(const std::filesystem::path& path, const std::string& content) {
    std::error_code ec;
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw Error("synthesis_pipeline", "cannot write '" + path.string() + "'");
    out << content;
    if (!out)
        throw Error("synthesis_pipeline", "write failed for '" + path.string() + "'");
}

/// Writes regions.csv, strategy.json, refinement.jsonl and summary.json.
inline void emit_outputs(const PipelineResult& r, const std::filesystem::path& outdir) {
    std::error_code ec;
    std::filesystem::create_directories(outdir, ec);
    if (ec)
        throw Error("synthesis_pipeline", "cannot create '" + outdir.string() + "': " + ec.message());
    write_file(outdir / "regions.csv", regions_csv(r));
    write_file(outdir / "strategy.json", strategy_json(r).dump(1) + "\n");
    write_file(outdir / "refinement.jsonl", refinement_jsonl(r));
    write_file(outdir / "summary.json", summary_json(r).dump(2) + "\n");
}

/// IMDP rows as JSON, for the abstraction-only command.
inline nlohmann::json imdp_json(const Imdp& m) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t s = 0; s < m.num_states(); ++s)
        for (std::size_t a = 0; a < m.num_actions(); ++a)
            rows.push_back(row_to_json(m.row(s, a), m.action_names()[a]));
    return {{"states", m.num_states()}, {"actions", m.action_names()}, {"labels", m.labels()}, {"rows", rows}};
}

} // namespace nndm
