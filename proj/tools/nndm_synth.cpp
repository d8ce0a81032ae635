// nndm-synth: command-line front end of the nndm library.

#include "nndm/nndm.hpp"

#include <CLI11.hpp>

#include <iostream>

namespace {

struct Overrides {
    std::string config;
    std::string out;
    int threads = 0;
    std::int64_t seed = -1;
    std::int64_t rounds = -1;
    std::int64_t trials = -1;
    std::int64_t start_cells = -1;
    std::int64_t horizon = -1;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "Pipeline configuration (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("-o,--out", o.out, "Output directory (overrides the configuration)");
    cmd->add_option("-t,--threads", o.threads, "Worker threads (0 = configuration value)");
    cmd->add_option("-s,--seed", o.seed, "Seed for Monte Carlo validation");
    cmd->add_flag("-q,--quiet", o.quiet, "Suppress progress messages");
}

nndm::PipelineConfig configure(const Overrides& o) {
    nndm::PipelineConfig c = nndm::load_config(o.config);
    if (!o.out.empty())
        c.output = o.out;
    if (o.threads > 0)
        c.threads = o.threads;
    if (o.seed >= 0)
        c.seed = static_cast<std::uint64_t>(o.seed);
    if (o.rounds >= 0)
        c.refinement.rounds = static_cast<std::size_t>(o.rounds);
    if (o.trials >= 0)
        c.validation.trials = static_cast<std::size_t>(o.trials);
    if (o.start_cells >= 0)
        c.validation.start_cells = static_cast<std::size_t>(o.start_cells);
    if (o.horizon >= 0)
        c.validation.horizon = static_cast<std::size_t>(o.horizon);
    return c;
}

nndm::ProgressFn progress(const Overrides& o) {
    if (o.quiet)
        return {};
    return [](const std::string& m) { std::cerr << m << "\n"; };
}

nndm::Vector parse_point(const std::string& s) {
    std::vector<double> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        v.push_back(std::stod(item));
    return Eigen::Map<nndm::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void write_path(const nndm::PipelineResult& r, const nndm::Vector& x0, std::size_t steps, std::uint64_t seed,
                const std::filesystem::path& file) {
    const nndm::GaussianNoise noise(r.config.covariance);
    const auto sw = r.strategy();
    std::mt19937_64 rng(seed);
    const auto p = nndm::simulate_path(*r.dynamics, noise, sw, r.dfa->dead_states(), x0, steps, rng, true);
    std::ostringstream os;
    os << "step";
    for (Eigen::Index l = 0; l < x0.size(); ++l)
        os << ",x" << l;
    os << ",dfa,action\n";
    for (std::size_t k = 0; k < p.states.size(); ++k) {
        os << k;
        for (Eigen::Index l = 0; l < x0.size(); ++l)
            os << ',' << nndm::format_double(p.states[k](l));
        os << ',' << (k < p.dfa_states.size() ? r.dfa->state_name(p.dfa_states[k]) : std::string("-")) << ','
           << (k < p.actions.size() ? r.dynamics->action_name(p.actions[k]) : std::string("-")) << "\n";
    }
    nndm::write_file(file, os.str());
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Abstraction, strategy synthesis and certification for stochastic neural-network dynamics"};
    app.require_subcommand(1);

    Overrides o;
    auto* run = app.add_subcommand("run", "Full pipeline: abstraction, synthesis, refinement, validation");
    auto* abstract = app.add_subcommand("abstract", "Build the IMDP abstraction and write imdp.json");
    auto* synth = app.add_subcommand("synthesize", "Abstraction and synthesis without refinement");
    auto* refine = app.add_subcommand("refine", "Abstraction, synthesis and refinement rounds");
    auto* simulate = app.add_subcommand("simulate", "Synthesize, then validate by closed-loop simulation");
    for (auto* cmd : {run, abstract, synth, refine, simulate})
        add_common(cmd, o);
    for (auto* cmd : {run, refine, simulate})
        cmd->add_option("--rounds", o.rounds, "Refinement rounds");
    for (auto* cmd : {run, simulate}) {
        cmd->add_option("--trials", o.trials, "Monte Carlo trials per start cell");
        cmd->add_option("--start-cells", o.start_cells, "Number of sampled start cells");
        cmd->add_option("--horizon", o.horizon, "Simulation horizon");
    }
    std::string x0;
    std::size_t steps = 200;
    simulate->add_option("--x0", x0, "Also record one path from this point (comma separated) into path.csv");
    simulate->add_option("--steps", steps, "Horizon of the recorded path");

    auto* generate = app.add_subcommand("generate", "Write a freshly generated network (and configuration)");
    std::string preset = "fixture2d", net_out, cfg_out;
    std::uint64_t net_seed = 1;
    generate->add_option("--preset", preset, "fixture2d, car or stress")->check(CLI::IsMember({"fixture2d", "car", "stress"}));
    generate->add_option("--seed", net_seed, "Weight seed");
    generate->add_option("--network-out", net_out, "Network JSON file")->required();
    generate->add_option("--config-out", cfg_out, "Configuration JSON referring to the network file");

    CLI11_PARSE(app, argc, argv);

    try {
        if (generate->parsed()) {
            const auto nd = nndm::preset_networks(preset, net_seed);
            nndm::write_file(net_out, nndm::networks_to_json(nd).dump() + "\n");
            if (!cfg_out.empty()) {
                auto cfg = nndm::preset_config(preset, net_seed);
                const auto rel = std::filesystem::relative(std::filesystem::absolute(net_out),
                                                           std::filesystem::absolute(cfg_out).parent_path());
                cfg["network"] = rel.string();
                nndm::write_file(cfg_out, cfg.dump(2) + "\n");
            }
            return 0;
        }

        const nndm::PipelineConfig cfg = configure(o);
        const std::filesystem::path outdir = cfg.output;
        if (abstract->parsed()) {
            const auto r = nndm::run_pipeline(cfg, {false, false, false}, progress(o));
            std::filesystem::create_directories(outdir);
            nndm::write_file(outdir / "imdp.json", nndm::imdp_json(r.abstraction->imdp()).dump() + "\n");
            return 0;
        }
        nndm::PipelineStages stages;
        stages.refine = !synth->parsed();
        stages.validate = run->parsed() || simulate->parsed();
        const auto r = nndm::run_pipeline(cfg, stages, progress(o));
        nndm::emit_outputs(r, outdir);
        if (simulate->parsed() && !x0.empty())
            write_path(r, parse_point(x0), steps, cfg.seed, outdir / "path.csv");
        if (r.validation && r.validation->flagged > 0) {
            std::cerr << r.validation->flagged << " region(s) with Monte Carlo interval outside the certified bounds\n";
            return 2;
        }
        return 0;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
