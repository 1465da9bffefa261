// pld: train, plan, sweep, plot and self-test from the command line.
// Exit codes: 0 success, 1 usage error, 2 invariant violation.

#include "property_suite.hpp"

#include "pld/harness.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace {

using namespace pld;

struct CommonFlags {
    std::optional<std::string> env, model, seeds, config, out;
    std::optional<double> beta;
    bool oracle = false;
};

void add_common(CLI::App* sub, CommonFlags& f, bool planning) {
    sub->add_option("--env", f.env, "gridworld | four_rooms | torus");
    sub->add_option("--model", f.model, planning ? "parsimony | rnn | ssm | oracle" : "parsimony | baseline | vae");
    sub->add_option("--seeds", f.seeds, "seed list: 3, 0..9 or 1,4,7");
    sub->add_option("--beta", f.beta, "regularisation weight of the selected model");
    sub->add_option("--config", f.config, "key = value file; flags override its entries");
    sub->add_option("--out", f.out, "output directory");
}

KeyValues collect(const CommonFlags& f) {
    KeyValues kv;
    if (f.config) kv = read_config_file(*f.config);
    if (f.env) kv.emplace_back("env", *f.env);
    if (f.model) kv.emplace_back("model", *f.model);
    if (f.oracle) {
        if (f.model && *f.model != "oracle") throw UsageError("--oracle-dynamics conflicts with --model " + *f.model);
        kv.emplace_back("model", "oracle");
    }
    if (f.seeds) kv.emplace_back("seeds", *f.seeds);
    if (f.beta) kv.emplace_back("beta", format_double(*f.beta));
    return kv;
}

std::string default_out(const ExperimentConfig& cfg) {
    return "runs/" + std::string(experiment_kind_name(cfg.kind)) + "_" + std::string(env_kind_name(cfg.env())) + "_" +
           cfg.model_name();
}

std::optional<ExperimentKind> kind_in(const KeyValues& kv) {
    std::optional<ExperimentKind> kind;
    for (const auto& [k, v] : kv) {
        if (k != "experiment") continue;
        if (v == "policy") kind = ExperimentKind::policy;
        else if (v == "planning") kind = ExperimentKind::planning;
        else throw UsageError("unknown experiment kind '" + v + "'");
    }
    return kind;
}

int run_train(ExperimentKind kind, const CommonFlags& f) {
    const ExperimentConfig cfg = build_experiment_config(kind, collect(f));
    const std::string out = f.out.value_or(default_out(cfg));
    const RunSummary s = run_experiment(cfg, out, &std::cerr);
    std::cout << "wrote " << s.seeds.size() << " seed(s) to " << out << "; mean total " << s.mean_total << " +/- " << s.std_total
              << "\n";
    return 0;
}

int run_sweep(const CommonFlags& f, const std::optional<std::string>& experiment, const std::string& betas_text) {
    const KeyValues kv = collect(f);
    ExperimentKind kind = ExperimentKind::policy;
    if (const auto k = kind_in(kv)) kind = *k;
    if (experiment) {
        if (*experiment == "policy") kind = ExperimentKind::policy;
        else if (*experiment == "planning") kind = ExperimentKind::planning;
        else throw UsageError("--experiment must be policy or planning");
    }
    const ExperimentConfig cfg = build_experiment_config(kind, kv);
    const std::string model = cfg.model_name();
    if (model != "parsimony" && model != "vae") throw UsageError("sweep-beta applies to the parsimony model and the VAE");
    std::vector<double> betas;
    std::string_view rest = betas_text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        betas.push_back(parse_number<double>("betas", trim(rest.substr(0, comma))));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
    }
    if (betas.empty()) throw UsageError("--betas is empty");
    const std::string out = f.out.value_or("runs/sweep_" + std::string(env_kind_name(cfg.env())) + "_" + model);
    const double best = sweep_beta(cfg, betas, out, &std::cerr);
    std::cout << "best beta " << best << " (see " << out << "/sweep.csv)\n";
    return 0;
}

int run_selftest(const std::string& scratch) {
    std::vector<std::pair<std::string, suite::CheckResult>> results;
    auto record = [&](const std::string& name, const suite::CheckResult& r) {
        std::cout << (r.pass ? "PASS " : "FAIL ") << name << ": " << r.detail << std::endl;
        results.emplace_back(name, r);
    };
    record("rotation validity", suite::rotation_validity());
    record("matrix exponential oracle", suite::matrix_exp_oracle());
    record("gradient suite", suite::gradient_suite());
    record("KL identities", suite::kl_identities());
    record("environment oracle", suite::environment_oracle());
    suite::StochasticRunConfig quick;
    quick.hidden_width = 64;
    record("stochastic variant", suite::stochastic_variant(quick));
    record("determinism", suite::determinism(
                              [](const std::string& sub, const std::string& cfg_path, const std::string& out) {
                                  if (sub == "plot") return plot_runs({cfg_path}, out);
                                  const KeyValues kv = read_config_file(cfg_path);
                                  const ExperimentKind kind = *kind_in(kv);
                                  const ExperimentConfig cfg = build_experiment_config(kind, kv);
                                  if (sub == "sweep-beta") sweep_beta(cfg, {0.0, 0.5}, out);
                                  else run_experiment(cfg, out);
                              },
                              scratch));
    std::filesystem::remove_all(scratch);
    int failed = 0;
    for (const auto& [name, r] : results) failed += r.pass ? 0 : 1;
    std::cout << (failed ? std::to_string(failed) + " check(s) failed" : "all checks passed") << "\n";
    return failed ? 2 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Latent world models with parsimonious dynamics: experiments and checks"};
    app.set_version_flag("--version", version_stamp());
    app.require_subcommand(1);

    CommonFlags policy_flags, plan_flags, sweep_flags;
    auto* train = app.add_subcommand("train-policy", "SAC on a learned latent representation, one CSV per seed");
    add_common(train, policy_flags, false);
    auto* plan = app.add_subcommand("plan", "CEM planning with a learned dynamics model, one CSV per seed");
    add_common(plan, plan_flags, true);
    plan->add_flag("--oracle-dynamics", plan_flags.oracle, "plan with the true coordinates and transition rules");

    auto* sweep = app.add_subcommand("sweep-beta", "repeat a run for each beta and report the best");
    add_common(sweep, sweep_flags, false);
    std::optional<std::string> sweep_experiment;
    std::string betas = "0,0.1,0.5,1";
    sweep->add_option("--experiment", sweep_experiment, "policy (default) or planning");
    sweep->add_option("--betas", betas, "comma-separated beta values")->capture_default_str();

    auto* plot = app.add_subcommand("plot", "aggregate run directories into summary CSVs and an SVG");
    std::vector<std::string> plot_dirs;
    std::string plot_out = "runs/plot";
    plot->add_option("runs", plot_dirs, "run directories")->required();
    plot->add_option("--out", plot_out, "output directory")->capture_default_str();

    auto* selftest = app.add_subcommand("selftest", "run the property suite");
    std::string scratch = (std::filesystem::temp_directory_path() / "pld_selftest").string();
    selftest->add_option("--scratch", scratch, "temporary directory for the determinism check");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (*train) return run_train(ExperimentKind::policy, policy_flags);
        if (*plan) return run_train(ExperimentKind::planning, plan_flags);
        if (*sweep) return run_sweep(sweep_flags, sweep_experiment, betas);
        if (*plot) {
            plot_runs(plot_dirs, plot_out);
            std::cout << "wrote " << plot_out << "/plot.svg\n";
            return 0;
        }
        if (*selftest) return run_selftest(scratch);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
