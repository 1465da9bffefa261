#pragma once
// Orchestration: one output directory per experiment holding the config
// snapshot, one CSV (and checkpoint) per seed, a cross-seed summary and plot.
//
// Layout of <out>:
//   config.txt                    snapshot; `--config config.txt` re-runs it
//   run_info.txt                  version stamp and wall-clock (not compared)
//   <kind>_<env>_<model>_seed<k>.csv
//   <kind>_<env>_<model>_seed<k>.ckpt
//   latent_returns_seed<k>.csv    planning only
//   totals.csv                    seed,total,mean
//   summary.csv                   per episode/task mean and std across seeds
//   curve.svg

#include "pld/harness/checkpoint.hpp"
#include "pld/harness/config.hpp"
#include "pld/harness/results.hpp"

#include <chrono>
#include <ctime>
#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

#ifndef PLD_VERSION
#define PLD_VERSION "0.0.0"
#endif
#ifndef PLD_GIT_REV
#define PLD_GIT_REV "unknown"
#endif

namespace pld {

inline std::string version_stamp() { return std::string(PLD_VERSION) + " (" + PLD_GIT_REV + ")"; }

inline std::string run_stem(const ExperimentConfig& cfg, std::uint64_t seed) {
    return std::string(experiment_kind_name(cfg.kind)) + "_" + std::string(env_kind_name(cfg.env())) + "_" + cfg.model_name() +
           "_seed" + std::to_string(seed);
}

struct RunSummary {
    std::vector<std::uint64_t> seeds;
    std::vector<double> totals;  // per seed: summed return or score
    std::vector<double> means;   // per seed: mean per episode or task
    std::vector<std::vector<double>> curves;
    double mean_total = 0.0;
    double std_total = 0.0;
};

inline std::string totals_csv(const RunSummary& s) {
    std::string out = "seed,total,mean\n";
    for (std::size_t i = 0; i < s.seeds.size(); ++i)
        out += std::to_string(s.seeds[i]) + "," + format_double(s.totals[i]) + "," + format_double(s.means[i]) + "\n";
    return out;
}

/// Runs every seed of `cfg`, writing the layout above. `log` receives progress.
inline RunSummary run_experiment(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream* log = nullptr) {
    validate_experiment_config(cfg);
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const std::string snapshot = config_snapshot(cfg);
    write_text(out_dir + "/config.txt", snapshot);
    std::string info = "version = " + version_stamp() + "\n";
    {
        const std::time_t now = std::time(nullptr);
        char buf[64];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        info += "started = " + std::string(buf) + "\n";
    }

    RunSummary summary;
    for (std::uint64_t seed : cfg.seeds) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::string stem = out_dir + "/" + run_stem(cfg, seed);
        std::vector<double> curve;
        Checkpoint ckpt;
        if (cfg.kind == ExperimentKind::policy) {
            std::string csv = std::string(kPolicyCsvHeader) + "\n";
            PolicyModels models;
            const auto records = run_policy_experiment(
                cfg.policy, seed,
                [&](const EpisodeRecord& r) {
                    if (log && (r.episode + 1) % 25 == 0)
                        *log << "  seed " << seed << " episode " << r.episode + 1 << " return " << r.episode_return << std::endl;
                },
                &models);
            for (const EpisodeRecord& r : records) {
                csv += policy_csv_row(seed, r) + "\n";
                curve.push_back(r.episode_return);
            }
            write_text(stem + ".csv", csv);
            ckpt = make_checkpoint("policy/" + cfg.model_name(), snapshot, models.parameters());
        } else {
            std::string csv = std::string(kPlanningCsvHeader) + "\n";
            std::string latent = std::string(kLatentCsvHeader) + "\n";
            std::unique_ptr<LatentDynamics> dyn;
            const auto records = run_planning_experiment(
                cfg.planning, seed,
                [&](const TaskRecord& r) {
                    if (log && r.task % 5 == 0)
                        *log << "  seed " << seed << " task " << r.task << " score " << r.score << std::endl;
                },
                &dyn);
            for (const TaskRecord& r : records) {
                csv += planning_csv_row(seed, r) + "\n";
                latent += latent_csv_row(seed, r) + "\n";
                curve.push_back(r.score);
            }
            write_text(stem + ".csv", csv);
            write_text(out_dir + "/latent_returns_seed" + std::to_string(seed) + ".csv", latent);
            ckpt = make_checkpoint("planning/" + cfg.model_name(), snapshot, dyn->parameters());
        }
        save_checkpoint(stem + ".ckpt", ckpt);
        double total = 0.0;
        for (double v : curve) total += v;
        summary.seeds.push_back(seed);
        summary.totals.push_back(total);
        summary.means.push_back(curve.empty() ? 0.0 : total / static_cast<double>(curve.size()));
        summary.curves.push_back(std::move(curve));
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        info += "seed " + std::to_string(seed) + " seconds = " + format_double(std::round(secs * 10.0) / 10.0) + "\n";
        if (log) *log << "seed " << seed << ": total " << total << " (" << secs << " s)" << std::endl;
    }

    double m = 0.0, v = 0.0;
    for (double t : summary.totals) m += t;
    m /= static_cast<double>(summary.totals.size());
    for (double t : summary.totals) v += (t - m) * (t - m);
    summary.mean_total = m;
    summary.std_total = std::sqrt(v / static_cast<double>(summary.totals.size()));
    write_text(out_dir + "/totals.csv", totals_csv(summary));

    const bool policy = cfg.kind == ExperimentKind::policy;
    const SeriesSummary curves = summarize(summary.curves);
    write_text(out_dir + "/summary.csv", summary_csv(policy ? "episode" : "task", curves, policy ? 0 : 1));
    PlotSeries ps{cfg.model_name(), gaussian_filter(curves.mean), gaussian_filter(curves.stddev), policy ? 0 : 1};
    write_text(out_dir + "/curve.svg", render_svg({ps}, std::string(env_kind_name(cfg.env())) + " " + cfg.model_name(),
                                                   policy ? "episode" : "task", policy ? "return" : "score"));
    write_text(out_dir + "/run_info.txt", info);
    return summary;
}

/// Per-seed curves of a finished run directory, read back from its CSVs.
struct LoadedRun {
    std::string label;
    ExperimentKind kind = ExperimentKind::policy;
    std::vector<std::vector<double>> curves;
};

inline LoadedRun load_run(const std::string& dir) {
    namespace fs = std::filesystem;
    const KeyValues kv = read_config_file(dir + "/config.txt");
    LoadedRun run;
    std::string model;
    bool found_kind = false;
    for (const auto& [k, v] : kv) {
        if (k == "experiment") {
            if (v != "policy" && v != "planning") throw std::invalid_argument("run '" + dir + "': unknown experiment kind");
            run.kind = v == "policy" ? ExperimentKind::policy : ExperimentKind::planning;
            found_kind = true;
        }
        if (k == "model") model = v;
    }
    if (!found_kind) throw std::invalid_argument("run '" + dir + "': config.txt has no experiment kind");
    run.label = model + " (" + fs::path(dir).filename().string() + ")";
    const std::string prefix = std::string(experiment_kind_name(run.kind)) + "_";
    std::vector<std::string> files;
    for (const auto& e : fs::directory_iterator(dir)) {
        const std::string name = e.path().filename().string();
        if (name.rfind(prefix, 0) == 0 && e.path().extension() == ".csv") files.push_back(e.path().string());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) throw std::invalid_argument("run '" + dir + "': no per-seed CSV files");
    const std::string_view header = run.kind == ExperimentKind::policy ? kPolicyCsvHeader : kPlanningCsvHeader;
    for (const std::string& f : files) {
        const CsvTable t = read_csv(f);
        if (split_csv_line(header) != t.header) throw std::invalid_argument("'" + f + "': inconsistent schema");
        run.curves.push_back(t.numbers(run.kind == ExperimentKind::policy ? "return" : "score"));
    }
    return run;
}

/// Aggregates run directories of one kind into summary CSVs and one SVG.
inline void plot_runs(const std::vector<std::string>& dirs, const std::string& out_dir) {
    if (dirs.empty()) throw UsageError("plot: at least one run directory is required");
    std::filesystem::create_directories(out_dir);
    std::vector<PlotSeries> series;
    std::optional<ExperimentKind> kind;
    for (std::size_t i = 0; i < dirs.size(); ++i) {
        const LoadedRun run = load_run(dirs[i]);
        if (kind && *kind != run.kind) throw std::invalid_argument("plot: runs mix policy and planning schemas");
        kind = run.kind;
        const bool policy = run.kind == ExperimentKind::policy;
        const SeriesSummary s = summarize(run.curves);
        write_text(out_dir + "/summary_" + std::to_string(i) + ".csv", summary_csv(policy ? "episode" : "task", s, policy ? 0 : 1));
        series.push_back({run.label, gaussian_filter(s.mean), gaussian_filter(s.stddev), policy ? 0 : 1});
    }
    const bool policy = *kind == ExperimentKind::policy;
    write_text(out_dir + "/plot.svg", render_svg(series, policy ? "Policy learning" : "Planning", policy ? "episode" : "task",
                                                 policy ? "return (smoothed)" : "score (smoothed)"));
}

/// beta,mean_total,std_total for each swept beta; returns the best beta.
inline double sweep_beta(const ExperimentConfig& base, const std::vector<double>& betas, const std::string& out_dir,
                         std::ostream* log = nullptr) {
    std::filesystem::create_directories(out_dir);
    std::string csv = "beta,mean_total,std_total\n";
    double best_beta = betas.front(), best = -std::numeric_limits<double>::infinity();
    for (double b : betas) {
        ExperimentConfig cfg = base;
        const bool code_model = cfg.kind == ExperimentKind::policy ? cfg.policy.model == PolicyModelKind::parsimony
                                                                   : cfg.planning.model == PlanningModelKind::parsimony;
        if (cfg.kind == ExperimentKind::policy) (code_model ? cfg.policy.parsimony.beta : cfg.policy.vae.beta) = b;
        else (code_model ? cfg.planning.parsimony.beta : cfg.planning.baseline.beta) = b;
        if (log) *log << "beta " << b << std::endl;
        const RunSummary s = run_experiment(cfg, out_dir + "/beta_" + format_double(b), log);
        csv += format_double(b) + "," + format_double(s.mean_total) + "," + format_double(s.std_total) + "\n";
        if (s.mean_total > best) {
            best = s.mean_total;
            best_beta = b;
        }
    }
    write_text(out_dir + "/sweep.csv", csv);
    write_text(out_dir + "/best.txt", "beta = " + format_double(best_beta) + "\n");
    return best_beta;
}

}  // namespace pld
