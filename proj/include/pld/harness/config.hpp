#pragma once
// Experiment configuration: a flat `key = value` text format, the same keys
// the CLI flags map onto, and a snapshot writer whose output parses back to
// the identical configuration.

#include "pld/planner/experiment.hpp"
#include "pld/sac/experiment.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace pld {

/// Bad flags, keys, kinds or malformed values (as opposed to invariant violations).
struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ExperimentKind { policy, planning };

inline std::string_view experiment_kind_name(ExperimentKind k) { return k == ExperimentKind::policy ? "policy" : "planning"; }

using KeyValues = std::vector<std::pair<std::string, std::string>>;

struct ExperimentConfig {
    ExperimentKind kind = ExperimentKind::policy;
    std::vector<std::uint64_t> seeds{0};
    PolicyExperimentConfig policy;
    PlanningExperimentConfig planning;

    EnvKind env() const { return kind == ExperimentKind::policy ? policy.env : planning.env; }
    std::string model_name() const {
        return std::string(kind == ExperimentKind::policy ? policy_model_name(policy.model) : planning_model_name(planning.model));
    }
};

// ---- value parsing and formatting

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

template <class T>
T parse_number(std::string_view key, std::string_view v) {
    T out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw UsageError("bad value for '" + std::string(key) + "': '" + std::string(v) + "'");
    return out;
}

inline bool parse_bool(std::string_view key, std::string_view v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw UsageError("bad boolean for '" + std::string(key) + "': '" + std::string(v) + "'");
}

/// Shortest round-trip representation.
inline std::string format_double(double x) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, r.ptr);
}

inline GridPos parse_pos(std::string_view key, std::string_view v) {
    const auto comma = v.find(',');
    if (comma == std::string_view::npos) throw UsageError("bad position for '" + std::string(key) + "': expected x,y");
    return {parse_number<int>(key, trim(v.substr(0, comma))), parse_number<int>(key, trim(v.substr(comma + 1)))};
}

inline std::string format_pos(GridPos p) { return std::to_string(p.x) + "," + std::to_string(p.y); }

/// "a..b" (inclusive), "a,b,c" or a single seed.
inline std::vector<std::uint64_t> parse_seeds(std::string_view v) {
    std::vector<std::uint64_t> out;
    if (const auto dots = v.find(".."); dots != std::string_view::npos) {
        const auto a = parse_number<std::uint64_t>("seeds", trim(v.substr(0, dots)));
        const auto b = parse_number<std::uint64_t>("seeds", trim(v.substr(dots + 2)));
        if (b < a) throw UsageError("seeds: empty range");
        for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
        return out;
    }
    std::size_t start = 0;
    while (start <= v.size()) {
        const auto comma = v.find(',', start);
        const auto part = v.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        out.push_back(parse_number<std::uint64_t>("seeds", trim(part)));
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string format_seeds(const std::vector<std::uint64_t>& seeds) {
    bool contiguous = seeds.size() > 1;
    for (std::size_t i = 1; i < seeds.size(); ++i) contiguous = contiguous && seeds[i] == seeds[i - 1] + 1;
    if (contiguous) return std::to_string(seeds.front()) + ".." + std::to_string(seeds.back());
    std::string out;
    for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? "," : "") + std::to_string(seeds[i]);
    return out;
}

/// Lines of `key = value`; `#` starts a comment.
inline KeyValues parse_config_text(std::string_view text) {
    KeyValues out;
    std::istringstream in{std::string(text)};
    std::string line;
    int number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        if (trim(line).empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw UsageError("config line " + std::to_string(number) + ": expected key = value");
        std::string key = trim(std::string_view(line).substr(0, eq));
        if (key.empty()) throw UsageError("config line " + std::to_string(number) + ": empty key");
        out.emplace_back(std::move(key), trim(std::string_view(line).substr(eq + 1)));
    }
    return out;
}

inline KeyValues read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw UsageError("cannot read config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str());
}

// ---- the key table

namespace detail {

enum class Scope { common, policy, planning };

struct ConfigKey {
    const char* name;
    Scope scope;
    std::function<void(ExperimentConfig&, std::string_view)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

inline ParsimonyConfig& pars(ExperimentConfig& c) {
    return c.kind == ExperimentKind::policy ? c.policy.parsimony : c.planning.parsimony;
}
inline const ParsimonyConfig& pars(const ExperimentConfig& c) {
    return c.kind == ExperimentKind::policy ? c.policy.parsimony : c.planning.parsimony;
}
inline BaselineConfig& base(ExperimentConfig& c) { return c.kind == ExperimentKind::policy ? c.policy.vae : c.planning.baseline; }
inline const BaselineConfig& base(const ExperimentConfig& c) {
    return c.kind == ExperimentKind::policy ? c.policy.vae : c.planning.baseline;
}

// Setters for values shared by every dynamics model.
template <class F>
void each_dynamics(ExperimentConfig& c, F f) {
    f(pars(c), base(c));
}

inline std::string on_off(bool b) { return b ? "true" : "false"; }

inline std::vector<ConfigKey> config_keys() {
    using S = Scope;
    using E = ExperimentConfig;
    using V = std::string_view;
    auto i = [](const char* k, V v) { return parse_number<int>(k, v); };
    auto d = [](const char* k, V v) { return parse_number<double>(k, v); };
    std::vector<ConfigKey> keys{
        {"env", S::common,
         [](E& c, V v) {
             EnvKind k;
             try {
                 k = parse_env_kind(v);
             } catch (const std::invalid_argument& e) {
                 throw UsageError(e.what());
             }
             c.policy.env = c.planning.env = k;
             c.policy.episodes = default_policy_episodes(k);
             c.policy.sac.batch_size = default_sac_batch(k);
         },
         [](const E& c) { return std::string(env_kind_name(c.env())); }},
        {"model", S::common,
         [](E& c, V v) {
             try {
                 if (c.kind == ExperimentKind::policy) c.policy.model = parse_policy_model(v);
                 else c.planning.model = parse_planning_model(v);
             } catch (const std::invalid_argument& e) {
                 throw UsageError(e.what());
             }
         },
         [](const E& c) { return c.model_name(); }},
        {"seeds", S::common, [](E& c, V v) { c.seeds = parse_seeds(v); }, [](const E& c) { return format_seeds(c.seeds); }},
        {"obs_dim", S::common, [i](E& c, V v) { c.policy.obs_dim = c.planning.obs_dim = i("obs_dim", v); },
         [](const E& c) { return std::to_string(c.kind == ExperimentKind::policy ? c.policy.obs_dim : c.planning.obs_dim); }},
        {"start", S::common,
         [](E& c, V v) {
             if (v == "default") c.policy.layout.start = c.planning.layout.start = std::nullopt;
             else c.policy.layout.start = c.planning.layout.start = parse_pos("start", v);
         },
         [](const E& c) { return c.policy.layout.start ? format_pos(*c.policy.layout.start) : std::string("default"); }},
        {"goal", S::common,
         [](E& c, V v) {
             if (v == "default") c.policy.layout.goal = c.planning.layout.goal = std::nullopt;
             else c.policy.layout.goal = c.planning.layout.goal = parse_pos("goal", v);
         },
         [](const E& c) { return c.policy.layout.goal ? format_pos(*c.policy.layout.goal) : std::string("default"); }},
        {"doorways", S::common,
         [](E& c, V v) {
             if (v == "default") {
                 c.policy.layout.doorways = c.planning.layout.doorways = std::nullopt;
                 return;
             }
             std::vector<GridPos> doors;
             std::size_t start = 0;
             while (start < v.size()) {
                 const auto semi = v.find(';', start);
                 doors.push_back(parse_pos("doorways", trim(v.substr(start, semi == V::npos ? V::npos : semi - start))));
                 if (semi == V::npos) break;
                 start = semi + 1;
             }
             c.policy.layout.doorways = c.planning.layout.doorways = doors;
         },
         [](const E& c) {
             if (!c.policy.layout.doorways) return std::string("default");
             std::string out;
             for (const GridPos& p : *c.policy.layout.doorways) out += (out.empty() ? "" : ";") + format_pos(p);
             return out;
         }},
        {"latent_dim", S::common,
         [i](E& c, V v) { each_dynamics(c, [&](ParsimonyConfig& p, BaselineConfig& b) { p.latent_dim = b.latent_dim = i("latent_dim", v); }); },
         [](const E& c) { return std::to_string(pars(c).latent_dim); }},
        {"code_dim", S::common, [i](E& c, V v) { pars(c).code_dim = i("code_dim", v); },
         [](const E& c) { return std::to_string(pars(c).code_dim); }},
        {"hidden_width", S::common,
         [i](E& c, V v) {
             each_dynamics(c, [&](ParsimonyConfig& p, BaselineConfig& b) { p.hidden_width = b.hidden_width = i("hidden_width", v); });
         },
         [](const E& c) { return std::to_string(pars(c).hidden_width); }},
        {"hidden_layers", S::common,
         [i](E& c, V v) {
             each_dynamics(c,
                           [&](ParsimonyConfig& p, BaselineConfig& b) { p.hidden_layers = b.hidden_layers = i("hidden_layers", v); });
         },
         [](const E& c) { return std::to_string(pars(c).hidden_layers); }},
        {"recurrent_width", S::common, [i](E& c, V v) { base(c).recurrent_width = i("recurrent_width", v); },
         [](const E& c) { return std::to_string(base(c).recurrent_width); }},
        {"parsimony_beta", S::common, [d](E& c, V v) { pars(c).beta = d("parsimony_beta", v); },
         [](const E& c) { return format_double(pars(c).beta); }},
        {"baseline_beta", S::common, [d](E& c, V v) { base(c).beta = d("baseline_beta", v); },
         [](const E& c) { return format_double(base(c).beta); }},
        {"family", S::common,
         [](E& c, V v) {
             TransformFamily f;
             try {
                 f = parse_family(v);
             } catch (const std::invalid_argument& e) {
                 throw UsageError(e.what());
             }
             each_dynamics(c, [&](ParsimonyConfig& p, BaselineConfig& b) { p.family = b.family = f; });
         },
         [](const E& c) { return std::string(family_name(pars(c).family)); }},
        {"variant", S::common,
         [](E& c, V v) {
             try {
                 pars(c).variant = parse_variant(v);
             } catch (const std::invalid_argument& e) {
                 throw UsageError(e.what());
             }
         },
         [](const E& c) { return std::string(variant_name(pars(c).variant)); }},
        {"tau_s", S::common,
         [d](E& c, V v) { each_dynamics(c, [&](ParsimonyConfig& p, BaselineConfig& b) { p.tau_s = b.tau_s = d("tau_s", v); }); },
         [](const E& c) { return format_double(pars(c).tau_s); }},
        {"tau_z", S::common,
         [d](E& c, V v) { each_dynamics(c, [&](ParsimonyConfig& p, BaselineConfig& b) { p.tau_z = b.tau_z = d("tau_z", v); }); },
         [](const E& c) { return format_double(pars(c).tau_z); }},
        {"mse_only", S::common, [](E& c, V v) { pars(c).mse_only = parse_bool("mse_only", v); },
         [](const E& c) { return on_off(pars(c).mse_only); }},
        {"dynamics_lr", S::common,
         [d](E& c, V v) {
             each_dynamics(c,
                           [&](ParsimonyConfig& p, BaselineConfig& b) { p.learning_rate = b.learning_rate = d("dynamics_lr", v); });
         },
         [](const E& c) { return format_double(pars(c).learning_rate); }},
        {"dynamics_steps", S::common,
         [i](E& c, V v) {
             (c.kind == ExperimentKind::policy ? c.policy.dynamics_steps : c.planning.dynamics_steps) = i("dynamics_steps", v);
         },
         [](const E& c) {
             return std::to_string(c.kind == ExperimentKind::policy ? c.policy.dynamics_steps : c.planning.dynamics_steps);
         }},
        {"dynamics_batch", S::common,
         [i](E& c, V v) {
             (c.kind == ExperimentKind::policy ? c.policy.dynamics_batch : c.planning.dynamics_batch) = i("dynamics_batch", v);
         },
         [](const E& c) {
             return std::to_string(c.kind == ExperimentKind::policy ? c.policy.dynamics_batch : c.planning.dynamics_batch);
         }},
        {"replay_capacity", S::common,
         [](E& c, V v) {
             c.policy.replay_capacity = c.planning.replay_capacity = parse_number<std::size_t>("replay_capacity", v);
         },
         [](const E& c) { return std::to_string(c.policy.replay_capacity); }},

        {"episodes", S::policy, [i](E& c, V v) { c.policy.episodes = i("episodes", v); },
         [](const E& c) { return std::to_string(c.policy.episodes); }},
        {"episode_length", S::policy, [i](E& c, V v) { c.policy.episode_length = i("episode_length", v); },
         [](const E& c) { return std::to_string(c.policy.episode_length); }},
        {"detach_latents", S::policy, [](E& c, V v) { c.policy.detach_latents = parse_bool("detach_latents", v); },
         [](const E& c) { return on_off(c.policy.detach_latents); }},
        {"sac_alpha", S::policy, [d](E& c, V v) { c.policy.sac.alpha = d("sac_alpha", v); },
         [](const E& c) { return format_double(c.policy.sac.alpha); }},
        {"sac_tau", S::policy, [d](E& c, V v) { c.policy.sac.tau = d("sac_tau", v); },
         [](const E& c) { return format_double(c.policy.sac.tau); }},
        {"sac_gamma", S::policy, [d](E& c, V v) { c.policy.sac.gamma = d("sac_gamma", v); },
         [](const E& c) { return format_double(c.policy.sac.gamma); }},
        {"sac_lr", S::policy, [d](E& c, V v) { c.policy.sac.learning_rate = d("sac_lr", v); },
         [](const E& c) { return format_double(c.policy.sac.learning_rate); }},
        {"sac_hidden_width", S::policy, [i](E& c, V v) { c.policy.sac.hidden_width = i("sac_hidden_width", v); },
         [](const E& c) { return std::to_string(c.policy.sac.hidden_width); }},
        {"sac_hidden_layers", S::policy, [i](E& c, V v) { c.policy.sac.hidden_layers = i("sac_hidden_layers", v); },
         [](const E& c) { return std::to_string(c.policy.sac.hidden_layers); }},
        {"policy_steps", S::policy, [i](E& c, V v) { c.policy.sac.policy_steps = i("policy_steps", v); },
         [](const E& c) { return std::to_string(c.policy.sac.policy_steps); }},
        {"sac_batch", S::policy, [i](E& c, V v) { c.policy.sac.batch_size = i("sac_batch", v); },
         [](const E& c) { return std::to_string(c.policy.sac.batch_size); }},

        {"tasks", S::planning, [i](E& c, V v) { c.planning.tasks = i("tasks", v); },
         [](const E& c) { return std::to_string(c.planning.tasks); }},
        {"steps_per_task", S::planning, [i](E& c, V v) { c.planning.steps_per_task = i("steps_per_task", v); },
         [](const E& c) { return std::to_string(c.planning.steps_per_task); }},
        {"epsilon", S::planning,
         [d](E& c, V v) {
             if (v == "schedule") c.planning.fixed_epsilon = std::nullopt;
             else c.planning.fixed_epsilon = d("epsilon", v);
         },
         [](const E& c) { return c.planning.fixed_epsilon ? format_double(*c.planning.fixed_epsilon) : std::string("schedule"); }},
        {"epsilon_power", S::planning, [d](E& c, V v) { c.planning.epsilon_power = d("epsilon_power", v); },
         [](const E& c) { return format_double(c.planning.epsilon_power); }},
        {"rnn_sequence_length", S::planning, [i](E& c, V v) { c.planning.rnn_sequence_length = i("rnn_sequence_length", v); },
         [](const E& c) { return std::to_string(c.planning.rnn_sequence_length); }},
        {"cem_horizon", S::planning, [i](E& c, V v) { c.planning.cem.horizon = i("cem_horizon", v); },
         [](const E& c) { return std::to_string(c.planning.cem.horizon); }},
        {"cem_iterations", S::planning, [i](E& c, V v) { c.planning.cem.iterations = i("cem_iterations", v); },
         [](const E& c) { return std::to_string(c.planning.cem.iterations); }},
        {"cem_samples", S::planning, [i](E& c, V v) { c.planning.cem.samples = i("cem_samples", v); },
         [](const E& c) { return std::to_string(c.planning.cem.samples); }},
        {"cem_elites", S::planning, [i](E& c, V v) { c.planning.cem.elites = i("cem_elites", v); },
         [](const E& c) { return std::to_string(c.planning.cem.elites); }},
    };
    return keys;
}

inline bool key_applies(Scope s, ExperimentKind k) {
    return s == Scope::common || (s == Scope::policy) == (k == ExperimentKind::policy);
}

}  // namespace detail

/// Key names accepted for an experiment kind, in snapshot order.
inline std::vector<std::string> config_key_names(ExperimentKind kind) {
    std::vector<std::string> out{"experiment"};
    for (const auto& k : detail::config_keys())
        if (detail::key_applies(k.scope, kind)) out.emplace_back(k.name);
    out.emplace_back("beta");
    return out;
}

/// Defaults for the kind, then `env`, then `model`, then the remaining keys in
/// order. `beta` sets the beta of the selected model.
inline ExperimentConfig build_experiment_config(ExperimentKind kind, const KeyValues& kv) {
    ExperimentConfig cfg;
    cfg.kind = kind;
    const std::vector<detail::ConfigKey> keys = detail::config_keys();
    auto find = [&](std::string_view name) -> const detail::ConfigKey* {
        for (const auto& k : keys)
            if (name == k.name) return detail::key_applies(k.scope, kind) ? &k : nullptr;
        return nullptr;
    };
    // env defaults must not clobber explicit values, so env goes first.
    for (const char* first : {"env", "model"})
        for (const auto& [key, value] : kv)
            if (key == first) find(first)->set(cfg, value);
    for (const auto& [key, value] : kv) {
        if (key == "env" || key == "model") continue;
        if (key == "experiment") {
            if (value != experiment_kind_name(kind))
                throw UsageError("config is for a " + value + " experiment, not " + std::string(experiment_kind_name(kind)));
            continue;
        }
        if (key == "beta") {
            const double b = parse_number<double>("beta", value);
            const bool code_model = kind == ExperimentKind::policy ? cfg.policy.model == PolicyModelKind::parsimony
                                                                   : cfg.planning.model == PlanningModelKind::parsimony;
            (code_model ? detail::pars(cfg).beta : detail::base(cfg).beta) = b;
            continue;
        }
        const detail::ConfigKey* k = find(key);
        if (!k) throw UsageError("unknown config key '" + key + "' for " + std::string(experiment_kind_name(kind)) + " experiments");
        k->set(cfg, value);
    }
    return cfg;
}

/// Every key with its resolved value; parses back to the same configuration.
inline std::string config_snapshot(const ExperimentConfig& cfg) {
    std::string out = "experiment = " + std::string(experiment_kind_name(cfg.kind)) + "\n";
    for (const auto& k : detail::config_keys())
        if (detail::key_applies(k.scope, cfg.kind)) out += std::string(k.name) + " = " + k.get(cfg) + "\n";
    return out;
}

/// Throws std::invalid_argument on invariant violations.
inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.seeds.empty()) throw std::invalid_argument("at least one seed is required");
    if (cfg.kind == ExperimentKind::policy) {
        cfg.policy.parsimony.validate();
        cfg.policy.vae.validate();
        cfg.policy.sac.validate();
        if (cfg.policy.episodes < 1 || cfg.policy.episode_length < 1 || cfg.policy.dynamics_steps < 0 ||
            cfg.policy.dynamics_batch < 2 || cfg.policy.obs_dim < 1)
            throw std::invalid_argument("policy experiment: invalid counts");
    } else {
        cfg.planning.parsimony.validate();
        cfg.planning.baseline.validate();
        cfg.planning.validate();
        if (cfg.planning.obs_dim < 1) throw std::invalid_argument("planning experiment: obs_dim must be >= 1");
    }
    build_env(cfg.env(), 0, 1, cfg.kind == ExperimentKind::policy ? cfg.policy.layout : cfg.planning.layout);
}

}  // namespace pld
