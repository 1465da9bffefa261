#pragma once
// Navigation MDPs: 11x11 gridworld, 11x11 four rooms and 13x13 torus.
//
// Every cell emits a fixed random vector drawn once from N(0, I) at
// construction. The walled worlds append four wall bits ordered
// (LEFT, RIGHT, UP, DOWN). Axis convention: RIGHT = +x, UP = +y.
// Reward is a property of the occupied cell: +1 on the goal, -1 elsewhere.

#include "pld/diffmath/tape.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <queue>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace pld {

enum class Action : int { left = 0, right = 1, up = 2, down = 3, stay = 4 };

inline constexpr int kNumActions = 5;
inline constexpr std::array<Action, kNumActions> kAllActions{Action::left, Action::right, Action::up, Action::down,
                                                             Action::stay};

inline int action_index(Action a) { return static_cast<int>(a); }

inline Action action_from_index(int i) {
    if (i < 0 || i >= kNumActions) throw std::out_of_range("action index " + std::to_string(i));
    return static_cast<Action>(i);
}

inline std::string_view action_name(Action a) {
    switch (a) {
        case Action::left: return "LEFT";
        case Action::right: return "RIGHT";
        case Action::up: return "UP";
        case Action::down: return "DOWN";
        case Action::stay: return "STAY";
    }
    return "?";
}

inline Vector one_hot(Action a) {
    Vector v = Vector::Zero(kNumActions);
    v(action_index(a)) = 1.0;
    return v;
}

/// One one-hot row per action: (n x 5).
inline Matrix one_hot_rows(std::span<const Action> actions) {
    Matrix m = Matrix::Zero(static_cast<Eigen::Index>(actions.size()), kNumActions);
    for (std::size_t i = 0; i < actions.size(); ++i) m(static_cast<Eigen::Index>(i), action_index(actions[i])) = 1.0;
    return m;
}

enum class EnvKind { gridworld, four_rooms, torus };

inline std::string_view env_kind_name(EnvKind k) {
    switch (k) {
        case EnvKind::gridworld: return "gridworld";
        case EnvKind::four_rooms: return "four_rooms";
        case EnvKind::torus: return "torus";
    }
    return "?";
}

inline EnvKind parse_env_kind(std::string_view s) {
    if (s == "gridworld") return EnvKind::gridworld;
    if (s == "four_rooms") return EnvKind::four_rooms;
    if (s == "torus") return EnvKind::torus;
    throw std::invalid_argument("unknown environment kind '" + std::string(s) + "'");
}

struct GridPos {
    int x = 0;
    int y = 0;
    friend bool operator==(const GridPos&, const GridPos&) = default;
};

/// Optional overrides of the per-kind start, goal and four-rooms doorways.
struct EnvLayout {
    std::optional<GridPos> start;
    std::optional<GridPos> goal;
    std::optional<std::vector<GridPos>> doorways;
};

struct StepResult {
    GridPos next;
    double reward = 0.0;
    Vector observation;
};

class Env {
public:
    EnvKind kind() const { return kind_; }
    int side() const { return side_; }
    int num_cells() const { return side_ * side_; }
    /// Width of the Gaussian part of each observation.
    int obs_dim() const { return obs_dim_; }
    /// Full observation width (Gaussian part plus wall bits where present).
    int observation_size() const { return static_cast<int>(table_.cols()); }
    bool has_wall_bits() const { return kind_ != EnvKind::torus; }
    GridPos start() const { return start_; }
    GridPos goal() const { return goal_; }
    std::uint64_t seed() const { return seed_; }

    bool valid(GridPos p) const { return p.x >= 0 && p.y >= 0 && p.x < side_ && p.y < side_; }

    int cell_index(GridPos p) const {
        check(p);
        return p.y * side_ + p.x;
    }

    GridPos cell_pos(int index) const {
        if (index < 0 || index >= num_cells()) throw std::out_of_range("cell index " + std::to_string(index));
        return {index % side_, index / side_};
    }

    /// True when a cardinal move from p crosses a wall. STAY is never blocked.
    bool blocked(GridPos p, Action a) const {
        check(p);
        if (a == Action::stay) return false;
        return walls_[static_cast<std::size_t>(cell_index(p))][static_cast<std::size_t>(action_index(a))];
    }

    bool has_walls() const {
        for (const auto& w : walls_)
            for (bool b : w)
                if (b) return true;
        return false;
    }

    GridPos move(GridPos p, Action a) const {
        check(p);
        if (a == Action::stay || blocked(p, a)) return p;
        GridPos q = p;
        switch (a) {
            case Action::left: --q.x; break;
            case Action::right: ++q.x; break;
            case Action::up: ++q.y; break;
            case Action::down: --q.y; break;
            case Action::stay: break;
        }
        q.x = ((q.x % side_) + side_) % side_;
        q.y = ((q.y % side_) + side_) % side_;
        return q;
    }

    double reward(GridPos p) const {
        check(p);
        return p == goal_ ? 1.0 : -1.0;
    }

    /// Same scheme against an arbitrary goal cell.
    double reward(GridPos p, GridPos goal) const {
        check(p);
        check(goal);
        return p == goal ? 1.0 : -1.0;
    }

    /// The reward belongs to the state occupied when the action is taken.
    StepResult step(GridPos p, Action a) const {
        const GridPos next = move(p, a);
        return {next, reward(p), observe(next)};
    }

    Vector observe(GridPos p) const { return table_.row(cell_index(p)).transpose(); }

    /// One observation row per cell, in cell_index order.
    const Matrix& observation_table() const { return table_; }

    /// Breadth-first distances from `from` to every cell (-1 when unreachable).
    std::vector<int> bfs_distances(GridPos from) const {
        std::vector<int> dist(static_cast<std::size_t>(num_cells()), -1);
        std::queue<GridPos> frontier;
        dist[static_cast<std::size_t>(cell_index(from))] = 0;
        frontier.push(from);
        while (!frontier.empty()) {
            const GridPos p = frontier.front();
            frontier.pop();
            const int d = dist[static_cast<std::size_t>(cell_index(p))];
            for (Action a : kAllActions) {
                const GridPos q = move(p, a);
                int& dq = dist[static_cast<std::size_t>(cell_index(q))];
                if (dq < 0) {
                    dq = d + 1;
                    frontier.push(q);
                }
            }
        }
        return dist;
    }

    int shortest_path(GridPos from, GridPos to) const {
        const int d = bfs_distances(from)[static_cast<std::size_t>(cell_index(to))];
        if (d < 0) throw std::runtime_error("shortest_path: target unreachable");
        return d;
    }

    /// Some action that decreases the BFS distance to `to` (STAY when already there).
    Action greedy_action(GridPos from, GridPos to) const {
        if (from == to) return Action::stay;
        const std::vector<int> to_goal = bfs_distances(to);  // moves are symmetric
        const int here = to_goal[static_cast<std::size_t>(cell_index(from))];
        for (Action a : kAllActions) {
            if (to_goal[static_cast<std::size_t>(cell_index(move(from, a)))] == here - 1) return a;
        }
        throw std::runtime_error("greedy_action: target unreachable");
    }

private:
    friend Env build_env(EnvKind, std::uint64_t, int, const EnvLayout&);

    void check(GridPos p) const {
        if (!valid(p)) {
            throw std::invalid_argument("invalid position (" + std::to_string(p.x) + "," + std::to_string(p.y) + ")");
        }
    }

    void block_edge(GridPos p, Action a) {
        walls_[static_cast<std::size_t>(p.y * side_ + p.x)][static_cast<std::size_t>(action_index(a))] = true;
    }

    void open_edge(GridPos p, Action a) {
        walls_[static_cast<std::size_t>(p.y * side_ + p.x)][static_cast<std::size_t>(action_index(a))] = false;
    }

    EnvKind kind_ = EnvKind::gridworld;
    int side_ = 11;
    int obs_dim_ = 0;
    std::uint64_t seed_ = 0;
    GridPos start_;
    GridPos goal_;
    std::vector<std::array<bool, 4>> walls_;
    Matrix table_;
};

inline std::vector<GridPos> default_doorways() { return {{5, 2}, {5, 8}, {2, 5}, {8, 5}}; }

/// Deterministic in (kind, seed, obs_dim, layout).
///
/// Four rooms: a vertical wall runs along the west edge of column side/2 and a
/// horizontal wall along the south edge of row side/2. A doorway cell on
/// column side/2 opens its west edge; one on row side/2 opens its south edge.
inline Env build_env(EnvKind kind, std::uint64_t seed, int obs_dim, const EnvLayout& layout = {}) {
    if (obs_dim < 1) throw std::invalid_argument("obs_dim must be >= 1");
    Env env;
    env.kind_ = kind;
    env.side_ = kind == EnvKind::torus ? 13 : 11;
    env.obs_dim_ = obs_dim;
    env.seed_ = seed;
    const int side = env.side_;
    env.walls_.assign(static_cast<std::size_t>(side * side), {false, false, false, false});

    if (kind != EnvKind::torus) {
        for (int i = 0; i < side; ++i) {
            env.block_edge({0, i}, Action::left);
            env.block_edge({side - 1, i}, Action::right);
            env.block_edge({i, side - 1}, Action::up);
            env.block_edge({i, 0}, Action::down);
        }
    }
    if (kind == EnvKind::four_rooms) {
        const int mid = side / 2;
        for (int i = 0; i < side; ++i) {
            env.block_edge({mid - 1, i}, Action::right);
            env.block_edge({mid, i}, Action::left);
            env.block_edge({i, mid - 1}, Action::up);
            env.block_edge({i, mid}, Action::down);
        }
        for (const GridPos& d : layout.doorways.value_or(default_doorways())) {
            if (!env.valid(d)) throw std::invalid_argument("doorway outside the grid");
            if (d.x == mid) {
                env.open_edge(d, Action::left);
                env.open_edge({mid - 1, d.y}, Action::right);
            }
            if (d.y == mid) {
                env.open_edge(d, Action::down);
                env.open_edge({d.x, mid - 1}, Action::up);
            }
            if (d.x != mid && d.y != mid) throw std::invalid_argument("doorway must lie on a partition");
        }
    }

    const GridPos default_goal = kind == EnvKind::torus ? GridPos{6, 6} : GridPos{10, 10};
    env.start_ = layout.start.value_or(GridPos{0, 0});
    env.goal_ = layout.goal.value_or(default_goal);
    if (!env.valid(env.start_) || !env.valid(env.goal_)) throw std::invalid_argument("start/goal outside the grid");

    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const int width = obs_dim + (env.has_wall_bits() ? 4 : 0);
    env.table_ = Matrix::Zero(side * side, width);
    for (int c = 0; c < side * side; ++c)
        for (int k = 0; k < obs_dim; ++k) env.table_(c, k) = normal(rng);
    if (env.has_wall_bits()) {
        for (int c = 0; c < side * side; ++c)
            for (int k = 0; k < 4; ++k) env.table_(c, obs_dim + k) = env.walls_[static_cast<std::size_t>(c)][static_cast<std::size_t>(k)] ? 1.0 : 0.0;
    }
    return env;
}

}  // namespace pld
