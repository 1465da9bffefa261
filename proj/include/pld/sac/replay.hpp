#pragma once
// Ring buffer of (s, a, r, s', done) tuples. Each slot also remembers the
// episode it came from and its step index so that contiguous sequences can be
// drawn for recurrent models.

#include "pld/baselines.hpp"
#include "pld/envs.hpp"
#include "pld/model/losses.hpp"

#include <random>
#include <vector>

namespace pld {

struct Transition {
    Vector obs;
    Action action = Action::stay;
    double reward = 0.0;
    Vector next_obs;
    bool done = false;
    int episode = 0;
    int step = 0;
};

struct SampledBatch {
    TransitionBatch transitions;
    Vector rewards;
    Vector done;
};

class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000) : capacity_(capacity) {
        if (capacity == 0) throw std::invalid_argument("replay capacity must be positive");
    }

    std::size_t capacity() const { return capacity_; }
    std::size_t size() const { return size_; }
    bool empty() const { return size_ == 0; }

    void add(const Transition& tr) {
        if (obs_.cols() == 0) {
            const Eigen::Index width = tr.obs.size();
            const Eigen::Index rows = static_cast<Eigen::Index>(std::min<std::size_t>(capacity_, 1024));
            obs_.resize(rows, width);
            next_obs_.resize(rows, width);
        }
        if (tr.obs.size() != obs_.cols() || tr.next_obs.size() != obs_.cols())
            throw ShapeError("ReplayBuffer::add: observation width changed");
        if (head_ >= static_cast<std::size_t>(obs_.rows())) grow();
        const auto i = static_cast<Eigen::Index>(head_);
        obs_.row(i) = tr.obs.transpose();
        next_obs_.row(i) = tr.next_obs.transpose();
        if (head_ < actions_.size()) {
            actions_[head_] = tr.action;
            rewards_[head_] = tr.reward;
            done_[head_] = tr.done;
            episode_[head_] = tr.episode;
            step_[head_] = tr.step;
        } else {
            actions_.push_back(tr.action);
            rewards_.push_back(tr.reward);
            done_.push_back(tr.done);
            episode_.push_back(tr.episode);
            step_.push_back(tr.step);
        }
        head_ = (head_ + 1) % capacity_;
        size_ = std::min(size_ + 1, capacity_);
    }

    Transition at(std::size_t i) const {
        check_index(i);
        const auto r = static_cast<Eigen::Index>(i);
        return {obs_.row(r).transpose(), actions_[i], rewards_[i], next_obs_.row(r).transpose(), done_[i], episode_[i], step_[i]};
    }

    /// Uniform sampling with replacement.
    std::vector<std::size_t> sample_indices(std::size_t count, Rng& rng) const {
        if (empty()) throw std::logic_error("ReplayBuffer: sampling from an empty buffer");
        std::uniform_int_distribution<std::size_t> pick(0, size_ - 1);
        std::vector<std::size_t> idx(count);
        for (std::size_t& i : idx) i = pick(rng);
        return idx;
    }

    SampledBatch gather(const std::vector<std::size_t>& idx) const {
        SampledBatch b;
        const auto n = static_cast<Eigen::Index>(idx.size());
        b.transitions.obs.resize(n, obs_.cols());
        b.transitions.next_obs.resize(n, obs_.cols());
        b.rewards.resize(n);
        b.done.resize(n);
        for (Eigen::Index k = 0; k < n; ++k) {
            const std::size_t i = idx[static_cast<std::size_t>(k)];
            check_index(i);
            b.transitions.obs.row(k) = obs_.row(static_cast<Eigen::Index>(i));
            b.transitions.next_obs.row(k) = next_obs_.row(static_cast<Eigen::Index>(i));
            b.transitions.actions.push_back(actions_[i]);
            b.rewards(k) = rewards_[i];
            b.done(k) = done_[i] ? 1.0 : 0.0;
        }
        return b;
    }

    SampledBatch sample(std::size_t count, Rng& rng) const { return gather(sample_indices(count, rng)); }

    /// `count` sequences of `length` transitions, each starting at the first
    /// step of an episode that is still stored in full.
    SequenceBatch sample_sequences(std::size_t count, int length, Rng& rng) const {
        if (length < 1) throw std::invalid_argument("sequence length must be >= 1");
        std::vector<std::size_t> starts;
        for (std::size_t i = 0; i < size_; ++i) {
            if (step_[i] != 0) continue;
            const std::size_t last = (i + static_cast<std::size_t>(length) - 1) % capacity_;
            if (static_cast<std::size_t>(length) > size_) continue;
            if (!holds(last) || episode_[last] != episode_[i] || step_[last] != length - 1) continue;
            if (last < i && size_ < capacity_) continue;
            starts.push_back(i);
        }
        if (starts.empty()) throw std::logic_error("ReplayBuffer: no stored episode is long enough");
        std::uniform_int_distribution<std::size_t> pick(0, starts.size() - 1);
        std::vector<std::size_t> chosen(count);
        for (std::size_t& c : chosen) c = starts[pick(rng)];

        SequenceBatch seq;
        const auto n = static_cast<Eigen::Index>(count);
        for (int k = 0; k <= length; ++k) seq.obs.emplace_back(n, obs_.cols());
        seq.actions.assign(static_cast<std::size_t>(length), std::vector<Action>(count));
        for (std::size_t j = 0; j < count; ++j) {
            for (int k = 0; k < length; ++k) {
                const std::size_t i = (chosen[j] + static_cast<std::size_t>(k)) % capacity_;
                seq.obs[static_cast<std::size_t>(k)].row(static_cast<Eigen::Index>(j)) = obs_.row(static_cast<Eigen::Index>(i));
                seq.actions[static_cast<std::size_t>(k)][j] = actions_[i];
                if (k + 1 == length)
                    seq.obs[static_cast<std::size_t>(length)].row(static_cast<Eigen::Index>(j)) =
                        next_obs_.row(static_cast<Eigen::Index>(i));
            }
        }
        return seq;
    }

private:
    bool holds(std::size_t i) const { return i < size_; }

    void check_index(std::size_t i) const {
        if (i >= size_) throw std::out_of_range("ReplayBuffer index");
    }

    void grow() {
        const Eigen::Index rows = static_cast<Eigen::Index>(
            std::min<std::size_t>(capacity_, static_cast<std::size_t>(obs_.rows()) * 2));
        obs_.conservativeResize(rows, Eigen::NoChange);
        next_obs_.conservativeResize(rows, Eigen::NoChange);
    }

    std::size_t capacity_;
    std::size_t size_ = 0;
    std::size_t head_ = 0;
    Matrix obs_;
    Matrix next_obs_;
    std::vector<Action> actions_;
    std::vector<double> rewards_;
    std::vector<bool> done_;
    std::vector<int> episode_;
    std::vector<int> step_;
};

}  // namespace pld
