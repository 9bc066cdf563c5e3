#pragma once

#include <cstddef>
#include <deque>
#include <vector>

#include "rppgm/util/rng.hpp"

namespace rppgm::trainer {

struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s_next;
    std::vector<double> env_noise;    // standard-normal draw used by the env
    std::vector<double> policy_noise; // standard-normal draw used by the policy

    bool operator==(const Transition&) const = default;
};

struct Episode {
    std::size_t policy_tag = 0; // iteration of the policy that generated it
    std::vector<Transition> steps;

    bool operator==(const Episode&) const = default;
};

// Whole episodes in arrival order. Adding an episode evicts the oldest
// episodes until the step count fits the capacity, so consecutive steps of a
// stored episode are never split.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity = 100000);

    void add_episode(Episode episode);
    void clear();

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t steps() const noexcept { return steps_; }
    bool empty() const noexcept { return steps_ == 0; }
    const std::deque<Episode>& episodes() const noexcept { return episodes_; }
    std::size_t latest_tag() const;

    // Uniform over stored transitions.
    const Transition& sample_transition(Rng& rng) const;
    const Transition& transition(std::size_t index) const;

    // Uniform over all windows of len consecutive steps lying inside one
    // episode carrying the latest policy tag. Throws if none exists.
    std::vector<const Transition*> sample_segment(std::size_t len, Rng& rng) const;

    bool operator==(const ReplayBuffer& o) const { return capacity_ == o.capacity_ && episodes_ == o.episodes_; }

private:
    std::size_t capacity_;
    std::size_t steps_ = 0;
    std::deque<Episode> episodes_;
};

} // namespace rppgm::trainer
