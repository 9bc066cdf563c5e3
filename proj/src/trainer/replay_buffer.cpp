#include "rppgm/trainer/replay_buffer.hpp"

#include "rppgm/util/error.hpp"

namespace rppgm::trainer {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) throw Error("replay buffer capacity must be positive");
}

void ReplayBuffer::add_episode(Episode episode) {
    if (episode.steps.empty()) return;
    if (episode.steps.size() > capacity_) {
        throw Error("episode of " + std::to_string(episode.steps.size()) + " steps exceeds buffer capacity " +
                    std::to_string(capacity_));
    }
    steps_ += episode.steps.size();
    episodes_.push_back(std::move(episode));
    while (steps_ > capacity_) {
        steps_ -= episodes_.front().steps.size();
        episodes_.pop_front();
    }
}

void ReplayBuffer::clear() {
    episodes_.clear();
    steps_ = 0;
}

std::size_t ReplayBuffer::latest_tag() const {
    if (episodes_.empty()) throw Error("replay buffer is empty");
    std::size_t tag = 0;
    for (const auto& e : episodes_) tag = std::max(tag, e.policy_tag);
    return tag;
}

const Transition& ReplayBuffer::transition(std::size_t index) const {
    for (const auto& e : episodes_) {
        if (index < e.steps.size()) return e.steps[index];
        index -= e.steps.size();
    }
    throw Error("replay buffer index out of range");
}

const Transition& ReplayBuffer::sample_transition(Rng& rng) const {
    if (empty()) throw Error("cannot sample from an empty replay buffer");
    return transition(rng.index(steps_));
}

std::vector<const Transition*> ReplayBuffer::sample_segment(std::size_t len, Rng& rng) const {
    if (len == 0) throw Error("segment length must be positive");
    const std::size_t tag = latest_tag();
    std::size_t windows = 0;
    for (const auto& e : episodes_)
        if (e.policy_tag == tag && e.steps.size() >= len) windows += e.steps.size() - len + 1;
    if (windows == 0) {
        throw Error("no episode from the latest policy has " + std::to_string(len) + " consecutive steps");
    }
    std::size_t pick = rng.index(windows);
    for (const auto& e : episodes_) {
        if (e.policy_tag != tag || e.steps.size() < len) continue;
        const std::size_t w = e.steps.size() - len + 1;
        if (pick < w) {
            std::vector<const Transition*> out;
            for (std::size_t i = 0; i < len; ++i) out.push_back(&e.steps[pick + i]);
            return out;
        }
        pick -= w;
    }
    throw Error("segment sampling failed");
}

} // namespace rppgm::trainer
