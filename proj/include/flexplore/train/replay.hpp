#pragma once

#include <deque>
#include <stdexcept>
#include <vector>

#include "flexplore/model/world_model.hpp"

namespace flexplore {

struct Transition {
    Vec s;
    HybridAction a;
    double r = 0.0;
    Vec s_next;
    bool done = false;
    bool perturbed = false;
};

// Ring of transitions organized by episode. Oldest transitions are evicted
// first; a partially evicted episode keeps its remaining contiguous tail, so
// sampled windows still never cross an episode boundary.
class ReplayBuffer {
public:
    explicit ReplayBuffer(size_t capacity = 100000) : capacity_(capacity) {}

    void push(const Transition& tr) {
        if (episodes_.empty() || episodes_.back().complete) episodes_.push_back({});
        episodes_.back().steps.push_back(tr);
        if (tr.done) episodes_.back().complete = true;
        ++size_;
        while (size_ > capacity_) {
            Episode& front = episodes_.front();
            front.steps.erase(front.steps.begin());
            --size_;
            if (front.steps.empty()) episodes_.pop_front();
        }
    }

    // closes the current episode without a done flag (truncation)
    void end_episode() {
        if (!episodes_.empty()) episodes_.back().complete = true;
    }

    size_t size() const { return size_; }
    size_t capacity() const { return capacity_; }
    size_t num_episodes() const { return episodes_.size(); }

    template <class F>
    void for_each_transition(F&& f) {
        for (auto& ep : episodes_)
            for (auto& tr : ep.steps) f(tr);
    }

    template <class F>
    void for_each_transition(F&& f) const {
        for (const auto& ep : episodes_)
            for (const auto& tr : ep.steps) f(tr);
    }

    struct WindowRef {
        int episode = 0;
        int start = 0;
    };

    // Valid window starts for horizon H: every start leaving a full window
    // inside a closed or in-progress episode, plus one padded window for a
    // completed episode shorter than H.
    std::vector<WindowRef> windows(int H) const {
        std::vector<WindowRef> w;
        for (size_t e = 0; e < episodes_.size(); ++e) {
            int len = static_cast<int>(episodes_[e].steps.size());
            if (len >= H) {
                for (int s = 0; s + H <= len; ++s) w.push_back({static_cast<int>(e), s});
            } else if (episodes_[e].complete && len >= 1 &&
                       episodes_[e].steps.back().done) {
                w.push_back({static_cast<int>(e), 0});
            }
        }
        return w;
    }

    Segment extract(const WindowRef& ref, int H, double gamma) const {
        const Episode& ep = episodes_[ref.episode];
        Segment seg;
        seg.gamma = gamma;
        int len = static_cast<int>(ep.steps.size());
        for (int t = ref.start; t < ref.start + H; ++t) {
            if (t < len) {
                const Transition& tr = ep.steps[t];
                seg.records.push_back({tr.s, tr.a, tr.r, tr.s_next, tr.done, false});
            } else {
                // repeat the terminal state with reward 0
                const Transition& last = ep.steps[len - 1];
                seg.records.push_back({last.s_next, last.a, 0.0, last.s_next, true, true});
            }
        }
        return seg;
    }

private:
    struct Episode {
        std::vector<Transition> steps;
        bool complete = false;
    };

    std::deque<Episode> episodes_;
    size_t size_ = 0;
    size_t capacity_;

    friend class ReplayAccess;
};

// Uniform over valid window starts, with replacement across the batch.
// Returns an empty batch when no window exists yet (warmup signal).
inline std::vector<Segment> sample_segments(const ReplayBuffer& buffer, int H, int batch_size,
                                            double gamma, Rng& rng) {
    if (H < 1 || batch_size < 1) throw std::invalid_argument("sample_segments: bad H/batch_size");
    auto w = buffer.windows(H);
    if (w.empty()) return {};
    std::vector<Segment> out;
    out.reserve(batch_size);
    for (int i = 0; i < batch_size; ++i)
        out.push_back(buffer.extract(w[rng.uniform_int(static_cast<int>(w.size()))], H, gamma));
    return out;
}

struct InjectStats {
    size_t selected = 0;
    size_t perturbed = 0;
    size_t skipped_zero_norm = 0;
};

// FGSM adversarial injection (replay-buffer variant): perturbs (s, z) of a
// ratio-fraction of stored transitions along the sign of the dynamics-error
// gradient, rescaled so ||delta||_2 / ||(s, z)||_2 equals `strength`.
// Next states and rewards stay untouched. Already perturbed transitions
// count toward the target fraction.
inline InjectStats inject_adversarial(ReplayBuffer& buffer, WorldModel& model, double ratio,
                                      double strength, Rng& rng) {
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("inject_adversarial: ratio in [0,1]");
    if (strength < 0.0) throw std::invalid_argument("inject_adversarial: strength >= 0");
    InjectStats stats;
    std::vector<Transition*> all;
    std::vector<Transition*> fresh;
    size_t already = 0;
    buffer.for_each_transition([&](Transition& tr) {
        all.push_back(&tr);
        if (tr.perturbed)
            ++already;
        else
            fresh.push_back(&tr);
    });
    auto target = static_cast<size_t>(std::llround(ratio * static_cast<double>(all.size())));
    size_t need = target > already ? target - already : 0;
    need = std::min(need, fresh.size());

    // partial Fisher-Yates for a uniform sample without replacement
    for (size_t i = 0; i < need; ++i) {
        size_t j = i + static_cast<size_t>(rng.uniform_int(static_cast<int>(fresh.size() - i)));
        std::swap(fresh[i], fresh[j]);
    }
    stats.selected = need;

    for (size_t i = 0; i < need; ++i) {
        Transition& tr = *fresh[i];
        Vec orig = concat(tr.s, tr.a.z);
        double base = norm2(orig);
        if (base == 0.0 && strength > 0.0) {
            ++stats.skipped_zero_norm;
            continue;
        }
        // gradient of the one-step dynamics error w.r.t. (s, z)
        Tape t;
        Tape::Id xs = t.leaf_row(tr.s);
        Vec onehot(model.cfg.K, 0.0);
        onehot[tr.a.k] = 1.0;
        Vec zpad(model.cfg.z_dim, 0.0);
        for (size_t j = 0; j < tr.a.z.size(); ++j) zpad[j] = tr.a.z[j];
        Tape::Id xz = t.leaf_row(zpad);
        Tape::Id inp = t.concat_cols(t.concat_cols(xs, t.leaf_row(onehot)), xz);
        Tape::Id out = mlp_forward_tape(t, model.dyn_spec, model.dyn, inp, false);
        Tape::Id mean = t.add(xs, t.slice_cols(out, 0, model.cfg.state_dim));
        Tape::Id err = t.sum_all(t.square(t.sub(mean, t.leaf_row(tr.s_next))));
        t.backward(err);

        Vec dir;
        dir.reserve(orig.size());
        for (double g : t.grad(xs).a) dir.push_back(g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
        for (size_t j = 0; j < tr.a.z.size(); ++j) {
            double g = t.grad(xz).a[j];
            dir.push_back(g > 0.0 ? 1.0 : (g < 0.0 ? -1.0 : 0.0));
        }
        double dn = norm2(dir);
        if (dn == 0.0) {
            ++stats.skipped_zero_norm;
            continue;
        }
        double scale = strength * base / dn;
        for (size_t j = 0; j < tr.s.size(); ++j) tr.s[j] += scale * dir[j];
        for (size_t j = 0; j < tr.a.z.size(); ++j) tr.a.z[j] += scale * dir[tr.s.size() + j];
        tr.perturbed = true;
        ++stats.perturbed;
    }
    return stats;
}

inline size_t count_perturbed(const ReplayBuffer& buffer) {
    size_t n = 0;
    buffer.for_each_transition([&](const Transition& tr) {
        if (tr.perturbed) ++n;
    });
    return n;
}

}  // namespace flexplore
