#pragma once

// GFlowNet parameterization: a trunk network over the state encoding with
// three heads (forward-policy logits, backward-policy logits, scalar
// log-flow). The flow head is read as log F(s) in plain mode or as the
// forward-looking log F~(s) otherwise; terminal values are hard clamps and
// never learned, which is what lets forward-looking objectives train on
// trajectories that never reach a terminal state.
//
// TabularGfn stores one logit set per visited state. It is the workhorse for
// enumerable instances and for building exact triples out of flow oracles.

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "gfn/nn.hpp"
#include "gfn/rng.hpp"
#include "gfn/tensor.hpp"

namespace gfn {

enum class FlowMode { kPlain, kForwardLooking };
enum class BackwardMode { kLearned, kFixedUniform };

inline const char* to_string(FlowMode m) {
  return m == FlowMode::kPlain ? "plain" : "forward-looking";
}
inline const char* to_string(BackwardMode m) {
  return m == BackwardMode::kLearned ? "learned" : "uniform";
}

/// Tape-attached head values for one state. log_pf is null at terminals,
/// log_pb is null at the initial state.
struct Heads {
  TensorPtr log_pf;
  TensorPtr log_pb;
  TensorPtr log_flow;
};

/// Tape-free head values used for sampling and exact evaluation.
struct PlainHeads {
  std::vector<double> log_pf;
  std::vector<double> log_pb;
  double log_flow = 0.0;
};

namespace detail {

inline void plain_masked_log_softmax(std::vector<double>& logits,
                                     const std::vector<char>& mask) {
  double mx = kNegInf;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) mx = std::max(mx, logits[i]);
  if (mx == kNegInf) throw std::invalid_argument("masked softmax: no legal entry");
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i)
    if (mask[i]) sum += std::exp(logits[i] - mx);
  const double lse = mx + std::log(sum);
  for (std::size_t i = 0; i < logits.size(); ++i)
    logits[i] = mask[i] ? logits[i] - lse : kNegInf;
}

inline TensorPtr uniform_log_probs(const std::vector<char>& mask) {
  std::size_t legal = 0;
  for (char c : mask) legal += (c != 0);
  std::vector<double> v(mask.size(), kNegInf);
  const double lp = -std::log(static_cast<double>(legal));
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) v[i] = lp;
  return make_vector(std::move(v));
}

template <class Env>
double terminal_flow_clamp(FlowMode mode, const Env& env,
                           const typename Env::State& s) {
  // Plain: log F(x) = log R(x) = -E(x). Forward-looking: F~(x) = e^{E}R = 1.
  return mode == FlowMode::kPlain ? -env.state_energy(s) : 0.0;
}

}  // namespace detail

struct GfnModelConfig {
  std::size_t hidden = 64;
  std::size_t hidden_layers = 2;
  FlowMode flow_mode = FlowMode::kPlain;
  BackwardMode backward_mode = BackwardMode::kLearned;
};

/// Trunk MLP + heads packed into one output affine layer:
/// [0, A) forward logits, [A, A+P) backward logits, A+P the log-flow.
class MlpGfn {
 public:
  template <class Env>
  MlpGfn(const Env& env, const GfnModelConfig& cfg, std::uint64_t seed)
      : cfg_(cfg),
        action_space_(env.action_space()),
        parent_slots_(env.parent_slots()) {
    std::vector<std::size_t> dims;
    dims.push_back(env.encoding_dim());
    for (std::size_t l = 0; l < cfg.hidden_layers; ++l) dims.push_back(cfg.hidden);
    dims.push_back(static_cast<std::size_t>(action_space_ + parent_slots_ + 1));
    Rng rng(derive_seed(seed, 0x6d6f646aull));
    net_ = Mlp(std::move(dims), rng);
  }

  FlowMode flow_mode() const { return cfg_.flow_mode; }
  BackwardMode backward_mode() const { return cfg_.backward_mode; }
  const GfnModelConfig& config() const { return cfg_; }
  Mlp& net() { return net_; }
  const Mlp& net() const { return net_; }

  std::vector<TensorPtr> params() const { return net_.params(); }

  template <class Env>
  Heads heads(const Env& env, const typename Env::State& s) const {
    Heads h;
    const bool terminal = env.is_terminal(s);
    const bool initial = env.depth(s) == 0;
    TensorPtr out;
    if (!terminal || (!initial && cfg_.backward_mode == BackwardMode::kLearned)) {
      std::vector<double> enc;
      env.encode(s, enc);
      out = net_.forward(make_vector(std::move(enc)));
    }
    if (!terminal) {
      std::vector<char> mask;
      env.legal_action_mask(s, mask);
      h.log_pf = masked_log_softmax(slice(out, 0, action_space_), mask);
    }
    if (!initial) {
      std::vector<char> mask;
      env.parent_slot_mask(s, mask);
      h.log_pb = cfg_.backward_mode == BackwardMode::kLearned
                     ? masked_log_softmax(slice(out, action_space_, parent_slots_), mask)
                     : detail::uniform_log_probs(mask);
    }
    h.log_flow = terminal
                     ? make_scalar(detail::terminal_flow_clamp(cfg_.flow_mode, env, s))
                     : index(out, static_cast<std::size_t>(action_space_ + parent_slots_));
    return h;
  }

  /// forward logits are divided by `temperature` before masking+normalizing;
  /// training losses always use temperature 1 through heads().
  template <class Env>
  PlainHeads plain_heads(const Env& env, const typename Env::State& s,
                         double temperature = 1.0) const {
    PlainHeads h;
    const bool terminal = env.is_terminal(s);
    const bool initial = env.depth(s) == 0;
    std::vector<double> out;
    if (!terminal || (!initial && cfg_.backward_mode == BackwardMode::kLearned)) {
      std::vector<double> enc;
      env.encode(s, enc);
      net_.forward_plain(enc, out);
    }
    if (!terminal) {
      std::vector<char> mask;
      env.legal_action_mask(s, mask);
      h.log_pf.assign(out.begin(), out.begin() + action_space_);
      if (temperature != 1.0)
        for (auto& v : h.log_pf) v /= temperature;
      detail::plain_masked_log_softmax(h.log_pf, mask);
    }
    if (!initial) {
      std::vector<char> mask;
      env.parent_slot_mask(s, mask);
      if (cfg_.backward_mode == BackwardMode::kLearned) {
        h.log_pb.assign(out.begin() + action_space_,
                        out.begin() + action_space_ + parent_slots_);
        detail::plain_masked_log_softmax(h.log_pb, mask);
      } else {
        std::size_t legal = 0;
        for (char c : mask) legal += (c != 0);
        h.log_pb.assign(mask.size(), kNegInf);
        for (std::size_t i = 0; i < mask.size(); ++i)
          if (mask[i]) h.log_pb[i] = -std::log(static_cast<double>(legal));
      }
    }
    h.log_flow = terminal ? detail::terminal_flow_clamp(cfg_.flow_mode, env, s)
                          : out[static_cast<std::size_t>(action_space_ + parent_slots_)];
    return h;
  }

 private:
  GfnModelConfig cfg_;
  int action_space_;
  int parent_slots_;
  Mlp net_;
};

/// One logit set per state, created on first visit (zero-initialized, i.e.
/// uniform policies and unit flows). set_* assign exact values for
/// oracle-built triples.
class TabularGfn {
 public:
  explicit TabularGfn(FlowMode mode = FlowMode::kPlain,
                      BackwardMode backward = BackwardMode::kLearned)
      : flow_mode_(mode), backward_mode_(backward) {}

  FlowMode flow_mode() const { return flow_mode_; }
  BackwardMode backward_mode() const { return backward_mode_; }

  template <class Env>
  Heads heads(const Env& env, const typename Env::State& s) {
    Entry& e = entry(env, s);
    Heads h;
    const bool terminal = env.is_terminal(s);
    if (!terminal) {
      std::vector<char> mask;
      env.legal_action_mask(s, mask);
      h.log_pf = masked_log_softmax(e.pf, mask);
    }
    if (env.depth(s) != 0) {
      std::vector<char> mask;
      env.parent_slot_mask(s, mask);
      h.log_pb = backward_mode_ == BackwardMode::kLearned
                     ? masked_log_softmax(e.pb, mask)
                     : detail::uniform_log_probs(mask);
    }
    h.log_flow = terminal
                     ? make_scalar(detail::terminal_flow_clamp(flow_mode_, env, s))
                     : e.flow;
    return h;
  }

  template <class Env>
  PlainHeads plain_heads(const Env& env, const typename Env::State& s,
                         double temperature = 1.0) {
    Heads h = heads(env, s);
    PlainHeads out;
    if (h.log_pf) {
      if (temperature != 1.0) {
        Entry& e = entry(env, s);
        std::vector<char> mask;
        env.legal_action_mask(s, mask);
        out.log_pf = e.pf->values;
        for (auto& v : out.log_pf) v /= temperature;
        detail::plain_masked_log_softmax(out.log_pf, mask);
      } else {
        out.log_pf = h.log_pf->values;
      }
    }
    if (h.log_pb) out.log_pb = h.log_pb->values;
    out.log_flow = h.log_flow->item();
    return out;
  }

  template <class Env>
  void set_forward_logits(const Env& env, const typename Env::State& s,
                          const std::vector<double>& logits) {
    entry(env, s).pf->values = logits;
  }

  template <class Env>
  void set_backward_logits(const Env& env, const typename Env::State& s,
                           const std::vector<double>& logits) {
    entry(env, s).pb->values = logits;
  }

  template <class Env>
  void set_log_flow(const Env& env, const typename Env::State& s, double v) {
    entry(env, s).flow->values[0] = v;
  }

  template <class Env>
  void perturb_log_flow(const Env& env, const typename Env::State& s, double delta) {
    entry(env, s).flow->values[0] += delta;
  }

  std::vector<TensorPtr> params() const {
    std::vector<TensorPtr> out;
    for (const auto& key : order_) {
      const Entry& e = entries_.at(key);
      out.push_back(e.pf);
      out.push_back(e.pb);
      out.push_back(e.flow);
    }
    return out;
  }

 private:
  struct Entry {
    TensorPtr pf, pb, flow;
  };

  template <class Env>
  Entry& entry(const Env& env, const typename Env::State& s) {
    const std::string key = env.key(s);
    auto it = entries_.find(key);
    if (it == entries_.end()) {
      Entry e{make_leaf(std::vector<double>(env.action_space(), 0.0),
                        {static_cast<std::size_t>(env.action_space())}),
              make_leaf(std::vector<double>(env.parent_slots(), 0.0),
                        {static_cast<std::size_t>(env.parent_slots())}),
              make_leaf(std::vector<double>{0.0}, {1})};
      it = entries_.emplace(key, std::move(e)).first;
      order_.push_back(key);
    }
    return it->second;
  }

  FlowMode flow_mode_;
  BackwardMode backward_mode_;
  std::unordered_map<std::string, Entry> entries_;
  std::vector<std::string> order_;
};

/// Eq-9 style read-back of the plain flow from a forward-looking model:
/// log F(s) = log F~(s) - E(s).
template <class Model, class Env>
double reparam_log_flow(Model& model, const Env& env, const typename Env::State& s) {
  if (model.flow_mode() != FlowMode::kForwardLooking)
    throw std::invalid_argument("reparam_log_flow: model is not forward-looking");
  return model.plain_heads(env, s).log_flow - env.state_energy(s);
}

}  // namespace gfn
