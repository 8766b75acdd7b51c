#pragma once

#include <cmath>
#include <limits>
#include <vector>

namespace gfn {

/// One edge of a rollout. `energy` is the transition energy E(s->s'),
/// recorded at sampling time when the objective needs it; NaN otherwise.
template <class State>
struct Transition {
  State from;
  State to;
  int action = -1;
  double energy = std::numeric_limits<double>::quiet_NaN();

  bool has_energy() const { return !std::isnan(energy); }
};

template <class State>
struct Trajectory {
  std::vector<Transition<State>> steps;
  bool complete = false;
  /// log R(x) of the terminal state; NaN for incomplete trajectories.
  double log_reward = std::numeric_limits<double>::quiet_NaN();

  std::size_t length() const { return steps.size(); }
  const State& last_state() const { return steps.back().to; }
};

}  // namespace gfn
