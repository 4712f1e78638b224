// Train a one-step critic with VGL and compare against the known optimum.

#include "vgl/harness.hpp"

#include <iostream>

int main() {
  using namespace vgl;

  const ToyProblem m(1, 0.0);  // one step, no action cost
  auto critic = exp1_critic(0.0);
  SeededRng rng(42);
  critic.set_weights(Vec<2>(rng.uniform(-10, 10), rng.uniform(-10, 10)));
  const Vec<1> x0 = Vec<1>::Zero();

  for (int it = 1; it <= 50; ++it) {
    const auto tr = rollout(m, critic, x0);
    const auto u = vgl::vgl(tr, compute_targets(tr, 0.0), 0.5, OmegaMode::kIdentity);
    critic.set_weights(sgd_apply(critic.weights(), u));
    if (it % 10 == 0)
      std::cout << "iteration " << it << "  w1 " << fmt(critic.weights()[0]) << "  R "
                << fmt(tr.total_reward()) << '\n';
  }

  const auto tr = rollout(m, critic, x0);
  std::cout << "greedy action " << fmt(tr.steps[0].a) << " (optimal " << fmt(toy_optimal_action(m, 0, 0.0))
            << ")\n\n";
  std::cout << trajectory_tsv(tr, 0.0);
}
