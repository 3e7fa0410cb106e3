// Compares depth policies on a seeded toy SCF problem.
#include <iostream>

#include <fmt/format.h>

#include "apa/apa.hpp"

int main() {
  using namespace apa;
  const ToySCFProblem scf = make_toy_scf(7, 6, 2, 0.3);
  const Problem problem = scf.as_problem();
  const Vector x0 = scf.flatten(scf.core_guess());

  const std::vector<DepthPolicy> policies{FixedDepth{0}, FixedDepth{8}, Restarted{1e-4}, AdaptiveDepth{1e-4},
                                          SuperRestarted{1.0, 1.0 / (2.0 * problem.p + 1.0)},
                                          SuperAdaptive{1.0, max_super_adaptive_xi()}};
  std::cout << fmt::format("{:<40} {:>10} {:>6} {:>10} {:>8}\n", "policy", "status", "iters", "mean depth", "rate");
  for (const auto& policy : policies) {
    const RunResult run = accelerate(problem, x0, 1e-10, policy, Version::P, 300);
    std::cout << fmt::format("{:<40} {:>10} {:>6} {:>10.2f} {:>8.3f}\n", describe(policy), to_string(run.status),
                             run.iterations(), mean_depth(run.trace), convergence_rate(run.trace));
  }

  const Matrix density = scf.unflatten(accelerate(problem, x0, 1e-10, Restarted{1e-4}, Version::P, 300).x);
  std::cout << fmt::format("\n||[F(D), D]|| = {:.2e}, ||DSD - D|| = {:.2e}, |tr(SD) - N| = {:.2e}\n",
                           scf.commutator(density).norm(), scf.idempotency_defect(density),
                           scf.trace_defect(density));
}
