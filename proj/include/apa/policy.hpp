#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <type_traits>
#include <variant>

#include <fmt/format.h>

#include "apa/core.hpp"
#include "apa/history.hpp"

namespace apa {

// m_{k+1} = min(m_k + 1, max_depth). max_depth == unbounded keeps the full history.
struct FixedDepth {
  static constexpr std::size_t unbounded = std::numeric_limits<std::size_t>::max();
  std::size_t max_depth = 0;
};

// Reset to depth 0 when tau * ||s|| > ||(I - P) s|| for the newest difference s.
struct Restarted {
  double tau = 1e-4;
};

// Keep the largest trailing window with delta * ||r_i|| < ||r_{k+1}||.
struct AdaptiveDepth {
  double delta = 1e-4;
};

// Restart test with tau = t0 * ||r_{k-m_k}||^zeta, zeta in (0, 1/(2p)).
struct SuperRestarted {
  double t0 = 1.0;
  double zeta = 0.0;
};

// Adaptive test with delta_i = d0 * ||r_i||^xi, xi in (0, sqrt(2) - 1].
struct SuperAdaptive {
  double d0 = 1.0;
  double xi = 0.0;
};

using DepthPolicy = std::variant<FixedDepth, Restarted, AdaptiveDepth, SuperRestarted, SuperAdaptive>;

inline bool is_restart_policy(const DepthPolicy& policy) {
  return std::holds_alternative<Restarted>(policy) || std::holds_alternative<SuperRestarted>(policy);
}

inline bool is_adaptive_policy(const DepthPolicy& policy) {
  return std::holds_alternative<AdaptiveDepth>(policy) || std::holds_alternative<SuperAdaptive>(policy);
}

// Restart policies work with differences against the oldest error (the
// restart test needs that span); all others use successive differences.
inline DiffMode diff_mode_for(const DepthPolicy& policy) {
  return is_restart_policy(policy) ? DiffMode::FromOldest : DiffMode::Successive;
}

inline double max_super_adaptive_xi() { return std::sqrt(2.0) - 1.0; }

// Range checks; zeta's upper bound depends on the error dimension p.
inline void validate(const DepthPolicy& policy, Index p) {
  std::visit(
      [p](const auto& pol) {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, Restarted>) {
          if (!(pol.tau > 0.0 && pol.tau < 1.0)) throw InputError("restarted: tau must lie in (0, 1)");
        } else if constexpr (std::is_same_v<T, AdaptiveDepth>) {
          if (!(pol.delta > 0.0 && pol.delta < 1.0)) throw InputError("adaptive: delta must lie in (0, 1)");
        } else if constexpr (std::is_same_v<T, SuperRestarted>) {
          if (!(pol.t0 > 0.0)) throw InputError("super-restarted: T0 must be positive");
          const double bound = 1.0 / (2.0 * static_cast<double>(p));
          if (!(pol.zeta > 0.0 && pol.zeta < bound)) {
            throw InputError(fmt::format("super-restarted: zeta must lie in (0, {}) for p = {}", bound, p));
          }
        } else if constexpr (std::is_same_v<T, SuperAdaptive>) {
          if (!(pol.d0 > 0.0)) throw InputError("super-adaptive: D0 must be positive");
          if (!(pol.xi > 0.0 && pol.xi <= max_super_adaptive_xi() + 1e-15)) {
            throw InputError("super-adaptive: xi must lie in (0, sqrt(2) - 1]");
          }
        }
      },
      policy);
}

// Restart parameter used by the test at a step whose oldest stored error has
// norm pivot_norm.
inline double restart_parameter(const DepthPolicy& policy, double pivot_norm) {
  if (const auto* r = std::get_if<Restarted>(&policy)) return r->tau;
  if (const auto* s = std::get_if<SuperRestarted>(&policy)) return s->t0 * std::pow(pivot_norm, s->zeta);
  return kNaN;
}

// Depth-adaptation parameter attached to a stored error of norm residual_norm.
inline double adaptive_parameter(const DepthPolicy& policy, double residual_norm) {
  if (const auto* a = std::get_if<AdaptiveDepth>(&policy)) return a->delta;
  if (const auto* s = std::get_if<SuperAdaptive>(&policy)) return s->d0 * std::pow(residual_norm, s->xi);
  return kNaN;
}

// Whether an iterate with error norm old_norm survives next to a new error of
// norm new_norm. Shared by the driver and the trace replay so both evaluate
// the same floating-point expression.
inline bool retains(const DepthPolicy& policy, double old_norm, double new_norm) {
  return adaptive_parameter(policy, old_norm) * old_norm < new_norm;
}

inline bool restart_fires(double tau, const ProjectionGap& pg) { return tau * pg.norm > pg.gap; }

inline std::string describe(const DepthPolicy& policy) {
  return std::visit(
      [](const auto& pol) -> std::string {
        using T = std::decay_t<decltype(pol)>;
        if constexpr (std::is_same_v<T, FixedDepth>) {
          return pol.max_depth == FixedDepth::unbounded ? std::string("fixed-inf")
                                                        : fmt::format("fixed-{}", pol.max_depth);
        } else if constexpr (std::is_same_v<T, Restarted>) {
          return fmt::format("restarted-{}", pol.tau);
        } else if constexpr (std::is_same_v<T, AdaptiveDepth>) {
          return fmt::format("adaptive-{}", pol.delta);
        } else if constexpr (std::is_same_v<T, SuperRestarted>) {
          return fmt::format("super-restarted-{}-{}", pol.t0, pol.zeta);
        } else {
          return fmt::format("super-adaptive-{}-{}", pol.d0, pol.xi);
        }
      },
      policy);
}

}  // namespace apa
