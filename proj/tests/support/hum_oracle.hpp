#pragma once

#include "kdvb/solvers.hpp"
#include "kdvb/weights.hpp"

#include <vector>

namespace kdvb::testing {

struct HumResult {
  Field control;
  Field state;
  double terminal_norm = 0.0;
  double free_terminal_norm = 0.0;
  double control_norm = 0.0;
  int iterations = 0;
  double relative_residual = 0.0;
};

/// Penalized HUM: minimize |v|^2 + |y(T)|^2 / eps over controls supported
/// in omega, solved on the dual side
///   (Lambda Lambda^* + eps I) phi_T = -y_free(T)
/// with a dense Gramian and refinement. Lambda maps v to y(T) with y0 = 0 and Lambda^*
/// is the discrete adjoint march restricted to omega.
HumResult penalized_hum(const LinearizedStepper &stepper, const Interval &omega,
                        const Vector &y0, double eps, double tol = 1e-12,
                        int maxit = 20);

} // namespace kdvb::testing
