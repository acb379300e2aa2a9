#pragma once

#include "dqrp/network.hpp"

namespace dqrp {

/// Quantile level tau in (0, 1).
class CheckLossParams {
 public:
  explicit CheckLossParams(double tau);
  double tau() const noexcept { return tau_; }

 private:
  double tau_;
};

/// rho_tau(r) = r (tau - [r <= 0]). Throws DomainError unless 0 < tau < 1.
double check_loss(double tau, double residual);

/// (1/n) sum rho_{xi_i}(y_i - f(x_i, xi_i)).
double empirical_risk(const ReQUNetwork& net, const Batch& data);

/// (1/n) sum max(-df/dtau(x_i, xi_i), 0), using exact tangents. `data.y` is ignored.
double empirical_penalty(const ReQUNetwork& net, const Batch& data);

/// empirical_risk + lambda * empirical_penalty on the same sample.
double penalized_empirical_risk(const ReQUNetwork& net, const Batch& data, double lambda);

struct RiskAndPenalty {
  double risk = 0.0;
  double penalty = 0.0;
};

/// Both terms from a single value + tangent pass.
RiskAndPenalty risk_and_penalty(const ReQUNetwork& net, const Batch& data);

}  // namespace dqrp
