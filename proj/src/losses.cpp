#include "dqrp/losses.hpp"

#include "dqrp/error.hpp"

namespace dqrp {

namespace {

void require_nonempty(const Batch& data) {
  if (data.size() == 0 || data.x.cols() == 0) {
    throw UsageError("empirical quantities need a nonempty sample");
  }
}

}  // namespace

CheckLossParams::CheckLossParams(double tau) : tau_(tau) {
  if (!(tau > 0.0 && tau < 1.0)) {
    throw DomainError("quantile level must lie in (0, 1)");
  }
}

double check_loss(double tau, double residual) {
  const CheckLossParams params(tau);
  return residual * (params.tau() - (residual <= 0.0 ? 1.0 : 0.0));
}

RiskAndPenalty risk_and_penalty(const ReQUNetwork& net, const Batch& data) {
  require_nonempty(data);
  const ValueAndTangent vt = forward_with_tangent_batch(net, stack_inputs(data.x, data.xi));
  RiskAndPenalty out;
  const auto n = static_cast<Eigen::Index>(data.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    out.risk += check_loss(data.xi(i), data.y(i) - vt.value(i));
    if (vt.tangent(i) < 0.0) out.penalty -= vt.tangent(i);
  }
  out.risk /= static_cast<double>(n);
  out.penalty /= static_cast<double>(n);
  return out;
}

double empirical_risk(const ReQUNetwork& net, const Batch& data) {
  require_nonempty(data);
  const Vector f = forward_batch(net, stack_inputs(data.x, data.xi));
  double total = 0.0;
  for (Eigen::Index i = 0; i < f.size(); ++i) total += check_loss(data.xi(i), data.y(i) - f(i));
  return total / static_cast<double>(f.size());
}

double empirical_penalty(const ReQUNetwork& net, const Batch& data) {
  if (data.x.cols() == 0) {
    throw UsageError("empirical quantities need a nonempty sample");
  }
  const ValueAndTangent vt = forward_with_tangent_batch(net, stack_inputs(data.x, data.xi));
  double total = 0.0;
  for (Eigen::Index i = 0; i < vt.tangent.size(); ++i) {
    if (vt.tangent(i) < 0.0) total -= vt.tangent(i);
  }
  return total / static_cast<double>(vt.tangent.size());
}

double penalized_empirical_risk(const ReQUNetwork& net, const Batch& data, double lambda) {
  if (lambda < 0.0) {
    throw UsageError("lambda must be nonnegative");
  }
  const RiskAndPenalty rp = risk_and_penalty(net, data);
  return rp.risk + lambda * rp.penalty;
}

}  // namespace dqrp
