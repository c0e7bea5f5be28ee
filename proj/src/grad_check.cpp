#include "kpstream/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace kpstream {

namespace {

double eval_loss(const LossBuilder& loss) {
  ad::Tape tape(false);
  return loss(tape).value()(0, 0);
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& loss, ParamStore& params, int probe_count, Rng& rng, double h) {
  params.zero_grad();
  {
    ad::Tape tape(true);
    tape.backward(loss(tape), params);
  }

  struct Probe {
    Param* param;
    const std::string* name;
    Eigen::Index index;
  };
  std::vector<Probe> all;
  for (auto& [name, p] : params) {
    for (Eigen::Index i = 0; i < p.value.size(); ++i) all.push_back({&p, &name, i});
  }
  if (probe_count > 0 && static_cast<std::size_t>(probe_count) < all.size()) {
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(static_cast<std::size_t>(probe_count));
  }

  GradCheckResult result;
  for (const auto& pr : all) {
    double& w = pr.param->value.data()[pr.index];
    const double saved = w;
    w = saved + h;
    const double up = eval_loss(loss);
    w = saved - h;
    const double down = eval_loss(loss);
    w = saved;
    const double numeric = (up - down) / (2.0 * h);
    const double analytic = pr.param->grad.data()[pr.index];
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-8});
    ++result.probes;
    if (rel > result.max_rel_error || result.worst_index < 0) {
      result.max_rel_error = std::max(rel, result.max_rel_error);
      result.worst_param = *pr.name;
      result.worst_index = pr.index;
      result.worst_analytic = analytic;
      result.worst_numeric = numeric;
    }
  }
  return result;
}

}  // namespace kpstream
