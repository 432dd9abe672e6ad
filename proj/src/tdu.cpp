#include "uacer/tdu.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace uacer {
namespace {

bool uses_stddev(AggregationMode m) {
  switch (m) {
    case AggregationMode::kTduExponential:
    case AggregationMode::kConstantOptimistic:
    case AggregationMode::kLinearDecay:
    case AggregationMode::kPessimismDec:
    case AggregationMode::kPessimismInc:
      return true;
    default:
      return false;
  }
}

bool is_min_mode(AggregationMode m) {
  return m == AggregationMode::kPessimismMin || m == AggregationMode::kMinOfAll;
}

double exponential_beta(const TduSchedule& s, int n) {
  return s.beta0 * std::exp(-s.lambda * static_cast<double>(n) /
                            static_cast<double>(s.total_iterations)) +
         s.beta_min;
}

}  // namespace

const char* to_string(AggregationMode m) {
  switch (m) {
    case AggregationMode::kTduExponential: return "tdu_exponential";
    case AggregationMode::kUncertaintyAgnostic: return "uncertainty_agnostic";
    case AggregationMode::kConstantOptimistic: return "constant_optimistic";
    case AggregationMode::kLinearDecay: return "linear_decay";
    case AggregationMode::kPessimismDec: return "pessimism_dec";
    case AggregationMode::kPessimismInc: return "pessimism_inc";
    case AggregationMode::kPessimismMin: return "pessimism_min";
    case AggregationMode::kMinOfAll: return "min_of_all";
  }
  return "?";
}

AggregationMode aggregation_mode_from_string(const std::string& name) {
  for (AggregationMode m :
       {AggregationMode::kTduExponential, AggregationMode::kUncertaintyAgnostic,
        AggregationMode::kConstantOptimistic, AggregationMode::kLinearDecay,
        AggregationMode::kPessimismDec, AggregationMode::kPessimismInc,
        AggregationMode::kPessimismMin, AggregationMode::kMinOfAll})
    if (name == to_string(m)) return m;
  throw std::invalid_argument("unknown aggregation mode '" + name + "'");
}

void TduSchedule::validate() const {
  if (!(beta0 > 0.0 && beta0 <= 1.0))
    throw std::invalid_argument("TduSchedule: beta0 must be in (0, 1]");
  if (beta_min < 0.0) throw std::invalid_argument("TduSchedule: beta_min must be >= 0");
  if (lambda <= 0.0) throw std::invalid_argument("TduSchedule: lambda must be positive");
  if (total_iterations <= 0)
    throw std::invalid_argument("TduSchedule: total_iterations must be positive");
  if ((mode == AggregationMode::kTduExponential || mode == AggregationMode::kLinearDecay) &&
      std::abs(beta0 + beta_min - 1.0) > 1e-12)
    throw std::invalid_argument("TduSchedule: beta0 + beta_min must equal 1 for decaying modes");
}

double beta(const TduSchedule& schedule, int n) {
  if (n < 0 || n > schedule.total_iterations)
    throw std::out_of_range("beta: iteration " + std::to_string(n) + " outside [0, " +
                            std::to_string(schedule.total_iterations) + "]");
  switch (schedule.mode) {
    case AggregationMode::kTduExponential:
      return exponential_beta(schedule, n);
    case AggregationMode::kUncertaintyAgnostic:
      return 0.0;
    case AggregationMode::kConstantOptimistic:
      return 1.0;
    case AggregationMode::kLinearDecay:
      return 1.0 - static_cast<double>(n) / static_cast<double>(schedule.total_iterations);
    case AggregationMode::kPessimismDec:
      // exponential shape renormalized to run exactly 1 -> 0
      return (exponential_beta(schedule, n) - exponential_beta(schedule, schedule.total_iterations)) /
             (1.0 - exponential_beta(schedule, schedule.total_iterations));
    case AggregationMode::kPessimismInc:
      // mirror image, exactly 0 -> 1
      return (1.0 - exponential_beta(schedule, n)) /
             (1.0 - exponential_beta(schedule, schedule.total_iterations));
    case AggregationMode::kPessimismMin:
    case AggregationMode::kMinOfAll:
      return 0.0;  // no stddev weighting in the min modes
  }
  return 0.0;
}

AggregateResult aggregate(const std::vector<double>& q_values, const TduSchedule& schedule,
                          int n) {
  const std::size_t k = q_values.size();
  if (k == 0) throw std::invalid_argument("aggregate: empty input");
  if (k < 2 && uses_stddev(schedule.mode))
    throw std::invalid_argument("aggregate: variance-based modes need K >= 2 critics");
  for (double q : q_values)
    if (!std::isfinite(q)) throw std::domain_error("aggregate: non-finite critic value");

  // canonical accumulation order: bitwise invariance under input permutation
  std::vector<double> sorted = q_values;
  std::sort(sorted.begin(), sorted.end());

  double sum = 0.0;
  for (double q : sorted) sum += q;
  const double mean = sum / static_cast<double>(k);
  double ss = 0.0;
  for (double q : sorted) ss += (q - mean) * (q - mean);
  const double stddev = k >= 2 ? std::sqrt(ss / static_cast<double>(k - 1)) : 0.0;

  AggregateResult r{mean, stddev, 0.0, mean};
  if (is_min_mode(schedule.mode)) {
    r.value = sorted.front();
    r.beta = stddev > 0.0 ? (r.value - mean) / stddev : 0.0;  // effective signed weight
    return r;
  }
  const double b = beta(schedule, n);
  const bool pessimistic = schedule.mode == AggregationMode::kPessimismDec ||
                           schedule.mode == AggregationMode::kPessimismInc;
  r.beta = pessimistic ? -b : b;
  r.value = mean + r.beta * stddev;
  return r;
}

std::vector<AggregateResult> aggregate_batch(const std::vector<std::vector<double>>& q_matrix,
                                             const TduSchedule& schedule, int n) {
  std::vector<AggregateResult> out;
  out.reserve(q_matrix.size());
  for (const std::vector<double>& row : q_matrix) {
    if (!q_matrix.empty() && row.size() != q_matrix.front().size())
      throw std::invalid_argument("aggregate_batch: ragged rows");
    out.push_back(aggregate(row, schedule, n));
  }
  return out;
}

std::vector<double> aggregate_weights(const std::vector<double>& q_values,
                                      const TduSchedule& schedule, int n) {
  const AggregateResult r = aggregate(q_values, schedule, n);
  const std::size_t k = q_values.size();
  std::vector<double> w(k, 0.0);
  if (is_min_mode(schedule.mode)) {
    const std::size_t arg =
        std::min_element(q_values.begin(), q_values.end()) - q_values.begin();
    w[arg] = 1.0;
    return w;
  }
  // d/dq_k [mean + beta * stddev] = 1/K + beta * (q_k - mean) / ((K-1) * stddev)
  for (std::size_t i = 0; i < k; ++i) {
    w[i] = 1.0 / static_cast<double>(k);
    if (r.stddev > 0.0)
      w[i] += r.beta * (q_values[i] - r.mean) /
              (static_cast<double>(k - 1) * r.stddev);
  }
  return w;
}

}  // namespace uacer
