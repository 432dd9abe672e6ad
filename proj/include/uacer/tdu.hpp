#pragma once

#include <string>
#include <vector>

namespace uacer {

// Q-value aggregation variants. The exponential-decay mode is the method
// under study; the rest are the ablation baselines it is compared against.
enum class AggregationMode {
  kTduExponential,      // mean + beta(n) * std, beta decaying to beta_min
  kUncertaintyAgnostic, // plain ensemble mean
  kConstantOptimistic,  // mean + 1 * std
  kLinearDecay,         // mean + (1 - n/N) * std
  kPessimismDec,        // mean - beta * std, beta running 1 -> 0
  kPessimismInc,        // mean - beta * std, beta running 0 -> 1
  kPessimismMin,        // min over the ensemble
  kMinOfAll,            // min over the ensemble (ablation label)
};

const char* to_string(AggregationMode m);
AggregationMode aggregation_mode_from_string(const std::string& name);

struct TduSchedule {
  double beta0 = 0.85;
  double beta_min = 0.15;
  double lambda = 3.0;
  int total_iterations = 200;  // N
  AggregationMode mode = AggregationMode::kTduExponential;

  // Throws std::invalid_argument on out-of-range fields, and enforces
  // beta0 + beta_min == 1 for the exponential and linear modes.
  void validate() const;
};

struct AggregateResult {
  double mean;    // arithmetic mean over the K inputs
  double stddev;  // Bessel-corrected sample standard deviation
  double beta;    // signed weight applied to stddev (negative = pessimistic)
  double value;   // aggregated Q estimate
};

// Unsigned schedule weight at alternating-iteration n. Requires 0 <= n <= N.
double beta(const TduSchedule& schedule, int n);

// Aggregates K critic outputs. Mean/stddev accumulate over a sorted copy of
// the inputs so the result is bitwise permutation-invariant.
AggregateResult aggregate(const std::vector<double>& q_values, const TduSchedule& schedule,
                          int n);

// Row-wise aggregate; rows must be equal length.
std::vector<AggregateResult> aggregate_batch(const std::vector<std::vector<double>>& q_matrix,
                                             const TduSchedule& schedule, int n);

// d(value)/d(q_k) per input, in input order. For sigma = 0 the weighted modes
// fall back to the uniform 1/K subgradient; min modes return the argmin
// indicator (first occurrence on ties).
std::vector<double> aggregate_weights(const std::vector<double>& q_values,
                                      const TduSchedule& schedule, int n);

}  // namespace uacer
