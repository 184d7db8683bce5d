#pragma once

#include <stdexcept>
#include <string>

namespace ekflow {

/// Base for failures raised while evaluating or integrating a flow.
class FlowError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The conformal density left the positive cone (ω_φ is no longer a metric).
class PositivityViolation : public FlowError {
 public:
  explicit PositivityViolation(double min_density)
      : FlowError("positivity violation: min density " + std::to_string(min_density)),
        min_density_(min_density) {}
  double min_density() const noexcept { return min_density_; }

 private:
  double min_density_;
};

class GreenSolveFailure : public FlowError {
 public:
  using FlowError::FlowError;
};

/// sup|s| crossed the configured ceiling.
class BlowUpSignal : public FlowError {
 public:
  explicit BlowUpSignal(double sup_abs_s)
      : FlowError("curvature blow-up: sup|s| = " + std::to_string(sup_abs_s)),
        sup_abs_s_(sup_abs_s) {}
  double sup_abs_s() const noexcept { return sup_abs_s_; }

 private:
  double sup_abs_s_;
};

class StepUnderflow : public FlowError {
 public:
  explicit StepUnderflow(double dt)
      : FlowError("time step underflow: dt = " + std::to_string(dt)), dt_(dt) {}
  double dt() const noexcept { return dt_; }

 private:
  double dt_;
};

class MonotonicityViolation : public FlowError {
 public:
  using FlowError::FlowError;
};

class NearDegenerateBasis : public FlowError {
 public:
  using FlowError::FlowError;
};

/// |Ω²| too small for the class scalar to be defined.
class DegenerateClass : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

}  // namespace ekflow
