#ifndef HEMB_SRC_COMPENSATED_SUM_HPP_
#define HEMB_SRC_COMPENSATED_SUM_HPP_

#include <cmath>

namespace hemb::detail {

// Neumaier compensated summation.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::fabs(sum_) >= std::fabs(x)) {
      comp_ += (sum_ - t) + x;
    } else {
      comp_ += (x - t) + sum_;
    }
    sum_ = t;
  }
  // Adds a * b together with its exact rounding error.
  void add_product(double a, double b) {
    const double p = a * b;
    add(p);
    add(std::fma(a, b, -p));
  }
  double value() const { return sum_ + comp_; }
  // value() / n with one correction step on the remainder.
  double mean(double n) const {
    const double q = (sum_ + comp_) / n;
    const double r = std::fma(-q, n, sum_) + comp_;
    return q + r / n;
  }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

}  // namespace hemb::detail

#endif  // HEMB_SRC_COMPENSATED_SUM_HPP_
