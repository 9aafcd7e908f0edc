#pragma once

#include <functional>
#include <vector>

#include "cmnet/rng.hpp"
#include "cmnet/tape.hpp"

namespace cmnet {

// Central-difference gradient checking. Double precision only; callers pass
// deterministic functions. Relative error of one coordinate is
//   |analytic - numeric| / max(1e-8, |analytic| + |numeric|).
struct GradCheckOptions {
  double eps = 1e-5;
  int max_coords = 40;     // coordinates sampled per tensor
  uint64_t seed = 0x9d2c;  // coordinate sampling stream
};

// f builds a SCALAR node from the leaf holding x. A fresh tape is used per
// evaluation. Returns the max relative error over sampled coordinates.
double grad_check(const std::function<NodeId(Tape<double>&, NodeId)>& f, const Tensor<double>& x,
                  const GradCheckOptions& opt = {});

// Convenience for vector-valued functions: reduces with a fixed random
// projection (sum of f(x) * r), then runs grad_check.
double grad_check_vec(const std::function<NodeId(Tape<double>&, NodeId)>& f, const Tensor<double>& x,
                      const GradCheckOptions& opt = {});

// Core primitive shared by the op-level and whole-model checks: perturbs
// chosen coordinates of `storage` in place (shared tensor storage), re-runs
// `loss_value`, and compares against `analytic`.
double fd_max_rel_err(const std::function<double()>& loss_value, Tensor<double> storage,
                      const Tensor<double>& analytic, const std::vector<int64_t>& coords, double eps);

// Distinct coordinate sample of size min(max_coords, numel).
std::vector<int64_t> sample_coords(int64_t numel, int max_coords, Rng rng);

double rel_err(double analytic, double numeric);

}  // namespace cmnet
