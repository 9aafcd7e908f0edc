#include "cmnet/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace cmnet {

double rel_err(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1e-8, std::abs(analytic) + std::abs(numeric));
}

std::vector<int64_t> sample_coords(int64_t numel, int max_coords, Rng rng) {
  std::vector<int64_t> out;
  if (numel <= max_coords) {
    out.resize(static_cast<size_t>(numel));
    for (int64_t i = 0; i < numel; ++i) out[static_cast<size_t>(i)] = i;
    return out;
  }
  std::unordered_set<int64_t> seen;
  while (static_cast<int>(out.size()) < max_coords) {
    int64_t c = static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(numel)));
    if (seen.insert(c).second) out.push_back(c);
  }
  std::sort(out.begin(), out.end());
  return out;
}

double fd_max_rel_err(const std::function<double()>& loss_value, Tensor<double> storage,
                      const Tensor<double>& analytic, const std::vector<int64_t>& coords, double eps) {
  double worst = 0.0;
  double* p = storage.data();
  for (int64_t c : coords) {
    const double keep = p[c];
    p[c] = keep + eps;
    const double fp = loss_value();
    p[c] = keep - eps;
    const double fm = loss_value();
    p[c] = keep;
    const double numeric = (fp - fm) / (2.0 * eps);
    worst = std::max(worst, rel_err(analytic.data()[c], numeric));
  }
  return worst;
}

double grad_check(const std::function<NodeId(Tape<double>&, NodeId)>& f, const Tensor<double>& x,
                  const GradCheckOptions& opt) {
  Tensor<double> work = x.clone();

  Tape<double> tape(true);
  NodeId leaf = tape.leaf(work, true);
  NodeId loss = f(tape, leaf);
  tape.backward(loss);
  Tensor<double> analytic = tape.grad(leaf);

  auto eval = [&]() {
    Tape<double> t(false);
    NodeId id = t.leaf(work, false);
    return t.item(f(t, id));
  };
  std::vector<int64_t> coords = sample_coords(work.numel(), opt.max_coords, Rng(opt.seed));
  return fd_max_rel_err(eval, work, analytic, coords, opt.eps);
}

double grad_check_vec(const std::function<NodeId(Tape<double>&, NodeId)>& f, const Tensor<double>& x,
                      const GradCheckOptions& opt) {
  // Shape the projection by running the function once.
  Tensor<double> proj;
  {
    Tape<double> t(false);
    NodeId id = t.leaf(x, false);
    const Shape s = t.value(f(t, id)).shape();
    proj = Tensor<double>(s);
    Rng rng = Rng(opt.seed).child("projection");
    for (int64_t i = 0; i < proj.numel(); ++i) proj.data()[i] = rng.uniform(-1.0, 1.0);
  }
  auto scalar_fn = [&f, proj](Tape<double>& t, NodeId id) {
    NodeId y = f(t, id);
    return t.sum(t.mul(y, t.constant(proj)));
  };
  return grad_check(scalar_fn, x, opt);
}

}  // namespace cmnet
