#include "cmnet/metrics.hpp"

#include <cmath>
#include <deque>
#include <sstream>
#include <vector>

#include "cmnet/errors.hpp"

namespace cmnet {

namespace {

void check_pair(const Tensor<double>& pred, const Tensor<double>& gt, const char* what) {
  if (!(pred.shape() == gt.shape()))
    throw ShapeError(std::string(what) + ": shape mismatch " + pred.shape().str() + " vs " +
                     gt.shape().str());
  if (pred.numel() == 0) throw ShapeError(std::string(what) + ": empty tensor");
}

int64_t mirror(int64_t i, int64_t lim) {
  if (i < 0) return -i;
  if (i >= lim) return 2 * lim - 2 - i;
  return i;
}

// separable convolution with reflect borders
std::vector<double> sep_filter(const Tensor<double>& img, const std::vector<double>& kx,
                               const std::vector<double>& ky) {
  const int64_t h = img.shape().h, w = img.shape().w;
  const int64_t rx = static_cast<int64_t>(kx.size() / 2), ry = static_cast<int64_t>(ky.size() / 2);
  std::vector<double> tmp(static_cast<size_t>(h * w), 0.0), out(static_cast<size_t>(h * w), 0.0);
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int64_t k = -rx; k <= rx; ++k)
        acc += kx[static_cast<size_t>(k + rx)] * img.data()[y * w + mirror(x + k, w)];
      tmp[static_cast<size_t>(y * w + x)] = acc;
    }
  }
  for (int64_t y = 0; y < h; ++y) {
    for (int64_t x = 0; x < w; ++x) {
      double acc = 0;
      for (int64_t k = -ry; k <= ry; ++k)
        acc += ky[static_cast<size_t>(k + ry)] * tmp[static_cast<size_t>(mirror(y + k, h) * w + x)];
      out[static_cast<size_t>(y * w + x)] = acc;
    }
  }
  return out;
}

void gaussian_kernels(double sigma, std::vector<double>& g, std::vector<double>& dg) {
  const int64_t r = static_cast<int64_t>(std::ceil(4.0 * sigma));
  g.assign(static_cast<size_t>(2 * r + 1), 0.0);
  dg.assign(static_cast<size_t>(2 * r + 1), 0.0);
  double norm = 0;
  for (int64_t i = -r; i <= r; ++i) {
    const double v = std::exp(-0.5 * (static_cast<double>(i) * i) / (sigma * sigma));
    g[static_cast<size_t>(i + r)] = v;
    norm += v;
  }
  for (int64_t i = -r; i <= r; ++i) {
    g[static_cast<size_t>(i + r)] /= norm;
    dg[static_cast<size_t>(i + r)] = -static_cast<double>(i) / (sigma * sigma) * g[static_cast<size_t>(i + r)];
  }
}

std::vector<double> grad_magnitude(const Tensor<double>& img, double sigma) {
  std::vector<double> g, dg;
  gaussian_kernels(sigma, g, dg);
  std::vector<double> gx = sep_filter(img, dg, g);
  std::vector<double> gy = sep_filter(img, g, dg);
  std::vector<double> mag(gx.size());
  for (size_t i = 0; i < mag.size(); ++i) mag[i] = std::sqrt(gx[i] * gx[i] + gy[i] * gy[i]);
  return mag;
}

// largest 4-connected component of mask (ties broken by first scan-order
// reach); returns membership flags
std::vector<uint8_t> largest_component(const std::vector<uint8_t>& mask, int64_t h, int64_t w) {
  std::vector<int32_t> label(static_cast<size_t>(h * w), -1);
  int32_t next = 0;
  std::vector<int64_t> sizes;
  std::deque<int64_t> queue;
  for (int64_t start = 0; start < h * w; ++start) {
    if (!mask[static_cast<size_t>(start)] || label[static_cast<size_t>(start)] >= 0) continue;
    int64_t count = 0;
    queue.push_back(start);
    label[static_cast<size_t>(start)] = next;
    while (!queue.empty()) {
      const int64_t p = queue.front();
      queue.pop_front();
      ++count;
      const int64_t y = p / w, x = p % w;
      const int64_t nb[4] = {y > 0 ? p - w : -1, y + 1 < h ? p + w : -1, x > 0 ? p - 1 : -1,
                             x + 1 < w ? p + 1 : -1};
      for (int64_t q : nb) {
        if (q >= 0 && mask[static_cast<size_t>(q)] && label[static_cast<size_t>(q)] < 0) {
          label[static_cast<size_t>(q)] = next;
          queue.push_back(q);
        }
      }
    }
    sizes.push_back(count);
    ++next;
  }
  std::vector<uint8_t> out(static_cast<size_t>(h * w), 0);
  if (next == 0) return out;
  int32_t best = 0;
  for (int32_t i = 1; i < next; ++i) {
    if (sizes[static_cast<size_t>(i)] > sizes[static_cast<size_t>(best)]) best = i;
  }
  for (int64_t i = 0; i < h * w; ++i) out[static_cast<size_t>(i)] = label[static_cast<size_t>(i)] == best;
  return out;
}

}  // namespace

MetricConfig MetricConfig::from(const Config& cfg) {
  MetricConfig m;
  m.grad_sigma = cfg.real("metrics.grad_sigma");
  m.conn_step = cfg.real("metrics.conn_step");
  m.conn_tolerance = cfg.real("metrics.conn_tolerance");
  return m;
}

double metric_sad(const Tensor<double>& pred, const Tensor<double>& gt) {
  check_pair(pred, gt, "sad");
  double acc = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) acc += std::abs(pred.data()[i] - gt.data()[i]);
  return acc / 1000.0;
}

double metric_mse(const Tensor<double>& pred, const Tensor<double>& gt) {
  check_pair(pred, gt, "mse");
  double acc = 0;
  for (int64_t i = 0; i < pred.numel(); ++i) {
    const double d = pred.data()[i] - gt.data()[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.numel()) * 1e3;
}

double metric_grad(const Tensor<double>& pred, const Tensor<double>& gt, double sigma) {
  check_pair(pred, gt, "grad");
  const std::vector<double> mp = grad_magnitude(pred, sigma);
  const std::vector<double> mg = grad_magnitude(gt, sigma);
  double acc = 0;
  for (size_t i = 0; i < mp.size(); ++i) {
    const double d = mp[i] - mg[i];
    acc += d * d;
  }
  return acc * 1e-3;
}

double metric_conn(const Tensor<double>& pred, const Tensor<double>& gt, double step,
                   double tolerance) {
  check_pair(pred, gt, "conn");
  const int64_t h = pred.shape().h, w = pred.shape().w;
  const int64_t numel = h * w;
  std::vector<double> l_map(static_cast<size_t>(numel), -1.0);
  double prev_theta = 0.0;
  const int levels = static_cast<int>(std::floor(0.9 / step + 1e-9));
  for (int li = 1; li <= levels; ++li) {
    const double theta = step * li;
    std::vector<uint8_t> inter(static_cast<size_t>(numel), 0);
    for (int64_t i = 0; i < numel; ++i)
      inter[static_cast<size_t>(i)] = pred.data()[i] >= theta && gt.data()[i] >= theta;
    const std::vector<uint8_t> omega = largest_component(inter, h, w);
    for (int64_t i = 0; i < numel; ++i) {
      if (l_map[static_cast<size_t>(i)] < 0 && !omega[static_cast<size_t>(i)])
        l_map[static_cast<size_t>(i)] = prev_theta;
    }
    prev_theta = theta;
  }
  for (int64_t i = 0; i < numel; ++i) {
    if (l_map[static_cast<size_t>(i)] < 0) l_map[static_cast<size_t>(i)] = prev_theta;
  }
  double acc = 0;
  for (int64_t i = 0; i < numel; ++i) {
    const double dp = pred.data()[i] - l_map[static_cast<size_t>(i)];
    const double dg = gt.data()[i] - l_map[static_cast<size_t>(i)];
    const double phip = 1.0 - (dp >= tolerance ? dp : 0.0);
    const double phig = 1.0 - (dg >= tolerance ? dg : 0.0);
    acc += std::abs(phip - phig);
  }
  return acc * 1e-3;
}

double metric_fg_mse(const Tensor<double>& pred_fg, const Tensor<double>& gt_fg,
                     const Tensor<double>& gt_alpha, bool* empty_warning) {
  check_pair(pred_fg, gt_fg, "fg_mse");
  const Shape fs = pred_fg.shape(), as = gt_alpha.shape();
  if (as.h != fs.h || as.w != fs.w || as.n != fs.n || as.c != 1)
    throw ShapeError("fg_mse: alpha shape inconsistent");
  const int64_t plane = fs.h * fs.w;
  double acc = 0;
  int64_t count = 0;
  for (int64_t n = 0; n < fs.n; ++n) {
    for (int64_t i = 0; i < plane; ++i) {
      if (gt_alpha.data()[n * plane + i] <= 0.0) continue;
      for (int64_t c = 0; c < fs.c; ++c) {
        const double d = pred_fg.data()[(n * fs.c + c) * plane + i] -
                         gt_fg.data()[(n * fs.c + c) * plane + i];
        acc += d * d;
        ++count;
      }
    }
  }
  if (count == 0) {
    if (empty_warning) *empty_warning = true;
    return 0.0;
  }
  return acc / static_cast<double>(count) * 1e3;
}

MetricReport evaluate_frame(const Tensor<double>& pred_alpha, const Tensor<double>& gt_alpha,
                            const Tensor<double>& pred_fg, const Tensor<double>& gt_fg,
                            const MetricConfig& cfg) {
  MetricReport r;
  r.sad = metric_sad(pred_alpha, gt_alpha);
  r.mse = metric_mse(pred_alpha, gt_alpha);
  r.grad = metric_grad(pred_alpha, gt_alpha, cfg.grad_sigma);
  r.conn = metric_conn(pred_alpha, gt_alpha, cfg.conn_step, cfg.conn_tolerance);
  r.fg_mse = metric_fg_mse(pred_fg, gt_fg, gt_alpha, &r.fg_empty_warning);
  return r;
}

MetricReport average_reports(std::span<const MetricReport> frames) {
  if (frames.empty()) throw UsageError("average_reports: empty");
  MetricReport out;
  for (const MetricReport& r : frames) {
    out.sad += r.sad;
    out.mse += r.mse;
    out.grad += r.grad;
    out.conn += r.conn;
    out.fg_mse += r.fg_mse;
    out.fg_empty_warning = out.fg_empty_warning || r.fg_empty_warning;
  }
  const double n = static_cast<double>(frames.size());
  out.sad /= n;
  out.mse /= n;
  out.grad /= n;
  out.conn /= n;
  out.fg_mse /= n;
  return out;
}

std::string metric_table_header() {
  char buf[128];
  std::snprintf(buf, sizeof buf, "%-24s %10s %10s %10s %10s %10s", "video", "SAD", "MSE", "Grad",
                "Conn", "fgMSE");
  return buf;
}

std::string MetricReport::table_row(const std::string& name) const {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-24s %10.4f %10.4f %10.4f %10.4f %10.4f", name.c_str(), sad, mse,
                grad, conn, fg_mse);
  return buf;
}

std::string MetricReport::key_values() const {
  std::ostringstream os;
  os << "sad=" << sad << "\nmse=" << mse << "\ngrad=" << grad << "\nconn=" << conn
     << "\nfg_mse=" << fg_mse << "\nfg_empty_warning=" << (fg_empty_warning ? 1 : 0) << "\n";
  return os.str();
}

}  // namespace cmnet
