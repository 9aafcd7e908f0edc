#pragma once

#include <span>
#include <string>

#include "cmnet/config.hpp"
#include "cmnet/tensor.hpp"

namespace cmnet {

// Constants the paper leaves to external evaluation code; surfaced in config.
struct MetricConfig {
  double grad_sigma = 1.4;      // Gaussian derivative scale, truncated at 4*sigma
  double conn_step = 0.1;       // connectivity threshold step (levels 0.1..0.9)
  double conn_tolerance = 0.15; // degradation values below this count as intact

  static MetricConfig from(const Config& cfg);
};

struct MetricReport {
  double sad = 0;     // sum |diff| / 1000
  double mse = 0;     // mean squared error * 1e3
  double grad = 0;    // gradient-magnitude discrepancy * 1e-3
  double conn = 0;    // connectivity degradation * 1e-3
  double fg_mse = 0;  // foreground MSE over alpha>0 * 1e3
  bool fg_empty_warning = false;

  std::string table_row(const std::string& name) const;
  std::string key_values() const;
};

double metric_sad(const Tensor<double>& pred, const Tensor<double>& gt);
double metric_mse(const Tensor<double>& pred, const Tensor<double>& gt);
double metric_grad(const Tensor<double>& pred, const Tensor<double>& gt, double sigma);
double metric_conn(const Tensor<double>& pred, const Tensor<double>& gt, double step, double tolerance);
double metric_fg_mse(const Tensor<double>& pred_fg, const Tensor<double>& gt_fg,
                     const Tensor<double>& gt_alpha, bool* empty_warning);

MetricReport evaluate_frame(const Tensor<double>& pred_alpha, const Tensor<double>& gt_alpha,
                            const Tensor<double>& pred_fg, const Tensor<double>& gt_fg,
                            const MetricConfig& cfg);
// Video-level report: mean over frames.
MetricReport average_reports(std::span<const MetricReport> frames);

std::string metric_table_header();

}  // namespace cmnet
