#ifndef NBP_SVG_HPP
#define NBP_SVG_HPP

#include <string>
#include <vector>

namespace nbp::io {

// Function-sample panel: one polyline per sample (class "sample"), the
// pointwise sample mean (class "mean"), context circles and target crosses
// when a task file is given. Reads the sample CSV written by the sampler
// (columns sample,point,x...,y...).
void plot_samples_svg(const std::string& samples_csv, const std::string& task_file, int task_index,
                      const std::string& out_svg);

// Loss-curve overlay: one polyline per metrics CSV (class "loss").
void plot_losses_svg(const std::vector<std::string>& metrics_csvs, const std::vector<std::string>& labels,
                     const std::string& out_svg);

}  // namespace nbp::io

#endif
