#pragma once

#include <filesystem>
#include <vector>

#include "ndtfuse/fusion/methods.hpp"
#include "ndtfuse/types.hpp"

namespace ndtfuse::eval {

/// Per-method error time series against ground truth: translational errors in
/// the map frame (estimate minus truth) and yaw error in degrees, wrapped to
/// (-180, 180].
struct ErrorSeries {
  std::vector<double> stamps;
  std::vector<double> err_x;
  std::vector<double> err_y;
  std::vector<double> err_yaw;
  fusion::Method method = fusion::Method::GNSS;

  std::size_t size() const { return stamps.size(); }
};

struct HistogramBin {
  double left = 0.0, right = 0.0;
  std::size_t count = 0;
};

struct ChannelStats {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1)
  double q1 = 0.0, median = 0.0, q3 = 0.0;
  double whisker_low = 0.0, whisker_high = 0.0;  // most extreme within 1.5 IQR
  std::vector<HistogramBin> histogram;
};

struct SummaryStats {
  ChannelStats x, y;    // m, bin width 0.05
  ChannelStats yaw;     // deg, bin width 0.25
  fusion::Method method = fusion::Method::GNSS;
};

/// Associates each estimate with the nearest ground-truth pose within 0.05 s
/// and differences them in the map frame. Throws InsufficientOverlap when the
/// two time ranges share less than 95% of the estimate stream's span.
ErrorSeries compute_errors(const std::vector<fusion::LocalizationOutput>& estimates,
                           const std::vector<Pose>& truth);

/// Table-style summary: mean, sample standard deviation, quartiles by linear
/// interpolation, 1.5-IQR whiskers and fixed-width histograms per channel.
SummaryStats summarize(const ErrorSeries& series);

constexpr double kHistBinTranslation = 0.05;  // m
constexpr double kHistBinRotation = 0.25;     // deg

struct EvalResult {
  ErrorSeries series;
  SummaryStats stats;
};

/// Writes errors_<method>.csv and hist_<method>_<channel>.csv per entry plus
/// one combined summary.csv (rows in Table order: GNSS, IMU, LOAM, NDT+,
/// NDT++). All files are written atomically; values carry 9 significant
/// digits. Throws EmptySeries on an empty series and IoFailure on I/O errors.
void export_results(const std::vector<EvalResult>& results, const std::filesystem::path& out_dir);

}  // namespace ndtfuse::eval
