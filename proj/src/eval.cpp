#include "ndtfuse/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ndtfuse/errors.hpp"
#include "ndtfuse/geometry.hpp"

namespace ndtfuse::eval {

namespace {

const Pose* nearest_truth(const std::vector<Pose>& truth, double stamp, double gate) {
  const auto it = std::lower_bound(truth.begin(), truth.end(), stamp,
                                   [](const Pose& p, double t) { return p.stamp < t; });
  const Pose* best = nullptr;
  double best_dt = gate;
  if (it != truth.end() && std::abs(it->stamp - stamp) <= best_dt) {
    best_dt = std::abs(it->stamp - stamp);
    best = &*it;
  }
  if (it != truth.begin()) {
    const Pose& prev = *(it - 1);
    if (std::abs(prev.stamp - stamp) <= best_dt) best = &prev;
  }
  return best;
}

ChannelStats channel_stats(std::vector<double> values, double bin_width) {
  ChannelStats out;
  const std::size_t n = values.size();
  double sum = 0.0;
  for (double v : values) sum += v;
  out.mean = sum / static_cast<double>(n);
  double sq = 0.0;
  for (double v : values) sq += (v - out.mean) * (v - out.mean);
  out.stddev = n > 1 ? std::sqrt(sq / static_cast<double>(n - 1)) : 0.0;

  std::sort(values.begin(), values.end());
  const auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, n - 1);
    const double frac = pos - static_cast<double>(lo);
    return values[lo] * (1.0 - frac) + values[hi] * frac;
  };
  out.q1 = quantile(0.25);
  out.median = quantile(0.5);
  out.q3 = quantile(0.75);

  const double iqr = out.q3 - out.q1;
  const double lo_fence = out.q1 - 1.5 * iqr;
  const double hi_fence = out.q3 + 1.5 * iqr;
  out.whisker_low = out.q3;
  out.whisker_high = out.q1;
  for (double v : values) {
    if (v >= lo_fence) {
      out.whisker_low = v;  // first (smallest) value inside the fence
      break;
    }
  }
  for (auto it = values.rbegin(); it != values.rend(); ++it) {
    if (*it <= hi_fence) {
      out.whisker_high = *it;
      break;
    }
  }

  const double first_edge = std::floor(values.front() / bin_width) * bin_width;
  const std::size_t bins = static_cast<std::size_t>(
      std::max(1.0, std::ceil((values.back() - first_edge) / bin_width + 1e-12)));
  out.histogram.assign(bins, HistogramBin{});
  for (std::size_t b = 0; b < bins; ++b) {
    out.histogram[b].left = first_edge + bin_width * static_cast<double>(b);
    out.histogram[b].right = first_edge + bin_width * static_cast<double>(b + 1);
  }
  for (double v : values) {
    auto b = static_cast<std::size_t>((v - first_edge) / bin_width);
    if (b >= bins) b = bins - 1;
    out.histogram[b].count += 1;
  }
  return out;
}

std::string format_value(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Atomic write: the full content lands via a temp file plus rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoFailure("cannot open " + tmp.string());
    out << content;
    if (!out) throw IoFailure("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoFailure("rename failed for " + path.string() + ": " + ec.message());
}

}  // namespace

ErrorSeries compute_errors(const std::vector<fusion::LocalizationOutput>& estimates,
                           const std::vector<Pose>& truth) {
  if (estimates.empty() || truth.empty()) {
    throw InsufficientOverlap("compute_errors: empty stream");
  }
  const double est_begin = estimates.front().pose.stamp;
  const double est_end = estimates.back().pose.stamp;
  const double overlap_begin = std::max(est_begin, truth.front().stamp);
  const double overlap_end = std::min(est_end, truth.back().stamp);
  const double span = est_end - est_begin;
  if (span > 0.0 && (overlap_end - overlap_begin) < 0.95 * span) {
    throw InsufficientOverlap("compute_errors: overlap " +
                              std::to_string(overlap_end - overlap_begin) + " s of " +
                              std::to_string(span) + " s");
  }

  ErrorSeries out;
  out.method = estimates.front().source;
  out.stamps.reserve(estimates.size());
  for (const auto& est : estimates) {
    const Pose* mate = nearest_truth(truth, est.pose.stamp, 0.05);
    if (mate == nullptr) continue;
    out.stamps.push_back(est.pose.stamp);
    out.err_x.push_back(est.pose.translation.x() - mate->translation.x());
    out.err_y.push_back(est.pose.translation.y() - mate->translation.y());
    out.err_yaw.push_back(wrap_angle_deg(rad2deg(yaw_of(est.pose) - yaw_of(*mate))));
  }
  if (out.stamps.empty()) throw InsufficientOverlap("compute_errors: no associated samples");
  return out;
}

SummaryStats summarize(const ErrorSeries& series) {
  if (series.size() == 0) throw EmptySeries("summarize: empty error series");
  SummaryStats out;
  out.method = series.method;
  out.x = channel_stats(series.err_x, kHistBinTranslation);
  out.y = channel_stats(series.err_y, kHistBinTranslation);
  out.yaw = channel_stats(series.err_yaw, kHistBinRotation);
  return out;
}

void export_results(const std::vector<EvalResult>& results,
                    const std::filesystem::path& out_dir) {
  for (const EvalResult& r : results) {
    if (r.series.size() == 0) throw EmptySeries("export_results: empty series");
  }
  std::filesystem::create_directories(out_dir);

  std::vector<const EvalResult*> ordered;
  for (const EvalResult& r : results) ordered.push_back(&r);
  std::sort(ordered.begin(), ordered.end(), [](const EvalResult* a, const EvalResult* b) {
    return static_cast<int>(a->series.method) < static_cast<int>(b->series.method);
  });

  std::ostringstream summary;
  summary << "method,mu_rot,sigma_rot,mu_x,sigma_x,mu_y,sigma_y\n";
  for (const EvalResult* r : ordered) {
    const std::string tag = fusion::to_string(r->series.method);

    std::ostringstream series_csv;
    series_csv << "stamp,err_x,err_y,err_yaw\n";
    for (std::size_t i = 0; i < r->series.size(); ++i) {
      series_csv << format_value(r->series.stamps[i]) << ',' << format_value(r->series.err_x[i])
                 << ',' << format_value(r->series.err_y[i]) << ','
                 << format_value(r->series.err_yaw[i]) << '\n';
    }
    write_file_atomic(out_dir / ("errors_" + tag + ".csv"), series_csv.str());

    const struct {
      const char* name;
      const ChannelStats* ch;
    } channels[] = {{"x", &r->stats.x}, {"y", &r->stats.y}, {"yaw", &r->stats.yaw}};
    for (const auto& [name, ch] : channels) {
      std::ostringstream hist;
      hist << "bin_left,bin_right,count\n";
      for (const HistogramBin& b : ch->histogram) {
        hist << format_value(b.left) << ',' << format_value(b.right) << ',' << b.count << '\n';
      }
      write_file_atomic(out_dir / ("hist_" + tag + "_" + name + ".csv"), hist.str());
    }

    summary << tag << ',' << format_value(r->stats.yaw.mean) << ','
            << format_value(r->stats.yaw.stddev) << ',' << format_value(r->stats.x.mean) << ','
            << format_value(r->stats.x.stddev) << ',' << format_value(r->stats.y.mean) << ','
            << format_value(r->stats.y.stddev) << '\n';
  }
  write_file_atomic(out_dir / "summary.csv", summary.str());
}

}  // namespace ndtfuse::eval
