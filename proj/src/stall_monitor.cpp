#include "parasink/stall_monitor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace parasink {

StallSample make_sample(double t_ms, const OccupancySnapshot& snapshot, std::vector<int> permits,
                        std::size_t n_threads) {
  StallSample s;
  s.t_ms = t_ms;
  s.running_by_module = snapshot.running_by_module;
  s.running_total = std::accumulate(s.running_by_module.begin(), s.running_by_module.end(), 0);
  s.permits_by_module = std::move(permits);
  s.busy_threads = snapshot.busy_threads;
  s.n_threads = n_threads;
  return s;
}

StallReport aggregate(std::vector<std::string> module_names, std::vector<std::optional<std::size_t>> limits,
                      std::size_t n_threads, std::vector<StallSample> samples) {
  StallReport r;
  r.module_names = std::move(module_names);
  r.limits = std::move(limits);
  r.limits.resize(r.module_names.size());
  r.n_threads = std::max<std::size_t>(n_threads, 1);
  r.samples = std::move(samples);
  r.attribution.assign(r.module_names.size(), 0.0);
  if (r.samples.empty()) return r;

  const double n = static_cast<double>(r.n_threads);
  double total = 0.0;
  double busy = 0.0;
  for (const auto& s : r.samples) {
    total += std::min<double>(s.running_total, n);
    busy += std::min<double>(s.busy_threads, n);
    if (static_cast<std::size_t>(s.running_total) >= r.n_threads) continue;
    for (std::size_t m = 0; m < r.module_names.size(); ++m) {
      if (!r.limits[m] || m >= s.permits_by_module.size()) continue;
      if (static_cast<std::size_t>(s.permits_by_module[m]) >= *r.limits[m]) r.attribution[m] += 1.0;
    }
  }
  const double count = static_cast<double>(r.samples.size());
  r.stall_fraction = std::clamp(1.0 - total / count / n, 0.0, 1.0);
  r.thread_stall_fraction = std::clamp(1.0 - busy / count / n, 0.0, 1.0);
  for (auto& a : r.attribution) a /= count;
  return r;
}

std::vector<StallSample> replay_intervals(std::span<const ModuleInterval> intervals, std::size_t n_modules,
                                          std::size_t n_threads, double period_ms, double duration_ms) {
  std::vector<StallSample> samples;
  for (double t = 0.0; t < duration_ms; t += period_ms) {
    StallSample s;
    s.t_ms = t;
    s.n_threads = n_threads;
    s.running_by_module.assign(n_modules, 0);
    for (const auto& iv : intervals) {
      if (iv.start_ms <= t && t < iv.end_ms) ++s.running_by_module.at(static_cast<std::size_t>(iv.module));
    }
    s.permits_by_module = s.running_by_module;
    s.running_total = std::accumulate(s.running_by_module.begin(), s.running_by_module.end(), 0);
    s.busy_threads = s.running_total;
    samples.push_back(std::move(s));
  }
  return samples;
}

StallSampler::StallSampler(Probe probe, std::chrono::milliseconds period)
    : probe_(std::move(probe)), period_(period.count() > 0 ? period : std::chrono::milliseconds(1)) {}

StallSampler::~StallSampler() {
  if (thread_.joinable()) {
    stop_ = true;
    thread_.join();
  }
}

void StallSampler::start() {
  start_ = std::chrono::steady_clock::now();
  thread_ = std::thread([this] {
    auto next = start_;
    while (!stop_.load()) {
      const auto now = std::chrono::steady_clock::now();
      samples_.push_back(probe_(std::chrono::duration<double, std::milli>(now - start_).count()));
      next += period_;
      // Sleep in short slices so stop() is prompt.
      while (!stop_.load() && std::chrono::steady_clock::now() < next) {
        std::this_thread::sleep_for(std::min<std::chrono::steady_clock::duration>(
            next - std::chrono::steady_clock::now(), std::chrono::milliseconds(5)));
      }
    }
  });
}

std::vector<StallSample> StallSampler::stop() {
  stop_ = true;
  if (thread_.joinable()) thread_.join();
  return std::move(samples_);
}

void emit_stall_csv(const StallReport& report, std::ostream& out) {
  out << "t_ms,total";
  for (const auto& name : report.module_names) out << ',' << name;
  out << '\n';
  char buf[32];
  for (const auto& s : report.samples) {
    std::snprintf(buf, sizeof buf, "%.3f", s.t_ms);
    out << buf << ',' << s.running_total;
    for (std::size_t m = 0; m < report.module_names.size(); ++m) {
      out << ',' << (m < s.running_by_module.size() ? s.running_by_module[m] : 0);
    }
    out << '\n';
  }
}

void emit_stall_svg(const StallReport& report, std::ostream& out) {
  constexpr double kLeft = 50, kRight = 990, kTop = 15, kBottom = 270;
  const double width = kRight - kLeft;
  const double height = kBottom - kTop;

  int peak = static_cast<int>(report.n_threads);
  for (const auto& s : report.samples) peak = std::max(peak, s.running_total);
  const double t_end = report.samples.empty() ? 1.0 : std::max(report.samples.back().t_ms, 1.0);
  auto x = [&](double t) { return kLeft + width * t / t_end; };
  auto y = [&](double v) { return kBottom - height * v / peak; };

  char buf[128];
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 1000 300\" width=\"1000\" height=\"300\">\n";
  out << "<rect x=\"0\" y=\"0\" width=\"1000\" height=\"300\" fill=\"white\"/>\n";
  if (!report.samples.empty()) {
    // Everything under the ceiling starts red; running modules paint over it in green.
    std::snprintf(buf, sizeof buf, "<rect x=\"%.2f\" y=\"%.2f\" width=\"%.2f\" height=\"%.2f\" fill=\"#d62728\"/>\n",
                  kLeft, y(static_cast<double>(report.n_threads)), width,
                  kBottom - y(static_cast<double>(report.n_threads)));
    out << buf;
    out << "<polygon fill=\"#1a7a1a\" points=\"";
    std::snprintf(buf, sizeof buf, "%.2f,%.2f", x(0), kBottom);
    out << buf;
    for (std::size_t i = 0; i < report.samples.size(); ++i) {
      const auto& s = report.samples[i];
      const double t1 = i + 1 < report.samples.size() ? report.samples[i + 1].t_ms : t_end;
      std::snprintf(buf, sizeof buf, " %.2f,%.2f %.2f,%.2f", x(s.t_ms), y(s.running_total), x(t1),
                    y(s.running_total));
      out << buf;
    }
    std::snprintf(buf, sizeof buf, " %.2f,%.2f", x(t_end), kBottom);
    out << buf << "\"/>\n";
  }
  std::snprintf(buf, sizeof buf,
                "<line x1=\"%.2f\" y1=\"%.2f\" x2=\"%.2f\" y2=\"%.2f\" stroke=\"black\" stroke-dasharray=\"6,4\"/>\n",
                kLeft, y(static_cast<double>(report.n_threads)), kRight, y(static_cast<double>(report.n_threads)));
  out << buf;
  std::snprintf(buf, sizeof buf,
                "<path d=\"M%.2f,%.2f V%.2f H%.2f\" fill=\"none\" stroke=\"black\"/>\n", kLeft, kTop, kBottom, kRight);
  out << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"5\" y=\"%.2f\" font-size=\"12\">%zu</text>\n",
                y(static_cast<double>(report.n_threads)) + 4, report.n_threads);
  out << buf;
  std::snprintf(buf, sizeof buf, "<text x=\"%.2f\" y=\"292\" font-size=\"12\" text-anchor=\"end\">%.0f ms</text>\n",
                kRight, report.samples.empty() ? 0.0 : t_end);
  out << buf;
  out << "<text x=\"" << kLeft << "\" y=\"292\" font-size=\"12\">0</text>\n";
  out << "</svg>\n";
}

double gap_flush_correlation(const StallReport& report, std::span<const FlushInterval> flushes) {
  const auto n = report.samples.size();
  if (n < 2) return 0.0;
  std::vector<double> gap(n);
  std::vector<double> flushing(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto& s = report.samples[i];
    gap[i] = static_cast<double>(report.n_threads) - static_cast<double>(s.running_total);
    flushing[i] = std::any_of(flushes.begin(), flushes.end(), [&](const FlushInterval& f) {
                    return f.start_ms <= s.t_ms && s.t_ms < f.end_ms;
                  })
                      ? 1.0
                      : 0.0;
  }
  const double mg = std::accumulate(gap.begin(), gap.end(), 0.0) / n;
  const double mf = std::accumulate(flushing.begin(), flushing.end(), 0.0) / n;
  double cov = 0, vg = 0, vf = 0;
  for (std::size_t i = 0; i < n; ++i) {
    cov += (gap[i] - mg) * (flushing[i] - mf);
    vg += (gap[i] - mg) * (gap[i] - mg);
    vf += (flushing[i] - mf) * (flushing[i] - mf);
  }
  if (vg <= 0.0 || vf <= 0.0) return 0.0;
  return cov / std::sqrt(vg * vf);
}

}  // namespace parasink
