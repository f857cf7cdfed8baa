/**
 * @file sweep.hpp
 *
 * Training-size sweep: for every T and replica, train A1/A2/A3 on the same
 * T-sample and score each control variable on the fixed test split.
 */

#pragma once

#include <algorithm>
#include <atomic>
#include <exception>
#include <functional>
#include <map>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <tuple>
#include <vector>

#include "proxquad/approach.hpp"
#include "proxquad/config.hpp"
#include "proxquad/evaluation.hpp"

namespace proxquad {

struct SweepRow {
  ApproachKind approach = ApproachKind::A1;
  int variable = 0;  ///< index into kControlNames
  int T = 0;
  int replica = 0;
  double r2 = 0.0;
  friend bool operator==(const SweepRow&, const SweepRow&) = default;
};

struct SweepCell {
  ApproachKind approach = ApproachKind::A1;
  int variable = 0;
  int T = 0;
  int replicas = 0;
  double median = 0.0;
  double q25 = 0.0;
  double q75 = 0.0;
};

struct SweepReport {
  std::vector<SweepRow> rows;

  /// Linear-interpolated quantile, q in [0, 1].
  static double quantile(std::vector<double> v, double q) {
    if (v.empty()) throw DomainError("quantile of empty set");
    std::sort(v.begin(), v.end());
    const double pos = q * static_cast<double>(v.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
  }

  std::vector<SweepCell> summary() const {
    std::map<std::tuple<int, int, int>, std::vector<double>> groups;  // (approach, variable, T)
    for (const auto& r : rows) groups[{static_cast<int>(r.approach), r.variable, r.T}].push_back(r.r2);
    std::vector<SweepCell> out;
    for (const auto& [key, vals] : groups) {
      const auto [a, var, T] = key;
      out.push_back({static_cast<ApproachKind>(a), var, T, static_cast<int>(vals.size()), quantile(vals, 0.5),
                     quantile(vals, 0.25), quantile(vals, 0.75)});
    }
    return out;
  }

  double median(ApproachKind a, int variable, int T) const {
    std::vector<double> v;
    for (const auto& r : rows)
      if (r.approach == a && r.variable == variable && r.T == T) v.push_back(r.r2);
    return quantile(v, 0.5);
  }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "approach,variable,T,replica,r2\n";
    for (const auto& r : rows)
      os << to_string(r.approach) << ',' << kControlNames[r.variable] << ',' << r.T << ',' << r.replica << ','
         << r.r2 << '\n';
    return os.str();
  }

  /// R^2-versus-T table: one series per (approach, variable).
  std::string plot_csv() const {
    std::ostringstream os;
    os.precision(10);
    os << "approach,variable,T,replicas,median,q25,q75\n";
    for (const auto& c : summary())
      os << to_string(c.approach) << ',' << kControlNames[c.variable] << ',' << c.T << ',' << c.replicas << ','
         << c.median << ',' << c.q25 << ',' << c.q75 << '\n';
    return os.str();
  }
};

inline std::uint64_t replica_seed(std::uint64_t master, int T, int replica) {
  return derive_seed(derive_seed(master, static_cast<std::uint64_t>(T)), static_cast<std::uint64_t>(replica));
}

using SweepProgress = std::function<void(int T, int replica, const std::array<R2Report, 3>&)>;

/**
 * Runs every (T, replica) job; jobs are independent and may run on `workers`
 * threads. Rows are assembled in (T, replica, approach, variable) order, so the
 * report does not depend on the worker count.
 */
inline SweepReport run_sweep(const SessionSet& corpus, const SweepConfig& sweep, const nn::TrainConfig& train_cfg,
                             std::uint64_t master_seed, const ControllerParams& params = {}, unsigned workers = 1,
                             const SweepProgress& progress = {}) {
  sweep.validate();
  const std::size_t available = corpus.count(Split::Train);
  for (int T : sweep.T_values)
    if (static_cast<std::size_t>(T) > available)
      throw ConfigError("sweep: T = " + std::to_string(T) + " exceeds training set size " + std::to_string(available));
  const std::vector<DataInstance> test = corpus.collect(Split::Test);

  struct Job {
    int T, replica;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < sweep.T_values.size(); ++i)
    for (int r = 0; r < sweep.replicas[i]; ++r) jobs.push_back({sweep.T_values[i], r});

  std::vector<std::array<R2Report, 3>> results(jobs.size());
  std::atomic<std::size_t> next{0};
  std::mutex progress_mutex;
  std::exception_ptr failure;
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs.size(); j = next++) try {
      const auto apps = train_all_approaches(corpus, jobs[j].T, train_cfg, replica_seed(master_seed, jobs[j].T, jobs[j].replica), params);
      for (std::size_t a = 0; a < 3; ++a) results[j][a] = evaluate_approach(apps[a], test);
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(jobs[j].T, jobs[j].replica, results[j]);
      }
    } catch (...) {
      std::lock_guard lock(progress_mutex);
      if (!failure) failure = std::current_exception();
      next = jobs.size();
    }
  };
  if (workers <= 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  if (failure) std::rethrow_exception(failure);

  SweepReport report;
  for (std::size_t j = 0; j < jobs.size(); ++j)
    for (std::size_t a = 0; a < 3; ++a)
      for (int v = 0; v < 4; ++v)
        report.rows.push_back({kLearnedApproaches[a], v, jobs[j].T, jobs[j].replica, results[j][a].r2[static_cast<std::size_t>(v)]});
  return report;
}

}  // namespace proxquad
