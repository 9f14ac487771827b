#pragma once

// Reference implementations used only by tests. Each one takes the slow,
// obvious route so it shares no code path with the library.

#include <Eigen/Core>
#include <Eigen/SVD>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

namespace keyvote3d::testing {

/// FPS that recomputes every candidate's distance to the selected set from
/// scratch at each step.
inline std::vector<std::size_t> brute_force_fps(const std::vector<Eigen::Vector3d>& pts,
                                                std::size_t k, std::size_t first) {
  std::vector<std::size_t> chosen{first};
  while (chosen.size() < k) {
    std::size_t arg = 0;
    double best = -1.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      double dmin = std::numeric_limits<double>::infinity();
      for (std::size_t c : chosen) dmin = std::min(dmin, (pts[i] - pts[c]).squaredNorm());
      if (dmin > best) {
        best = dmin;
        arg = i;
      }
    }
    chosen.push_back(arg);
  }
  return chosen;
}

inline double brute_force_diameter(const std::vector<Eigen::Vector3d>& pts) {
  double best = 0.0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j) best = std::max(best, (pts[i] - pts[j]).norm());
  return best;
}

/// Squared distance from h to the line through p with direction v (|v| = 1).
inline double line_distance_sq(const Eigen::Vector3d& h, const Eigen::Vector3d& p,
                               const Eigen::Vector3d& v) {
  const Eigen::Vector3d d = h - p;
  return (d - d.dot(v) * v).squaredNorm();
}

/// Nelder-Mead simplex minimizer with restarts; derivative-free.
inline Eigen::Vector3d nelder_mead(const std::function<double(const Eigen::Vector3d&)>& f,
                                   Eigen::Vector3d start, double scale, int restarts = 6,
                                   int max_iter = 20000) {
  for (int r = 0; r < restarts; ++r) {
    std::array<Eigen::Vector3d, 4> s;
    std::array<double, 4> fv;
    s[0] = start;
    for (int i = 0; i < 3; ++i) {
      s[i + 1] = start;
      s[i + 1](i) += scale;
    }
    for (int i = 0; i < 4; ++i) fv[i] = f(s[i]);
    for (int it = 0; it < max_iter; ++it) {
      std::array<int, 4> order{0, 1, 2, 3};
      std::sort(order.begin(), order.end(), [&](int a, int b) { return fv[a] < fv[b]; });
      std::array<Eigen::Vector3d, 4> s2;
      std::array<double, 4> f2;
      for (int i = 0; i < 4; ++i) {
        s2[i] = s[order[i]];
        f2[i] = fv[order[i]];
      }
      s = s2;
      fv = f2;
      double size = 0.0;
      for (int i = 1; i < 4; ++i) size = std::max(size, (s[i] - s[0]).norm());
      if (size < 1e-13 * std::max(1.0, s[0].norm())) break;

      const Eigen::Vector3d c = (s[0] + s[1] + s[2]) / 3.0;
      const Eigen::Vector3d xr = c + (c - s[3]);
      const double fr = f(xr);
      if (fr < fv[0]) {
        const Eigen::Vector3d xe = c + 2.0 * (c - s[3]);
        const double fe = f(xe);
        if (fe < fr) {
          s[3] = xe;
          fv[3] = fe;
        } else {
          s[3] = xr;
          fv[3] = fr;
        }
      } else if (fr < fv[2]) {
        s[3] = xr;
        fv[3] = fr;
      } else {
        const Eigen::Vector3d xc = fr < fv[3] ? c + 0.5 * (xr - c) : c + 0.5 * (s[3] - c);
        const double fc = f(xc);
        if (fc < std::min(fr, fv[3])) {
          s[3] = xc;
          fv[3] = fc;
        } else {
          for (int i = 1; i < 4; ++i) {
            s[i] = s[0] + 0.5 * (s[i] - s[0]);
            fv[i] = f(s[i]);
          }
        }
      }
    }
    start = s[0];
    scale = std::max(scale * 0.1, 1e-6);
  }
  return start;
}

/// Minimizer of the summed squared distance to the given lines.
inline Eigen::Vector3d numeric_closest_point(const std::vector<Eigen::Vector3d>& points,
                                             const std::vector<Eigen::Vector3d>& dirs) {
  auto cost = [&](const Eigen::Vector3d& h) {
    double s = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) s += line_distance_sq(h, points[i], dirs[i]);
    return s;
  };
  Eigen::Vector3d start = Eigen::Vector3d::Zero();
  for (const auto& p : points) start += p;
  start /= static_cast<double>(points.size());
  return nelder_mead(cost, start, 1.0);
}

/// Condition number of sum(I - v v^T) by singular values.
inline double svd_condition(const std::vector<Eigen::Vector3d>& dirs) {
  Eigen::Matrix3d a = Eigen::Matrix3d::Zero();
  for (const auto& v : dirs) a += Eigen::Matrix3d::Identity() - v * v.transpose();
  const Eigen::JacobiSVD<Eigen::Matrix3d> svd(a);
  const auto& s = svd.singularValues();
  return s(2) > 0.0 ? s(0) / s(2) : std::numeric_limits<double>::infinity();
}

}  // namespace keyvote3d::testing
