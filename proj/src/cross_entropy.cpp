#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "projnet/projops.hpp"

namespace projnet {

namespace {

double logsumexp(std::span<const double> x) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double s = 0;
  for (double v : x) s += std::exp(v - mx);
  return mx + std::log(s);
}

// lambda * CE(x, label) + 0.5 ||x - x0||^2
double prox_objective(std::span<const double> x, std::span<const double> x0, std::size_t label, double lambda) {
  double q = 0;
  for (std::size_t i = 0; i < x.size(); ++i) q += (x[i] - x0[i]) * (x[i] - x0[i]);
  return lambda * (logsumexp(x) - x[label]) + 0.5 * q;
}

// g = x - x0 - lambda (y - softmax(x)); returns ||g||
double prox_gradient(std::span<const double> x, std::span<const double> x0, std::size_t label, double lambda,
                     std::span<double> s, std::span<double> g) {
  softmax(x, s);
  double n2 = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    double yi = i == label ? 1.0 : 0.0;
    g[i] = x[i] - x0[i] - lambda * (yi - s[i]);
    n2 += g[i] * g[i];
  }
  return std::sqrt(n2);
}

}  // namespace

CeInfo prox_cross_entropy(std::span<const double> x0, std::size_t label, double lambda, std::span<double> out,
                          const ScalarSolveConfig& cfg) {
  std::size_t d = x0.size();
  CeInfo info;
  thread_local std::vector<double> buf;
  buf.resize(5 * d);
  std::span<double> s(buf.data(), d), g(buf.data() + d, d), gt(buf.data() + 2 * d, d), step(buf.data() + 3 * d, d),
      trial(buf.data() + 4 * d, d);
  std::copy(x0.begin(), x0.end(), out.begin());
  double gn = prox_gradient(out, x0, label, lambda, s, g);
  double scale = 1 + lambda;
  for (double v : x0) scale = std::max(scale, std::abs(v));
  const double stop = 1e-14 * scale;

  if (cfg.ce_solver == CeSolver::DampedFixedPoint) {
    double beta = std::min(1.0, 2.0 / (1.0 + lambda));
    for (int it = 0; it < cfg.fp_iters && gn > stop; ++it) {
      for (std::size_t i = 0; i < d; ++i) out[i] -= beta * g[i];
      gn = prox_gradient(out, x0, label, lambda, s, g);
      info.iterations = it + 1;
    }
    info.residual = gn;
    return info;
  }

  // Newton on the strictly convex prox objective. The Hessian
  // I + lambda (diag(s) - s s') is diagonal plus rank one.
  double obj = prox_objective(out, x0, label, lambda);
  for (int it = 0; it < cfg.fp_iters && gn > stop; ++it) {
    double sds = 0, sdg = 0;
    for (std::size_t i = 0; i < d; ++i) {
      double di = 1 + lambda * s[i];
      sds += s[i] * s[i] / di;
      sdg += s[i] * g[i] / di;
    }
    double coef = lambda * sdg / (1 - lambda * sds);
    double slope = 0;
    for (std::size_t i = 0; i < d; ++i) {
      step[i] = -(g[i] + coef * s[i]) / (1 + lambda * s[i]);
      slope += g[i] * step[i];
    }
    for (std::size_t i = 0; i < d; ++i) trial[i] = out[i] + step[i];
    double gn_trial = prox_gradient(trial, x0, label, lambda, s, gt);
    if (gn_trial >= gn) {
      // full step did not help: backtrack on the objective
      double t = 1;
      bool moved = false;
      for (int bt = 0; bt < 30 && !moved; ++bt) {
        t *= 0.5;
        for (std::size_t i = 0; i < d; ++i) trial[i] = out[i] + t * step[i];
        moved = prox_objective(trial, x0, label, lambda) <= obj + 1e-4 * t * slope;
      }
      // no descent left: the iterate is optimal to rounding
      if (!moved || !(slope < 0)) break;
    }
    std::copy(trial.begin(), trial.end(), out.begin());
    obj = prox_objective(out, x0, label, lambda);
    gn = prox_gradient(out, x0, label, lambda, s, g);
    info.iterations = it + 1;
  }
  info.residual = gn;
  return info;
}

}  // namespace projnet
