#include "projnet/projops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace projnet {

const char* to_string(PrimKind k) {
  switch (k) {
    case PrimKind::Identity: return "identity";
    case PrimKind::Sum: return "sum";
    case PrimKind::SumReLU: return "sum_relu";
    case PrimKind::Dot: return "dot";
    case PrimKind::Max: return "max";
    case PrimKind::Quantize: return "quantize";
  }
  return "?";
}

void PrimSpec::validate() const {
  if (fanin < 1) throw std::invalid_argument(std::string(to_string(kind)) + ": fan-in must be >= 1");
  if ((kind == PrimKind::Identity || kind == PrimKind::Quantize) && fanin != 1)
    throw std::invalid_argument(std::string(to_string(kind)) + ": fan-in must be 1");
  if (kind == PrimKind::Quantize && (levels < 2 || !(alpha > 0)))
    throw std::invalid_argument("quantize: need k >= 2 and alpha > 0");
}

std::string PrimSpec::describe() const {
  std::ostringstream os;
  os << to_string(kind);
  if (kind == PrimKind::Quantize)
    os << "(k=" << levels << ",alpha=" << alpha << ")";
  else if (kind != PrimKind::Identity)
    os << "(" << fanin << ")";
  return os.str();
}

void TargetSpec::validate() const {
  if (!(param > 0))
    throw std::invalid_argument(kind == TargetKind::Margin ? "margin must be positive" : "lambda must be positive");
}

std::string TargetSpec::describe() const {
  std::ostringstream os;
  if (kind == TargetKind::Margin)
    os << "margin(m=" << param << ")";
  else
    os << "ce_prox(lambda=" << param << ")";
  return os.str();
}

void ScalarSolveConfig::validate() const {
  if (newton_iters < 1 || fp_iters < 1 || max_root_iters < 1)
    throw std::invalid_argument("iteration counts must be >= 1");
  if (!(lambda_clamp > 0 && lambda_clamp < 1)) throw std::invalid_argument("lambda clamp must lie in (0,1)");
}

std::pair<double, double> proj_identity(double x0, double y0, double w) {
  double v = w == 1.0 ? (x0 + y0) / 2 : (x0 + w * y0) / (1 + w);
  return {v, v};
}

double proj_sum(std::span<const double> x0, double y0, std::span<double> x, double w) {
  std::size_t n = x0.size();
  double s = 0;
  for (double v : x0) s += v;
  double lam = (y0 - s) / (static_cast<double>(n) + 1.0 / w);
  for (std::size_t i = 0; i < n; ++i) x[i] = x0[i] + lam;
  return y0 - lam / w;
}

double proj_sum_relu(std::span<const double> x0, double y0, std::span<double> x, double w) {
  std::size_t n = x0.size();
  double nn = static_cast<double>(n);
  double s = 0;
  for (double v : x0) s += v;

  // flat piece: 1'x <= 0, y = 0
  double sh1 = std::max(0.0, s / nn);
  double d1 = nn * sh1 * sh1 + w * y0 * y0;

  // sloped piece: y = 1'x >= 0
  double lam = (y0 - s) / (nn + 1.0 / w);
  double sh2, y2;
  if (s + nn * lam >= 0) {
    sh2 = lam;
    y2 = y0 - lam / w;
  } else {
    sh2 = -s / nn;
    y2 = 0;
  }
  double d2 = nn * sh2 * sh2 + w * (y2 - y0) * (y2 - y0);

  if (d2 <= d1) {
    for (std::size_t i = 0; i < n; ++i) x[i] = x0[i] + sh2;
    return y2;
  }
  for (std::size_t i = 0; i < n; ++i) x[i] = x0[i] - sh1;
  return 0.0;
}

double proj_max(std::span<const double> x0, double y0, std::span<double> x, std::span<std::size_t> order,
                double w) {
  std::size_t n = x0.size();
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return x0[a] < x0[b]; });

  // candidate k (0-based) lifts sorted entries k..n-1 to y; walk k downward
  // with running tail sums, preferring the smaller k on ties
  double best_d = std::numeric_limits<double>::infinity(), best_y = 0;
  std::size_t best_k = 0;
  double s1 = 0, s2 = 0;
  for (std::size_t k = n; k-- > 0;) {
    double v = x0[order[k]];
    s1 += v;
    s2 += v * v;
    double m = static_cast<double>(n - k);
    double yk = (s1 + w * y0) / (m + w);
    if (k > 0 && x0[order[k - 1]] > yk) continue;
    double d = std::max(0.0, s2 - 2 * yk * s1 + m * yk * yk) + w * (yk - y0) * (yk - y0);
    if (d <= best_d) {
      best_d = d;
      best_y = yk;
      best_k = k;
    }
  }
  for (std::size_t i = 0; i < n; ++i) x[order[i]] = i >= best_k ? best_y : x0[order[i]];
  return best_y;
}

namespace {

double level(std::size_t i, std::size_t k, double alpha) {
  return -alpha + static_cast<double>(i) * (2 * alpha / static_cast<double>(k - 1));
}

double midpoint(std::size_t i, std::size_t k, double alpha) {
  return (level(i, k, alpha) + level(i + 1, k, alpha)) / 2;
}

}  // namespace

double quantize_value(double x, std::size_t k, double alpha) {
  for (std::size_t i = 0; i + 1 < k; ++i)
    if (x <= midpoint(i, k, alpha)) return level(i, k, alpha);
  return level(k - 1, k, alpha);
}

std::pair<double, double> proj_quantize(double x0, double y0, std::size_t k, double alpha, double w) {
  double best_d = std::numeric_limits<double>::infinity(), bx = x0, by = 0;
  for (std::size_t i = 0; i < k; ++i) {
    // I_i = (m_{i-1}, m_i]; the open end is approached by the next double
    double x = x0;
    if (i + 1 < k) x = std::min(x, midpoint(i, k, alpha));
    if (i > 0) {
      double lo = midpoint(i - 1, k, alpha);
      if (x <= lo) x = std::nextafter(lo, std::numeric_limits<double>::infinity());
    }
    double z = level(i, k, alpha);
    double d = (x - x0) * (x - x0) + w * (z - y0) * (z - y0);
    if (d < best_d) {
      best_d = d;
      bx = x;
      by = z;
    }
  }
  return {bx, by};
}

double proj_margin(double x0, double y, double m) { return y <= 0 ? std::min(x0, 0.0) : std::max(x0, m); }

namespace {

struct DotMoments {
  double p = 0, q = 0;
};

DotMoments dot_moments(std::span<const double> x0, std::span<const double> y0) {
  DotMoments m;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    m.p += x0[i] * y0[i];
    m.q += x0[i] * x0[i] + y0[i] * y0[i];
  }
  return m;
}

// f(lambda) and f'(lambda) of the dot-product root condition; the constraint
// slack term is lambda/w.
void dot_f(double l, const DotMoments& m, double z0, double w, double& f, double& df) {
  double a = 1 - l * l;
  double a2 = a * a;
  double num = (1 + l * l) * m.p + l * m.q;
  f = num / a2 - z0 + l / w;
  df = (2 * l * m.p + m.q) / a2 + 4 * l * num / (a2 * a) + 1 / w;
}

DotInfo solve_dot_lambda(const DotMoments& m, double z0, double w, const ScalarSolveConfig& cfg) {
  DotInfo info;
  double tol = cfg.root_tolerance * std::max(1.0, m.q);
  double clamp = cfg.lambda_clamp;
  double l = 0, f, df;
  dot_f(l, m, z0, w, f, df);

  if (!cfg.dot_bracketed) {
    for (int it = 0; it < cfg.newton_iters; ++it) {
      if (std::abs(f) <= tol) break;
      l = std::clamp(l - f / df, -clamp, clamp);
      dot_f(l, m, z0, w, f, df);
      info.iterations = it + 1;
    }
    info.lambda = l;
    info.converged = std::abs(f) <= tol;
    return info;
  }

  double lo = -clamp, hi = clamp;
  int cap = std::max(cfg.newton_iters, cfg.max_root_iters);
  for (int it = 0; it < cap; ++it) {
    if (std::abs(f) <= tol) {
      info.converged = true;
      break;
    }
    if (f < 0)
      lo = l;
    else
      hi = l;
    double next = df > 0 ? l - f / df : std::numeric_limits<double>::quiet_NaN();
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == l) break;
    l = next;
    dot_f(l, m, z0, w, f, df);
    info.iterations = it + 1;
  }
  if (!info.converged) info.converged = std::abs(f) <= tol;
  info.lambda = l;
  return info;
}

}  // namespace

double proj_dot(std::span<const double> x0, std::span<const double> y0, double z0, std::span<double> x,
                std::span<double> y, const ScalarSolveConfig& cfg, double w, DotInfo* info) {
  std::size_t n = x0.size();
  DotMoments m = dot_moments(x0, y0);
  DotInfo res = solve_dot_lambda(m, z0, w, cfg);

  const double* xs = x0.data();
  std::vector<double> bumped;
  if (!res.converged) {
    // degenerate x0 = +-y0: nudge the first coordinate and retry once
    bumped.assign(x0.begin(), x0.end());
    bumped[0] += 1e-8;
    DotMoments mb = dot_moments(bumped, y0);
    DotInfo retry = solve_dot_lambda(mb, z0, w, cfg);
    retry.perturbed = true;
    retry.iterations += res.iterations;
    res = retry;
    xs = bumped.data();
  }

  double l = res.lambda;
  double a = 1 - l * l;
  for (std::size_t i = 0; i < n; ++i) {
    double xi = (xs[i] + l * y0[i]) / a;
    double yi = (y0[i] + l * xs[i]) / a;
    x[i] = xi;
    y[i] = yi;
  }
  if (info) *info = res;
  return z0 - l / w;
}

void softmax(std::span<const double> x, std::span<double> out) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : x) mx = std::max(mx, v);
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = std::exp(x[i] - mx);
    s += out[i];
  }
  for (auto& v : out) v /= s;
}

double eval_primitive(const PrimSpec& spec, std::span<const double> x) {
  switch (spec.kind) {
    case PrimKind::Identity: return x[0];
    case PrimKind::Sum: {
      double s = 0;
      for (double v : x) s += v;
      return s;
    }
    case PrimKind::SumReLU: {
      double s = 0;
      for (double v : x) s += v;
      return std::max(0.0, s);
    }
    case PrimKind::Dot: {
      std::size_t n = spec.fanin;
      double s = 0;
      for (std::size_t i = 0; i < n; ++i) s += x[i] * x[n + i];
      return s;
    }
    case PrimKind::Max: return *std::max_element(x.begin(), x.end());
    case PrimKind::Quantize: return quantize_value(x[0], spec.levels, spec.alpha);
  }
  return 0;
}

double project_primitive(const PrimSpec& spec, std::span<const double> x0, double y0, std::span<double> x_out,
                         double w, const ScalarSolveConfig& cfg, std::span<std::size_t> scratch) {
  switch (spec.kind) {
    case PrimKind::Identity: {
      auto [x, y] = proj_identity(x0[0], y0, w);
      x_out[0] = x;
      return y;
    }
    case PrimKind::Sum: return proj_sum(x0, y0, x_out, w);
    case PrimKind::SumReLU: return proj_sum_relu(x0, y0, x_out, w);
    case PrimKind::Max: return proj_max(x0, y0, x_out, scratch.first(x0.size()), w);
    case PrimKind::Quantize: {
      auto [x, y] = proj_quantize(x0[0], y0, spec.levels, spec.alpha, w);
      x_out[0] = x;
      return y;
    }
    case PrimKind::Dot: {
      std::size_t n = spec.fanin;
      return proj_dot(x0.first(n), x0.subspan(n, n), y0, x_out.first(n), x_out.subspan(n, n), cfg, w);
    }
  }
  return 0;
}

Projected proj_sum(const std::vector<double>& x0, double y0) {
  Projected r{std::vector<double>(x0.size()), 0};
  r.y = proj_sum(std::span<const double>(x0), y0, std::span<double>(r.x));
  return r;
}

Projected proj_sum_relu(const std::vector<double>& x0, double y0) {
  Projected r{std::vector<double>(x0.size()), 0};
  r.y = proj_sum_relu(std::span<const double>(x0), y0, std::span<double>(r.x));
  return r;
}

Projected proj_max(const std::vector<double>& x0, double y0) {
  Projected r{std::vector<double>(x0.size()), 0};
  std::vector<std::size_t> order(x0.size());
  r.y = proj_max(std::span<const double>(x0), y0, std::span<double>(r.x), std::span<std::size_t>(order));
  return r;
}

ProjectedDot proj_dot(const std::vector<double>& x0, const std::vector<double>& y0, double z0,
                      const ScalarSolveConfig& cfg) {
  if (x0.size() != y0.size()) throw std::invalid_argument("proj_dot: operand sizes differ");
  ProjectedDot r;
  r.x.resize(x0.size());
  r.y.resize(y0.size());
  r.z = proj_dot(std::span<const double>(x0), std::span<const double>(y0), z0, std::span<double>(r.x),
                 std::span<double>(r.y), cfg, 1.0, &r.info);
  return r;
}

std::vector<double> prox_cross_entropy(const std::vector<double>& x0, std::size_t label, double lambda,
                                       const ScalarSolveConfig& cfg, CeInfo* info) {
  std::vector<double> out(x0.size());
  CeInfo i = prox_cross_entropy(std::span<const double>(x0), label, lambda, std::span<double>(out), cfg);
  if (info) *info = i;
  return out;
}

ConsensusResult proj_consensus(const PrimSpec& base, const std::vector<double>& x0,
                               const std::vector<double>& y_outs, bool weighted, const ScalarSolveConfig& cfg) {
  base.validate();
  if (x0.size() != base.fanin * base.slots())
    throw std::invalid_argument("proj_consensus: input size does not match " + base.describe());
  ConsensusResult r{x0, y_outs};
  if (y_outs.empty()) return r;
  double mean = 0, c = 0;
  for (double v : y_outs) {
    c += 1;
    mean = c == 1 ? v : mean + (v - mean) / c;
  }
  std::vector<std::size_t> scratch(x0.size());
  double y = project_primitive(base, x0, mean, r.x, weighted ? c : 1.0, cfg, scratch);
  std::fill(r.y_outs.begin(), r.y_outs.end(), y);
  return r;
}

}  // namespace projnet
