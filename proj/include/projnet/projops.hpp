#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace projnet {

enum class PrimKind { Identity, Sum, SumReLU, Dot, Max, Quantize };
const char* to_string(PrimKind k);

struct PrimSpec {
  PrimKind kind = PrimKind::Identity;
  std::size_t fanin = 1;  // n for Sum/SumReLU/Dot/Max
  std::size_t levels = 0; // Quantize only
  double alpha = 0;       // Quantize only

  static PrimSpec identity() { return {PrimKind::Identity, 1, 0, 0}; }
  static PrimSpec sum(std::size_t n) { return {PrimKind::Sum, n, 0, 0}; }
  static PrimSpec sum_relu(std::size_t n) { return {PrimKind::SumReLU, n, 0, 0}; }
  static PrimSpec dot(std::size_t n) { return {PrimKind::Dot, n, 0, 0}; }
  static PrimSpec max(std::size_t n) { return {PrimKind::Max, n, 0, 0}; }
  static PrimSpec quantize(std::size_t k, double alpha) { return {PrimKind::Quantize, 1, k, alpha}; }

  // Throws std::invalid_argument when n, k or alpha are out of range.
  void validate() const;
  // Number of input slots (2 for Dot, else 1).
  std::size_t slots() const { return kind == PrimKind::Dot ? 2 : 1; }
  std::string describe() const;
};

enum class TargetKind { Margin, CrossEntropyProx };

struct TargetSpec {
  TargetKind kind = TargetKind::CrossEntropyProx;
  double param = 5.0;  // margin m, or prox scale lambda

  static TargetSpec margin(double m) { return {TargetKind::Margin, m}; }
  static TargetSpec cross_entropy(double lambda) { return {TargetKind::CrossEntropyProx, lambda}; }
  void validate() const;
  std::string describe() const;
};

enum class CeSolver { Newton, DampedFixedPoint };

struct ScalarSolveConfig {
  int newton_iters = 8;
  int fp_iters = 10;
  double root_tolerance = 1e-10;
  double lambda_clamp = 1 - 1e-9;
  // proj_dot: bracketed Newton keeps iterating past newton_iters until
  // |f| <= root_tolerance*max(1,q) or max_root_iters is reached.
  bool dot_bracketed = true;
  int max_root_iters = 100;
  CeSolver ce_solver = CeSolver::Newton;

  void validate() const;
};

// The scalar kernels below work on spans and return the projected output.
// `w` weights the output term of the distance, as in the weighted consensus
// projection; w = 1 is the plain orthogonal projection.

std::pair<double, double> proj_identity(double x0, double y0, double w = 1.0);

double proj_sum(std::span<const double> x0, double y0, std::span<double> x, double w = 1.0);
double proj_sum_relu(std::span<const double> x0, double y0, std::span<double> x, double w = 1.0);
// `order` is scratch of size n.
double proj_max(std::span<const double> x0, double y0, std::span<double> x, std::span<std::size_t> order,
                double w = 1.0);
std::pair<double, double> proj_quantize(double x0, double y0, std::size_t k, double alpha, double w = 1.0);
double proj_margin(double x0, double y, double m);

struct DotInfo {
  double lambda = 0;
  int iterations = 0;
  bool converged = false;
  bool perturbed = false;
};

double proj_dot(std::span<const double> x0, std::span<const double> y0, double z0, std::span<double> x,
                std::span<double> y, const ScalarSolveConfig& cfg = {}, double w = 1.0,
                DotInfo* info = nullptr);

struct CeInfo {
  double residual = 0;  // ||x - x0 - lambda (y - softmax(x))||
  int iterations = 0;
};

// Prox of lambda * CE(., onehot(label)) at x0, written to out.
CeInfo prox_cross_entropy(std::span<const double> x0, std::size_t label, double lambda, std::span<double> out,
                          const ScalarSolveConfig& cfg = {});

// Value-returning conveniences.
struct Projected {
  std::vector<double> x;
  double y = 0;
};
struct ProjectedDot {
  std::vector<double> x, y;
  double z = 0;
  DotInfo info;
};

Projected proj_sum(const std::vector<double>& x0, double y0);
Projected proj_sum_relu(const std::vector<double>& x0, double y0);
Projected proj_max(const std::vector<double>& x0, double y0);
ProjectedDot proj_dot(const std::vector<double>& x0, const std::vector<double>& y0, double z0,
                      const ScalarSolveConfig& cfg = {});
std::vector<double> prox_cross_entropy(const std::vector<double>& x0, std::size_t label, double lambda,
                                       const ScalarSolveConfig& cfg = {}, CeInfo* info = nullptr);

void softmax(std::span<const double> x, std::span<double> out);

// Consensus projection for one primitive instance: x0 holds the inputs (both
// operands back to back for Dot), y_outs the outgoing copies. Returns the
// projected inputs and one output value replicated to every copy.
struct ConsensusResult {
  std::vector<double> x;
  std::vector<double> y_outs;
};
ConsensusResult proj_consensus(const PrimSpec& base, const std::vector<double>& x0,
                               const std::vector<double>& y_outs, bool weighted = false,
                               const ScalarSolveConfig& cfg = {});

// Projects one primitive instance onto its graph given the mean output y0:
// x_out receives the inputs, the return value is the output.
double project_primitive(const PrimSpec& spec, std::span<const double> x0, double y0, std::span<double> x_out,
                         double w, const ScalarSolveConfig& cfg, std::span<std::size_t> scratch);

// Forward evaluation of one primitive instance.
double eval_primitive(const PrimSpec& spec, std::span<const double> x);

double quantize_value(double x, std::size_t k, double alpha);

}  // namespace projnet
