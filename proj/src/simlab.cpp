#include "rcdens/simlab.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <numbers>
#include <random>
#include <stdexcept>

#include "rcdens/forest.hpp"
#include "rcdens/stats.hpp"

namespace rcdens {

namespace {

double normal_pdf(double b, double mean, double sd) {
  const double z = (b - mean) / sd;
  return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

struct DgpDraws {
  Eigen::MatrixXd x;
  Eigen::VectorXd a0;
  Eigen::VectorXd v;
  Eigen::VectorXd uniform;  // mixture-component draw
  Eigen::VectorXd mix_normal;
};

DgpDraws base_draws(int n, int p, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("generate: n must be >= 1");
  if (p < 3) throw std::invalid_argument("generate: p must be >= 3 (X1..X3 are structural)");
  std::mt19937_64 rng(derive_seed(seed, 0xD67ULL, 0));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  DgpDraws d;
  d.x.resize(n, p);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < p; ++j) d.x(i, j) = gauss(rng);
  d.a0.resize(n);
  d.v.resize(n);
  d.uniform.resize(n);
  d.mix_normal.resize(n);
  for (int i = 0; i < n; ++i) d.a0(i) = gauss(rng);
  for (int i = 0; i < n; ++i) d.v(i) = gauss(rng);
  for (int i = 0; i < n; ++i) d.uniform(i) = unif(rng);
  for (int i = 0; i < n; ++i) d.mix_normal(i) = gauss(rng);
  return d;
}

constexpr double kMixSdLeft = 1.0;                 // N(-1.5, 1)
const double kMixSdRight = std::sqrt(0.5);         // N(1.5, sd = sqrt(1/2))

//! Mixture draw: standard normal z mapped into the component selected by u.
double mixture_draw(double u, double z, double left_weight) {
  return u < left_weight ? -1.5 + kMixSdLeft * z : 1.5 + kMixSdRight * z;
}

GeneratedSample assemble(const DgpDraws& d, const Eigen::VectorXd& b1) {
  const int n = static_cast<int>(d.x.rows());
  GeneratedSample sample;
  sample.data.x = d.x;
  sample.data.w.resize(n);
  sample.data.y.resize(n);
  sample.b0.resize(n);
  sample.b1 = b1;
  for (int i = 0; i < n; ++i) {
    const double x1 = d.x(i, 0);
    const double x3 = d.x(i, 2);
    sample.b0(i) = std::sin(x1) + d.a0(i);
    sample.data.w(i) = 1.0 + x3 + (1.0 + x3 * x3) * d.v(i);
    sample.data.y(i) = sample.b0(i) + b1(i) * sample.data.w(i);
  }
  return sample;
}

}  // namespace

GeneratedSample generate_full(const DgpSpec& spec) {
  const DgpDraws d = base_draws(spec.n, spec.p, spec.seed);
  Eigen::VectorXd b1(spec.n);
  if (spec.kind == DgpSpec::Kind::dgp1) {
    for (int i = 0; i < spec.n; ++i) {
      const double center = d.x(i, 1) + 0.5 * d.x(i, 2) + 0.25 * d.x(i, 1) * d.x(i, 2);
      b1(i) = center + mixture_draw(d.uniform(i), d.mix_normal(i), 0.5);
    }
  } else {
    for (int i = 0; i < spec.n; ++i) {
      b1(i) = mixture_draw(d.uniform(i), d.mix_normal(i), normal_cdf(d.x(i, 1)));
    }
  }
  return assemble(d, b1);
}

Dataset generate_dgp1(int n, int p, std::uint64_t seed) {
  return generate_full({DgpSpec::Kind::dgp1, n, p, seed}).data;
}

Dataset generate_dgp2(int n, int p, std::uint64_t seed) {
  return generate_full({DgpSpec::Kind::dgp2, n, p, seed}).data;
}

Dataset generate(const DgpSpec& spec) { return generate_full(spec).data; }

double draw_dgp2_slope(double x2, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  return mixture_draw(unif(rng), gauss(rng), normal_cdf(x2));
}

Eigen::VectorXd true_conditional_density(const DgpSpec& spec, const Eigen::VectorXd& x,
                                         const Eigen::VectorXd& b1_grid) {
  if (x.size() < 3) throw std::invalid_argument("true_conditional_density: x needs >= 3 entries");
  double left_weight = 0.5;
  double center = 0.0;
  if (spec.kind == DgpSpec::Kind::dgp1) {
    center = x(1) + 0.5 * x(2) + 0.25 * x(1) * x(2);
  } else {
    left_weight = normal_cdf(x(1));
  }
  Eigen::VectorXd out(b1_grid.size());
  for (Eigen::Index j = 0; j < b1_grid.size(); ++j) {
    out(j) = left_weight * normal_pdf(b1_grid(j), center - 1.5, kMixSdLeft) +
             (1.0 - left_weight) * normal_pdf(b1_grid(j), center + 1.5, kMixSdRight);
  }
  return out;
}

Eigen::VectorXd default_test_point(int p) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(p);
  x(1) = 0.3;
  return x;
}

Eigen::VectorXd default_b1_grid() {
  const int n = 321;
  Eigen::VectorXd grid(n);
  for (int i = 0; i < n; ++i) grid(i) = -8.0 + 0.05 * i;
  return grid;
}

double integrated_squared_error(const Eigen::VectorXd& grid, const Eigen::VectorXd& a,
                                const Eigen::VectorXd& b) {
  if (grid.size() != a.size() || grid.size() != b.size()) {
    throw std::invalid_argument("integrated_squared_error: size mismatch");
  }
  double acc = 0.0;
  for (Eigen::Index i = 0; i + 1 < grid.size(); ++i) {
    const double f0 = (a(i) - b(i)) * (a(i) - b(i));
    const double f1 = (a(i + 1) - b(i + 1)) * (a(i + 1) - b(i + 1));
    acc += 0.5 * (f0 + f1) * (grid(i + 1) - grid(i));
  }
  return acc;
}

namespace {

double interpolated_quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double pos = p * (v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - lo;
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

}  // namespace

McReport run_monte_carlo(const DgpSpec& spec, const FitConfig& fit_config, int reps,
                         const Eigen::VectorXd& test_point, const Eigen::VectorXd& b1_grid) {
  if (reps < 2) throw std::invalid_argument("run_monte_carlo: reps must be >= 2");
  McReport report;
  report.b1_grid = b1_grid;
  report.true_density = true_conditional_density(spec, test_point, b1_grid);
  report.requested_reps = reps;

  std::vector<Eigen::VectorXd> curves;
  curves.reserve(reps);
  for (int rep = 0; rep < reps; ++rep) {
    DgpSpec rep_spec = spec;
    rep_spec.seed = derive_seed(spec.seed, 0x4E9ULL, rep);
    FitConfig rep_config = fit_config;
    rep_config.seed = derive_seed(spec.seed, 0xF17ULL, rep);
    try {
      const Dataset data = generate(rep_spec);
      const ConditionalDensityModel model = fit_conditional_density(data, rep_config);
      curves.push_back(evaluate_slope_density(model, test_point, b1_grid));
    } catch (const std::exception& e) {
      ++report.failed_reps;
      std::cerr << "[rcdens] monte carlo rep " << rep << " failed: " << e.what() << "\n";
    }
  }
  if (curves.empty()) throw std::runtime_error("run_monte_carlo: all replications failed");

  const int done = static_cast<int>(curves.size());
  report.curves.resize(done, b1_grid.size());
  for (int r = 0; r < done; ++r) report.curves.row(r) = curves[r].transpose();

  report.median_curve.resize(b1_grid.size());
  report.q05_curve.resize(b1_grid.size());
  report.q95_curve.resize(b1_grid.size());
  std::vector<double> column(done);
  for (Eigen::Index j = 0; j < b1_grid.size(); ++j) {
    for (int r = 0; r < done; ++r) column[r] = report.curves(r, j);
    report.median_curve(j) = interpolated_quantile(column, 0.5);
    report.q05_curve(j) = interpolated_quantile(column, 0.05);
    report.q95_curve(j) = interpolated_quantile(column, 0.95);
  }
  report.ise.resize(done);
  for (int r = 0; r < done; ++r) {
    report.ise(r) = integrated_squared_error(b1_grid, report.curves.row(r).transpose(),
                                             report.true_density);
  }
  return report;
}

}  // namespace rcdens
