#include "poupinn/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "poupinn/errors.hpp"
#include "poupinn/threading.hpp"

namespace poupinn {

AdaptiveDensity::AdaptiveDensity(Partition partition, Box domain, double beta,
                                 Regularizer regularizer, std::uint64_t seed,
                                 std::size_t n_mc)
    : partition_(std::move(partition)),
      domain_(std::move(domain)),
      beta_(beta),
      regularizer_(regularizer),
      n_mc_(n_mc) {
  if (beta_ <= 0.0) throw ConfigError("density: beta must be positive");
  Rng rng(derive_seed(seed, "density-mc"));
  mc_points_.resize(n_mc_ * domain_.dim());
  for (std::size_t i = 0; i < n_mc_; ++i)
    domain_.sample_uniform(
        rng, std::span<double>(mc_points_.data() + i * domain_.dim(), domain_.dim()));
  normalize();
}

void AdaptiveDensity::normalize() {
  const int m = partition_.size();
  const int d = domain_.dim();
  masses_.assign(m, 0.0);
  weights_.assign(m, 0.0);
  const double volume = domain_.volume();
  for (int k = 0; k < m; ++k) {
    // Deterministic chunked reduction over the fixed cloud.
    const std::size_t chunk = 4096;
    const std::size_t n_chunks = (n_mc_ + chunk - 1) / chunk;
    std::vector<double> partial(n_chunks, 0.0);
    parallel_chunks(n_mc_, chunk, [&](std::size_t begin, std::size_t end) {
      double acc = 0.0;
      for (std::size_t i = begin; i < end; ++i)
        acc += phi(partition_.balls[k],
                   std::span<const double>(mc_points_.data() + i * d, d));
      partial[begin / chunk] = acc;
    });
    double total = 0.0;
    for (double p : partial) total += p;
    const double mass = volume * total / static_cast<double>(n_mc_);
    if (mass <= 0.0)
      throw ZeroMassBall("normalize: ball " + std::to_string(k) +
                         " carries no mass inside the domain");
    masses_[k] = mass;
    weights_[k] = 1.0 / mass;
  }
}

void AdaptiveDensity::mass_gradient(int ball, std::span<double> dcenter,
                                    double& dradius) const {
  const int d = domain_.dim();
  std::fill(dcenter.begin(), dcenter.end(), 0.0);
  dradius = 0.0;
  const std::size_t chunk = 4096;
  const std::size_t n_chunks = (n_mc_ + chunk - 1) / chunk;
  std::vector<double> partial(n_chunks * (d + 1), 0.0);
  parallel_chunks(n_mc_, chunk, [&](std::size_t begin, std::size_t end) {
    std::vector<double> acc(d + 1, 0.0);
    for (std::size_t i = begin; i < end; ++i) {
      const PhiDerivs pd = phi_derivs(
          partition_.balls[ball], std::span<const double>(mc_points_.data() + i * d, d));
      if (pd.value == 0.0 && pd.ds == 0.0) continue;
      for (int a = 0; a < d; ++a) acc[a] += pd.dc[a];
      acc[d] += pd.ds;
    }
    std::memcpy(partial.data() + (begin / chunk) * (d + 1), acc.data(),
                (d + 1) * sizeof(double));
  });
  const double scale = domain_.volume() / static_cast<double>(n_mc_);
  for (std::size_t c = 0; c < n_chunks; ++c) {
    for (int a = 0; a < d; ++a) dcenter[a] += partial[c * (d + 1) + a];
    dradius += partial[c * (d + 1) + d];
  }
  for (int a = 0; a < d; ++a) dcenter[a] *= scale;
  dradius *= scale;
}

double AdaptiveDensity::pdf(std::span<const double> x) const {
  const int m = partition_.size();
  double acc = 0.0;
  for (int k = 0; k < m; ++k) acc += weights_[k] * phi(partition_.balls[k], x);
  return acc / static_cast<double>(m);
}

void AdaptiveDensity::pdf_gradient(std::span<const double> x,
                                   std::span<double> out) const {
  const int m = partition_.size();
  const int d = domain_.dim();
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < m; ++k) {
    const PhiDerivs pd = phi_derivs(partition_.balls[k], x);
    std::vector<double> dm(d, 0.0);
    double dms = 0.0;
    mass_gradient(k, dm, dms);
    const double w = weights_[k];
    // p = (1/M) sum w_k phi_k,  w_k = 1/m_k:
    //   dp/dc = (w dphi/dc - phi dm/dc / m^2) / M
    double* slot = out.data() + static_cast<std::size_t>(k) * (d + 1);
    for (int a = 0; a < d; ++a)
      slot[a] = (w * pd.dc[a] - pd.value * w * w * dm[a]) / m;
    slot[d] = (w * pd.ds - pd.value * w * w * dms) / m;
  }
}

void AdaptiveDensity::pdf_spatial_gradient(std::span<const double> x,
                                           std::span<double> out) const {
  const int m = partition_.size();
  const int d = domain_.dim();
  std::fill(out.begin(), out.end(), 0.0);
  for (int k = 0; k < m; ++k) {
    const PhiDerivs pd = phi_derivs(partition_.balls[k], x);
    for (int a = 0; a < d; ++a) out[a] += weights_[k] * pd.dx[a] / m;
  }
}

std::vector<double> AdaptiveDensity::shape_params() const {
  const int d = domain_.dim();
  std::vector<double> out(shape_param_count());
  for (int k = 0; k < partition_.size(); ++k) {
    for (int a = 0; a < d; ++a) out[k * (d + 1) + a] = partition_.balls[k].center[a];
    out[k * (d + 1) + d] = partition_.balls[k].radius;
  }
  return out;
}

void AdaptiveDensity::set_shape_params(std::span<const double> params) {
  const int d = domain_.dim();
  for (int k = 0; k < partition_.size(); ++k) {
    for (int a = 0; a < d; ++a) partition_.balls[k].center[a] = params[k * (d + 1) + a];
    partition_.balls[k].radius = params[k * (d + 1) + d];
  }
}

SampleSet AdaptiveDensity::sample(std::size_t n, std::uint64_t seed) const {
  const int m = partition_.size();
  const int d = domain_.dim();
  SampleSet set;
  set.dim = d;
  set.seed = seed;
  set.interior.reserve(n * d);
  set.interior_pdf.reserve(n);
  Rng rng(derive_seed(seed, "interior-sample"));
  std::vector<double> x(d);
  for (std::size_t i = 0; i < n; ++i) {
    const int k = static_cast<int>(rng.below(static_cast<std::uint64_t>(m)));
    const Ball& ball = partition_.balls[k];
    // Proposal box: ball bounding box clipped to the domain.
    Box prop;
    prop.lo.resize(d);
    prop.hi.resize(d);
    bool empty = false;
    for (int a = 0; a < d; ++a) {
      prop.lo[a] = std::max(domain_.lo[a], ball.center[a] - ball.radius);
      prop.hi[a] = std::min(domain_.hi[a], ball.center[a] + ball.radius);
      if (prop.lo[a] >= prop.hi[a]) empty = true;
    }
    if (empty)
      throw RejectionStall("sample: ball " + std::to_string(k) +
                           " lies outside the domain");
    long attempts = 0;
    for (;;) {
      ++attempts;
      if (attempts > 10000)
        throw RejectionStall("sample: acceptance rate below 1e-4 for ball " +
                             std::to_string(k));
      prop.sample_uniform(rng, x);
      const double f = phi(ball, x);
      if (f > 0.0 && rng.uniform() < f) break;
    }
    set.interior.insert(set.interior.end(), x.begin(), x.end());
    const double p = pdf(x);
    if (p <= 0.0) throw NonPositivePdf("sample: pdf non-positive at accepted point");
    set.interior_pdf.push_back(p);
  }
  return set;
}

AscentEval ascent_objective(const AdaptiveDensity& density,
                            std::span<const double> squared_residuals,
                            const SampleSet& samples) {
  const std::size_t n = samples.n_interior();
  if (squared_residuals.size() != n)
    throw Error("ascent_objective: residual count does not match samples");
  const int d = samples.dim;
  const int m = density.partition().size();
  const std::size_t np = density.shape_param_count();

  AscentEval out;
  out.gradient.assign(np, 0.0);

  // Mass gradients are sample-independent: hoist them out of the point loop.
  std::vector<double> dmass(np, 0.0);
  for (int k = 0; k < m; ++k) {
    double ds = 0.0;
    density.mass_gradient(k, std::span<double>(dmass.data() + k * (d + 1), d), ds);
    dmass[k * (d + 1) + d] = ds;
  }
  const auto& weights = density.weights();

  std::vector<double> pgrad(np);
  std::vector<double> xgrad(d);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> x(samples.interior.data() + i * d, d);
    const double pbar = samples.interior_pdf[i];
    const double p = density.pdf(x);
    if (p <= 0.0)
      throw NonPositivePdf("ascent_objective: pdf non-positive at sample " +
                           std::to_string(i));
    // dp/d(c_k, s_k) assembled from phi derivatives + mass renormalization.
    for (int k = 0; k < m; ++k) {
      const PhiDerivs pd = phi_derivs(density.partition().balls[k], x);
      const double w = weights[k];
      double* slot = pgrad.data() + static_cast<std::size_t>(k) * (d + 1);
      const double* dm = dmass.data() + static_cast<std::size_t>(k) * (d + 1);
      for (int a = 0; a < d; ++a)
        slot[a] = (w * pd.dc[a] - pd.value * w * w * dm[a]) / m;
      slot[d] = (w * pd.ds - pd.value * w * w * dm[d]) / m;
    }

    const double q = 1.0 / (pbar * static_cast<double>(n));
    out.value += squared_residuals[i] * p * q;
    if (density.regularizer() == Regularizer::Entropy) {
      out.value -= density.beta() * p * std::log(p) * q;
      const double coeff = (squared_residuals[i] - density.beta() * (std::log(p) + 1.0)) * q;
      for (std::size_t t = 0; t < np; ++t) out.gradient[t] += coeff * pgrad[t];
    } else {
      // Dirichlet: |grad_x p|^2 Monte-Carlo estimate under pbar.
      density.pdf_spatial_gradient(x, xgrad);
      double g2 = 0.0;
      for (int a = 0; a < d; ++a) g2 += xgrad[a] * xgrad[a];
      out.value -= density.beta() * g2 * q;
      const double coeff = squared_residuals[i] * q;
      for (std::size_t t = 0; t < np; ++t) out.gradient[t] += coeff * pgrad[t];
      // d|grad p|^2/dpsi = 2 grad_x p . d(grad_x p)/dpsi with
      //   (grad_x p)_a = (1/M) sum_k w_k dphi_k/dx_a,
      //   d(dphi/dx_a)/dc_b = -dphi/dx_a dx_b,
      //   d(dphi/dx_a)/ds   = -8 (x-c)_a / s^3 (2 r^2/s^2 - 1)  inside the support.
      const double two_beta_q = 2.0 * density.beta() * q;
      for (int k = 0; k < m; ++k) {
        const Ball& ball = density.partition().balls[k];
        const PhiDerivs pd = phi_derivs(ball, x);
        const double w = weights[k];
        const double* dm = dmass.data() + static_cast<std::size_t>(k) * (d + 1);
        double* slot = out.gradient.data() + static_cast<std::size_t>(k) * (d + 1);
        double dot_m = 0.0;
        for (int a = 0; a < d; ++a) dot_m += xgrad[a] * pd.dx[a];
        const double r2 = squared_distance(x, ball.center);
        const double s2 = ball.radius * ball.radius;
        for (int b = 0; b < d; ++b) {
          double dot_cb = 0.0;
          for (int a = 0; a < d; ++a) dot_cb += xgrad[a] * (-pd.dxx[a * d + b]);
          slot[b] -= two_beta_q * (w * dot_cb - dot_m * w * w * dm[b]) / m;
        }
        double dot_s = 0.0;
        if (r2 < s2) {
          for (int a = 0; a < d; ++a) {
            const double da = x[a] - ball.center[a];
            dot_s += xgrad[a] * (-8.0 * da / (s2 * ball.radius) * (2.0 * r2 / s2 - 1.0));
          }
        }
        slot[d] -= two_beta_q * (w * dot_s - dot_m * w * w * dm[d]) / m;
      }
    }
  }
  return out;
}

std::vector<double> closed_form_pstar(std::span<const double> squared_residuals,
                                      double beta, double cell_volume) {
  double peak = -std::numeric_limits<double>::infinity();
  for (double r2 : squared_residuals) peak = std::max(peak, r2);
  std::vector<double> p(squared_residuals.size());
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp((squared_residuals[i] - peak) / beta);
    total += p[i];
  }
  const double norm = total * cell_volume;
  for (double& v : p) v /= norm;
  return p;
}

double kl_to_uniform_grid(std::span<const double> density_values,
                          double cell_volume, double domain_volume) {
  double mass = 0.0;
  for (double p : density_values) mass += p * cell_volume;
  if (mass <= 0.0) throw Error("kl_to_uniform: density has zero grid mass");
  double kl = 0.0;
  for (double p : density_values) {
    const double q = p / mass;
    if (q > 0.0) kl += q * std::log(q * domain_volume) * cell_volume;
  }
  return std::max(kl, 0.0);
}

double kl_to_uniform(const AdaptiveDensity& density, int grid_per_dim) {
  const Box& box = density.domain();
  const int d = box.dim();
  std::size_t cells = 1;
  for (int a = 0; a < d; ++a) cells *= static_cast<std::size_t>(grid_per_dim);
  std::vector<double> values(cells, 0.0);
  std::vector<double> x(d);
  for (std::size_t c = 0; c < cells; ++c) {
    std::size_t rem = c;
    for (int a = 0; a < d; ++a) {
      const std::size_t idx = rem % grid_per_dim;
      rem /= grid_per_dim;
      x[a] = box.lo[a] + (idx + 0.5) * (box.hi[a] - box.lo[a]) / grid_per_dim;
    }
    values[c] = density.pdf(x);
  }
  const double cell_volume = box.volume() / static_cast<double>(cells);
  return kl_to_uniform_grid(values, cell_volume, box.volume());
}

}  // namespace poupinn
