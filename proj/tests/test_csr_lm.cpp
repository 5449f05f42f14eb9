#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <set>

#include "poupinn/errors.hpp"
#include "poupinn/lm.hpp"
#include "poupinn/rng.hpp"
#include "test_support.hpp"

using namespace poupinn;

namespace {

SparseMatrixCSR random_sparse(Rng& rng, int rows, int cols, double density) {
  CsrBuilder b(rows, cols);
  std::vector<std::int32_t> cs;
  std::vector<double> vs;
  for (int r = 0; r < rows; ++r) {
    cs.clear();
    vs.clear();
    for (int c = 0; c < cols; ++c)
      if (rng.uniform() < density) {
        cs.push_back(c);
        vs.push_back(rng.uniform(-1, 1));
      }
    b.set_row(r, cs, vs);
  }
  return b.finish();
}

EnsembleModel one_ball_model(std::uint64_t seed) {
  Partition part;
  part.balls = {{{0.5, 0.5}, 3.0}};
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {5};
  spec.output_dim = 1;
  EnsembleModel m = make_ensemble(part, spec, seed);
  Rng rng(derive_seed(seed, "vals"));
  for (auto& p : m.params) test::randomize_params(p, rng);
  return m;
}

}  // namespace

TEST_SUITE("csr") {

TEST_CASE("invariants and dense round trip") {
  Rng rng(1);
  const SparseMatrixCSR m = random_sparse(rng, 12, 9, 0.4);
  m.check_invariants();
  const auto dense = m.to_dense();
  std::vector<double> x(9), y(12), yd(12, 0.0);
  for (double& v : x) v = rng.uniform(-1, 1);
  m.multiply(x, y);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 9; ++c) yd[r] += dense[r * 9 + c] * x[c];
  for (int r = 0; r < 12; ++r) CHECK(y[r] == doctest::Approx(yd[r]).epsilon(1e-14));

  std::vector<double> z(12), w(9), wd(9, 0.0);
  for (double& v : z) v = rng.uniform(-1, 1);
  m.multiply_transpose(z, w);
  for (int r = 0; r < 12; ++r)
    for (int c = 0; c < 9; ++c) wd[c] += dense[r * 9 + c] * z[r];
  for (int c = 0; c < 9; ++c) CHECK(w[c] == doctest::Approx(wd[c]).epsilon(1e-14));
}

TEST_CASE("matrix market dump has the exchange header and every entry") {
  Rng rng(2);
  const SparseMatrixCSR m = random_sparse(rng, 5, 4, 0.5);
  const std::string path = "test_dump.mtx";
  write_matrix_market(m, path);
  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "%%MatrixMarket matrix coordinate real general");
  long rows, cols, nnz;
  in >> rows >> cols >> nnz;
  CHECK(rows == 5);
  CHECK(cols == 4);
  CHECK(nnz == m.nnz());
  int count = 0;
  long r, c;
  double v;
  while (in >> r >> c >> v) ++count;
  CHECK(count == m.nnz());
  std::remove(path.c_str());
}

}  // TEST_SUITE

TEST_SUITE("lm") {

TEST_CASE("one-ball assembly is dense and matches the naive jacobian") {
  const EnsembleModel model = one_ball_model(10);
  const ProblemSpec problem = make_helmholtz();
  SampleSet samples;
  samples.dim = 2;
  Rng rng(3);
  for (int i = 0; i < 12; ++i)
    samples.interior.insert(samples.interior.end(),
                            {rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
  samples.boundary = {0.0, 0.3, 1.0, 0.8};

  const AssembledSystem sys = assemble(model, problem, samples);
  CHECK(sys.jacobian.n_rows == 14);
  CHECK(sys.jacobian.nnz() ==
        sys.jacobian.n_rows * static_cast<std::int64_t>(model.total_params()));

  // loss identity: ||r||^2 = mean interior r^2 + mean boundary b^2
  double loss = 0.0;
  for (double v : sys.residual) loss += v * v;
  double interior = 0.0, boundary = 0.0;
  for (int i = 0; i < 12; ++i) {
    const std::span<const double> x(samples.interior.data() + 2 * i, 2);
    const double r = residual(problem, predict_bundle(model, x), x).value[0];
    interior += r * r / 12.0;
  }
  for (int k = 0; k < 2; ++k) {
    const std::span<const double> x(samples.boundary.data() + 2 * k, 2);
    const double b = boundary_residual(problem, predict(model, x)[0], x);
    boundary += b * b / 2.0;
  }
  CHECK(loss == doctest::Approx(interior + boundary).epsilon(1e-13));

  // J e_k along finite differences of the scaled residual vector
  const double h = 1e-6;
  std::vector<double> theta = model.flat_params();
  EnsembleModel pm = model;
  const auto dense = sys.jacobian.to_dense();
  Rng pick(7);
  for (int rep = 0; rep < 10; ++rep) {
    const std::size_t k = pick.below(theta.size());
    std::vector<double> tp = theta, tm = theta;
    tp[k] += h;
    tm[k] -= h;
    pm.set_flat_params(tp);
    const auto rp = residual_vector(pm, problem, samples);
    pm.set_flat_params(tm);
    const auto rm = residual_vector(pm, problem, samples);
    for (std::size_t row = 0; row < rp.size(); ++row)
      CHECK(dense[row * theta.size() + k] ==
            doctest::Approx((rp[row] - rm[row]) / (2 * h)).epsilon(1e-6));
  }
}

TEST_CASE("structural nnz equals per-point covering counts") {
  Rng rng(17);
  Partition part;
  for (int j = 0; j < 12; ++j)
    part.balls.push_back({{rng.uniform(), rng.uniform()}, rng.uniform(0.2, 0.35)});
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_widths = {4};
  spec.output_dim = 1;
  EnsembleModel model = make_ensemble(part, spec, 23);
  const ProblemSpec problem = make_supervised(supervised_default_target);

  SampleSet samples;
  samples.dim = 2;
  std::int64_t expected = 0;
  int got = 0;
  while (got < 200) {
    double x[2] = {rng.uniform(), rng.uniform()};
    int covering = 0;
    for (const Ball& b : part.balls)
      if (phi(b, x) > 0.0) ++covering;
    if (covering == 0) continue;
    ++got;
    samples.interior.insert(samples.interior.end(), {x[0], x[1]});
    expected += covering * static_cast<std::int64_t>(spec.param_count());
  }
  const AssembledSystem sys = assemble(model, problem, samples);
  CHECK(sys.jacobian.nnz() == expected);
}

TEST_CASE("assemble reports uncovered points") {
  const EnsembleModel model = one_ball_model(29);
  SampleSet samples;
  samples.dim = 2;
  samples.interior = {50.0, 50.0};
  CHECK_THROWS_AS(assemble(model, make_helmholtz(), samples), UncoveredPoint);
}

TEST_CASE("normal matrix equals the dense product and is structurally symmetric") {
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const SparseMatrixCSR j = random_sparse(rng, 40, 25, rng.uniform(0.1, 0.6));
    const SparseMatrixCSR h = normal_matrix(j);
    h.check_invariants();
    const auto jd = j.to_dense();
    const auto hd = h.to_dense();
    for (int a = 0; a < 25; ++a)
      for (int b = 0; b < 25; ++b) {
        double want = 0.0;
        for (int r = 0; r < 40; ++r) want += jd[r * 25 + a] * jd[r * 25 + b];
        CHECK(std::abs(hd[a * 25 + b] - want) < 1e-12);
        CHECK(hd[a * 25 + b] == hd[b * 25 + a]);  // mirrored bitwise
      }
  }
}

TEST_CASE("normal matrix structure is the union of per-point covering cliques") {
  Rng rng(57);
  for (int trial = 0; trial < 5; ++trial) {
    Partition part;
    for (int j = 0; j < 9; ++j)
      part.balls.push_back({{rng.uniform(), rng.uniform()}, rng.uniform(0.25, 0.5)});
    MlpSpec spec;
    spec.input_dim = 2;
    spec.hidden_widths = {3};
    spec.output_dim = 1;
    EnsembleModel model = make_ensemble(part, spec, trial);
    const std::size_t p = model.per_expert();

    SampleSet samples;
    samples.dim = 2;
    std::set<std::pair<int, int>> pairs;
    std::size_t max_cover = 0;
    int got = 0;
    while (got < 150) {
      double x[2] = {rng.uniform(), rng.uniform()};
      std::vector<int> active;
      for (int j = 0; j < part.size(); ++j)
        if (phi(part.balls[j], x) > 0.0) active.push_back(j);
      if (active.empty()) continue;
      ++got;
      samples.interior.insert(samples.interior.end(), {x[0], x[1]});
      max_cover = std::max(max_cover, active.size());
      for (int a : active)
        for (int b : active) pairs.emplace(a, b);
    }
    const ProblemSpec problem = make_supervised(supervised_default_target);
    const AssembledSystem sys = assemble(model, problem, samples);
    const SparseMatrixCSR h = normal_matrix(sys.jacobian);
    // every co-covering ball pair contributes one full p x p block
    CHECK(h.nnz() == static_cast<std::int64_t>(pairs.size() * p * p));
    // each sampled point touches at most a (cover * p)^2 clique
    CHECK(static_cast<std::size_t>(h.nnz()) <=
          samples.n_interior() * max_cover * max_cover * p * p);
  }
}

TEST_CASE("disjoint column blocks give a block-diagonal normal matrix") {
  CsrBuilder b(6, 6);
  for (int r = 0; r < 6; ++r) {
    const std::vector<std::int32_t> cs =
        r < 3 ? std::vector<std::int32_t>{0, 1, 2} : std::vector<std::int32_t>{3, 4, 5};
    const std::vector<double> vs = {1.0, 2.0, 3.0};
    b.set_row(r, cs, vs);
  }
  const SparseMatrixCSR h = normal_matrix(b.finish());
  for (std::int64_t r = 0; r < 6; ++r)
    for (std::int64_t k = h.row_ptr[r]; k < h.row_ptr[r + 1]; ++k)
      CHECK((r < 3) == (h.col_idx[k] < 3));
}

TEST_CASE("lm_solve with identity matrix negates the gradient") {
  CsrBuilder b(4, 4);
  for (int i = 0; i < 4; ++i) {
    const std::int32_t c = i;
    const double v = 1.0;
    b.set_row(i, std::span<const std::int32_t>(&c, 1), std::span<const double>(&v, 1));
  }
  const SparseMatrixCSR h = b.finish();
  const std::vector<double> g = {1.0, -2.0, 0.5, 3.0};
  const auto delta = lm_solve(h, g, 0.0);  // eta clamps to eta_min
  for (int i = 0; i < 4; ++i) CHECK(delta[i] == doctest::Approx(-g[i]).epsilon(1e-9));
}

TEST_CASE("cg and dense paths agree on a 500-column system") {
  Rng rng(7);
  const SparseMatrixCSR j = random_sparse(rng, 700, 500, 0.05);
  const SparseMatrixCSR h = normal_matrix(j);
  std::vector<double> g(500);
  for (double& v : g) v = rng.uniform(-1, 1);
  const double eta = std::max(initial_damping(h), 1e-8);

  LmSolveOptions dense_opts;
  dense_opts.dense_threshold = 1000;
  LmSolveOptions cg_opts;
  cg_opts.dense_threshold = 10;
  LmSolveStats sd, sc;
  const auto dd = lm_solve(h, g, eta, dense_opts, &sd);
  const auto dc = lm_solve(h, g, eta, cg_opts, &sc);
  CHECK(sd.used_dense);
  CHECK(!sc.used_dense);
  double num = 0.0, den = 0.0;
  for (int i = 0; i < 500; ++i) {
    num += (dd[i] - dc[i]) * (dd[i] - dc[i]);
    den += dd[i] * dd[i];
  }
  CHECK(std::sqrt(num / den) < 1e-8);
}

TEST_CASE("damping schedule follows the accept/reject rules") {
  LmState s;
  s.eta = 1e-3;
  CHECK(damping_update(s, 1.0, 0.5));
  CHECK(s.eta == doctest::Approx(1e-3 / 3.0));
  CHECK(!damping_update(s, 1.0, 1.1));
  CHECK(s.eta == doctest::Approx(2e-3 / 3.0));
  CHECK(!damping_update(s, 1.0, std::nan("")));

  s.eta = 1e8;
  CHECK(!damping_update(s, 1.0, 2.0));
  CHECK(s.eta == 1e8);  // saturates
  s.eta = 1e-12;
  CHECK(damping_update(s, 1.0, 0.9));
  CHECK(s.eta == 1e-12);
}

TEST_CASE("linear least squares reaches the minimizer in one step") {
  Rng rng(9);
  const int rows = 60, cols = 24;
  CsrBuilder builder(rows, cols);
  std::vector<std::int32_t> cs(cols);
  std::iota(cs.begin(), cs.end(), 0);
  std::vector<double> jd(rows * cols);
  for (int r = 0; r < rows; ++r) {
    std::vector<double> vs(cols);
    for (int c = 0; c < cols; ++c) jd[r * cols + c] = vs[c] = rng.uniform(-1, 1);
    builder.set_row(r, cs, vs);
  }
  const SparseMatrixCSR j = builder.finish();
  std::vector<double> target(rows);
  for (double& v : target) v = rng.uniform(-1, 1);

  std::vector<double> theta(cols, 0.0), r0(rows), g(cols);
  j.multiply(theta, r0);
  for (int i = 0; i < rows; ++i) r0[i] -= target[i];
  const SparseMatrixCSR h = normal_matrix(j);
  j.multiply_transpose(r0, g);
  const auto delta = lm_solve(h, g, 1e-12);
  for (int c = 0; c < cols; ++c) theta[c] += delta[c];

  // gradient at the new point must vanish: J^T (J theta - target) ~ 0
  std::vector<double> r1(rows), g1(cols);
  j.multiply(theta, r1);
  for (int i = 0; i < rows; ++i) r1[i] -= target[i];
  j.multiply_transpose(r1, g1);
  for (double v : g1) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("rosenbrock least squares converges to (1,1)") {
  // residuals: r1 = 10 (y - x^2), r2 = 1 - x
  double x = -1.2, y = 1.0;
  LmState state;
  state.eta = 1e-3;
  int iters = 0;
  for (; iters < 200; ++iters) {
    const double r1 = 10 * (y - x * x), r2 = 1 - x;
    const double loss = r1 * r1 + r2 * r2;
    if (loss < 1e-20) break;
    CsrBuilder b(2, 2);
    const std::vector<std::int32_t> cs = {0, 1};
    b.set_row(0, cs, std::vector<double>{-20 * x, 10});
    b.set_row(1, cs, std::vector<double>{-1, 0});
    const SparseMatrixCSR j = b.finish();
    const SparseMatrixCSR h = normal_matrix(j);
    const std::vector<double> r = {r1, r2};
    std::vector<double> g(2);
    j.multiply_transpose(r, g);
    const auto delta = lm_solve(h, g, state.eta);
    const double nx = x + delta[0], ny = y + delta[1];
    const double nr1 = 10 * (ny - nx * nx), nr2 = 1 - nx;
    if (damping_update(state, loss, nr1 * nr1 + nr2 * nr2)) {
      x = nx;
      y = ny;
    }
  }
  CHECK(iters <= 200);
  CHECK(std::abs(x - 1.0) < 1e-8);
  CHECK(std::abs(y - 1.0) < 1e-8);
}

TEST_CASE("adam reference behavior") {
  AdamState state;
  std::vector<double> params = {1.0, -2.0};
  const std::vector<double> zero = {0.0, 0.0};
  adam_step(params, zero, state, 0.1);
  CHECK(params[0] == 1.0);
  CHECK(params[1] == -2.0);

  // constant gradient: step magnitude approaches lr
  AdamState s2;
  std::vector<double> p2 = {0.0};
  const std::vector<double> grad = {0.37};
  double prev = 0.0;
  double step = 0.0;
  for (int t = 0; t < 200; ++t) {
    adam_step(p2, grad, s2, 0.01);
    step = prev - p2[0];
    prev = p2[0];
  }
  CHECK(step == doctest::Approx(0.01).epsilon(1e-3));
}

}  // TEST_SUITE
