#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>

#include "doctest.h"
#include "qbus/tomography.hpp"

using namespace qbus;

namespace {

// Dense per-qubit measurement map w(k, 2m + l) = u(k, l) conj(u(k, m)).
Mat basis_w_dense(char basis) {
  Mat u = meas_prerotation(basis);
  Mat w = Mat::Zero(2, 4);
  for (int k = 0; k < 2; ++k)
    for (int m = 0; m < 2; ++m)
      for (int l = 0; l < 2; ++l)
        w(k, 2 * m + l) = u(k, l) * std::conj(u(k, m));
  return w;
}

Mat setting_w_dense(const std::string& setting) {
  Mat w = basis_w_dense(setting[0]);
  for (std::size_t j = 1; j < setting.size(); ++j)
    w = Eigen::kroneckerProduct(w, basis_w_dense(setting[j])).eval();
  return w;
}

DensityMatrix random_state(int n, unsigned seed) {
  std::mt19937 gen(seed);
  std::normal_distribution<double> nd;
  const long long d = 1LL << n;
  Mat a(d, d);
  for (long long r = 0; r < d; ++r)
    for (long long c = 0; c < d; ++c) a(r, c) = cx(nd(gen), nd(gen));
  Mat h = a * a.adjoint();
  h /= h.trace().real();
  return DensityMatrix(0.5 * (h + h.adjoint()), std::vector<int>(n, 2));
}

ReadoutModel table_readout(int n) {
  ReadoutModel m;
  const double f0[] = {0.921, 0.955, 0.982, 0.974, 0.962, 0.988, 0.950};
  const double f1[] = {0.867, 0.915, 0.904, 0.928, 0.927, 0.917, 0.922};
  for (int i = 0; i < n; ++i) {
    m.f0.push_back(f0[i]);
    m.f1.push_back(f1[i]);
  }
  return m;
}

}  // namespace

TEST_CASE("full setting family") {
  auto fam1 = full_setting_family(1);
  REQUIRE(fam1.size() == 3);
  CHECK(fam1[0] == "X");
  CHECK(fam1[2] == "Z");

  auto fam3 = full_setting_family(3);
  CHECK(fam3.size() == 27);
  CHECK(fam3.front() == "XXX");
  CHECK(fam3.back() == "ZZZ");
  // All distinct.
  auto sorted = fam3;
  std::sort(sorted.begin(), sorted.end());
  CHECK(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end());
  CHECK_THROWS_AS(full_setting_family(0), ConfigError);
}

TEST_CASE("measurement probabilities") {
  auto ghz = ghz_ideal(3, GhzBasis::computational);
  RVec pz = measurement_probs(ghz, "ZZZ");
  CHECK(std::abs(pz(0) - 0.5) < 1e-12);
  CHECK(std::abs(pz(7) - 0.5) < 1e-12);
  CHECK(pz.segment(1, 6).cwiseAbs().maxCoeff() < 1e-12);

  // X on |+>: deterministic outcome 0.
  Vec plus(2);
  plus << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
  RVec px = measurement_probs(PureState(plus, {2}), "X");
  CHECK(std::abs(px(0) - 1.0) < 1e-12);

  // Pure and density paths agree on every family member.
  auto rho = DensityMatrix::from_pure(ghz);
  for (const auto& s : full_setting_family(3)) {
    RVec a = measurement_probs(ghz, s);
    RVec b = measurement_probs(rho, s);
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(a.sum() - 1.0) < 1e-12);
    CHECK(a.minCoeff() > -1e-15);
  }

  // X fringes of the GHZ corner coherence: outcome parity biases.
  RVec pxx = measurement_probs(ghz, "XXX");
  double par = 0;
  for (int k = 0; k < 8; ++k)
    par += ((__builtin_popcount(k) % 2) ? -1.0 : 1.0) * pxx(k);
  CHECK(std::abs(par - 1.0) < 1e-12);
}

TEST_CASE("readout confusion and correction") {
  ReadoutModel m;
  m.f0 = {0.9};
  m.f1 = {0.8};
  RVec p(2);
  p << 0.85, 0.15;

  RVec conf = apply_confusion(p, m);
  CHECK(std::abs(conf(0) - 0.795) < 1e-12);
  CHECK(std::abs(conf(1) - 0.205) < 1e-12);

  RVec corr = correct_readout(p, m);
  CHECK(std::abs(corr(0) - 0.65 / 0.7) < 1e-9);
  CHECK(std::abs(corr(1) - 0.05 / 0.7) < 1e-9);

  // Inverse round trip.
  RVec back = correct_readout(conf, m);
  CHECK((back - p).cwiseAbs().maxCoeff() < 1e-12);

  // Two-qubit confusion equals the kron of the per-qubit maps.
  ReadoutModel m2 = table_readout(2);
  RVec q(4);
  q << 0.4, 0.3, 0.2, 0.1;
  RMat c1(2, 2), c2(2, 2);
  c1 << m2.f0[0], 1 - m2.f1[0], 1 - m2.f0[0], m2.f1[0];
  c2 << m2.f0[1], 1 - m2.f1[1], 1 - m2.f0[1], m2.f1[1];
  RMat big = Eigen::kroneckerProduct(c1, c2).eval();
  RVec expect = big * q;
  CHECK((apply_confusion(q, m2) - expect).cwiseAbs().maxCoeff() < 1e-12);

  // Singular confusion (f0 + f1 = 1) cannot be inverted.
  ReadoutModel sing;
  sing.f0 = {0.6};
  sing.f1 = {0.4};
  CHECK_THROWS_AS(correct_readout(p, sing), ConfigError);
}

TEST_CASE("sampling determinism and totals") {
  RVec p(4);
  p << 0.4, 0.3, 0.2, 0.1;
  RngStream a(42, {7});
  RngStream b(42, {7});
  auto ca = sample_counts(p, 5000, a);
  auto cb = sample_counts(p, 5000, b);
  CHECK(ca == cb);
  long long total = 0;
  for (auto c : ca) total += c;
  CHECK(total == 5000);

  RngStream c(43, {7});
  CHECK(sample_counts(p, 5000, c) != ca);
}

TEST_CASE("simulate_tomography is thread-count independent") {
  auto rho = DensityMatrix::from_pure(ghz_ideal(3, GhzBasis::computational));
  ReadoutModel m = table_readout(3);
  auto d1 = simulate_tomography(rho, 500, 99, m, {}, 1);
  auto d4 = simulate_tomography(rho, 500, 99, m, {}, 4);
  REQUIRE(d1.records.size() == 27);
  REQUIRE(d4.records.size() == 27);
  for (std::size_t i = 0; i < d1.records.size(); ++i) {
    CHECK(d1.records[i].setting == d4.records[i].setting);
    CHECK(d1.records[i].counts == d4.records[i].counts);
  }
}

TEST_CASE("normal system: single-qubit pattern") {
  auto sys = assemble_normal_system(1, full_setting_family(1));
  CHECK(sys.dim == 4);
  CHECK(sys.components.size() == 3);
  RMat d = sys.dense();
  RMat g1(4, 4);
  g1 << 2, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 2;
  CHECK((d - g1).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normal system: kron structure, sparsity and components") {
  auto fam2 = full_setting_family(2);
  auto sys = assemble_normal_system(2, fam2);
  RMat g1(4, 4);
  g1 << 2, 0, 0, 1, 0, 1, 0, 0, 0, 0, 1, 0, 1, 0, 0, 2;
  RMat expect = Eigen::kroneckerProduct(g1, g1).eval();
  CHECK((sys.dense() - expect).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(sys.components.size() == 9);
  CHECK(sys.nnz() == 36);
  CHECK(sys.max_row_nnz() == 4);

  for (int n = 1; n <= 5; ++n) {
    auto s = assemble_normal_system(n, full_setting_family(n));
    CHECK(s.max_row_nnz() <= (1LL << n));
    CHECK(s.nnz() == static_cast<long long>(std::pow(6, n) + 0.5));
    CHECK(s.components.size() == static_cast<std::size_t>(std::pow(3, n) + 0.5));
  }
}

TEST_CASE("normal system matches the dense measurement maps") {
  const int n = 2;
  auto fam = full_setting_family(n);
  auto rho = random_state(n, 5);

  // Dense oracle: A = sum Re(W^H W), b = sum W^H p.
  RMat a_dense = RMat::Zero(16, 16);
  Vec b_dense = Vec::Zero(16);
  std::vector<RVec> probs;
  for (const auto& s : fam) {
    Mat w = setting_w_dense(s);
    a_dense += (w.adjoint() * w).real();
    RVec p = measurement_probs(rho, s);
    probs.push_back(p);
    b_dense += w.adjoint() * p;
  }

  auto sys = assemble_normal_system(n, fam);
  CHECK((sys.dense() - a_dense).cwiseAbs().maxCoeff() < 1e-12);

  Vec b = assemble_rhs(n, fam, probs);
  CHECK((b - b_dense).cwiseAbs().maxCoeff() < 1e-12);

  // rhs is thread-count independent to the last bit.
  Vec b4 = assemble_rhs(n, fam, probs, 4);
  CHECK((b - b4).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("duplicated settings fold into multiplicities") {
  auto fam = full_setting_family(2);
  auto doubled = fam;
  doubled.insert(doubled.end(), fam.begin(), fam.end());

  auto s1 = assemble_normal_system(2, fam);
  auto s2 = assemble_normal_system(2, doubled);
  CHECK((s2.dense() - 2.0 * s1.dense()).cwiseAbs().maxCoeff() < 1e-12);

  // Doubling both sides leaves the solution unchanged.
  auto rho = random_state(2, 11);
  std::vector<RVec> p1, p2;
  for (const auto& s : fam) p1.push_back(measurement_probs(rho, s));
  p2 = p1;
  p2.insert(p2.end(), p1.begin(), p1.end());
  Vec x1 = solve_normal(s1, assemble_rhs(2, fam, p1));
  Vec x2 = solve_normal(s2, assemble_rhs(2, doubled, p2));
  CHECK((x1 - x2).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("direct and cg solvers agree") {
  const int n = 3;
  auto fam = full_setting_family(n);
  auto sys = assemble_normal_system(n, fam);
  auto rho = random_state(n, 3);
  std::vector<RVec> probs;
  for (const auto& s : fam) probs.push_back(measurement_probs(rho, s));
  Vec b = assemble_rhs(n, fam, probs);

  SolveStats sd, sc;
  Vec xd = solve_normal(sys, b, SolveMethod::direct, &sd);
  Vec xc = solve_normal(sys, b, SolveMethod::cg, &sc);
  CHECK(sd.method == "direct");
  CHECK(sc.method == "cg");
  CHECK(sc.iterations > 0);
  CHECK((xd - xc).cwiseAbs().maxCoeff() < 1e-8);
  CHECK(sd.residual < 1e-10);
  CHECK(sc.residual < 1e-10);
}

TEST_CASE("z-only settings are rank deficient") {
  auto sys = assemble_normal_system(2, {"ZZ"});
  Vec b = Vec::Ones(16);
  CHECK_THROWS_AS(solve_normal(sys, b), SolverError);
}

TEST_CASE("reconstruct: exact round trip") {
  auto rho = random_state(2, 17);
  auto ds = simulate_tomography(rho, 0, 1, ReadoutModel::perfect(2));
  auto rec = reconstruct(ds);
  CHECK((rec.rho.mat() - rho.mat()).cwiseAbs().maxCoeff() < 1e-9);
  CHECK(rec.stats.residual < 1e-10);
  CHECK(state_fidelity(rec.rho, rho) > 0.999999);
}

TEST_CASE("reconstruct: exact probabilities through confusion and back") {
  auto rho = DensityMatrix::from_pure(ghz_ideal(3, GhzBasis::computational));
  auto ds = simulate_tomography(rho, 0, 1, table_readout(3));
  CHECK_FALSE(ds.corrected);
  auto rec = reconstruct(ds);
  CHECK((rec.rho.mat() - rho.mat()).cwiseAbs().maxCoeff() < 1e-8);
}

TEST_CASE("reconstruct: finite shots stay inside the error envelope") {
  const int n = 3;
  auto rho = DensityMatrix::from_pure(ghz_ideal(n, GhzBasis::computational));
  auto exact = ghz_fidelity_max_phase(rho, GhzBasis::computational).fidelity;
  auto ds = simulate_tomography(rho, 3000, 21, table_readout(n));
  auto rec = reconstruct(ds);
  auto f = ghz_fidelity_max_phase(rec.rho, GhzBasis::computational).fidelity;
  CHECK(std::abs(f - exact) <= 0.08);
  CHECK(rec.rho.min_eigenvalue() > -1e-12);
}

TEST_CASE("reconstruct is invariant under setting permutation") {
  auto rho = random_state(2, 23);
  auto fam = full_setting_family(2);
  auto ds = simulate_tomography(rho, 0, 1, ReadoutModel::perfect(2), fam);

  TomoDataset shuffled = ds;
  std::mt19937 gen(4);
  std::shuffle(shuffled.records.begin(), shuffled.records.end(), gen);

  auto r1 = reconstruct(ds);
  auto r2 = reconstruct(shuffled);
  CHECK((r1.rho.mat() - r2.rho.mat()).cwiseAbs().maxCoeff() < 1e-10);
}

TEST_CASE("dataset validation") {
  TomoDataset ds;
  ds.n = 1;
  CHECK_THROWS_AS(ds.validate(), ConfigError);  // no records

  ds.shots = 100;
  MeasRecord r;
  r.setting = "Z";
  r.counts = {60, 39};  // sums to 99, not 100
  ds.records.push_back(r);
  CHECK_THROWS_AS(ds.validate(), ConfigError);
  ds.records[0].counts = {60, 40};
  CHECK_NOTHROW(ds.validate());

  TomoDataset bad;
  bad.n = 2;
  bad.shots = 0;
  MeasRecord e;
  e.setting = "ZZZ";  // wrong length
  e.probs = RVec::Ones(4) / 4.0;
  bad.records.push_back(e);
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("parity scan of ideal GHZ states") {
  for (int n : {3, 4, 5}) {
    const double phi = 0.6;
    auto rho = DensityMatrix::from_pure(
        ghz_ideal(n, GhzBasis::computational, phi));
    RVec gamma(8 * n + 1);
    for (int i = 0; i < gamma.size(); ++i)
      gamma(i) = 2.0 * pi * i / gamma.size();
    auto scan = parity_scan(rho, gamma);
    CHECK(scan.frequency == n);
    CHECK(std::abs(scan.amplitude - 1.0) < 1e-9);
    CHECK(scan.residual < 1e-12);
    // <P(gamma)> = cos(n gamma - phi).
    double dphi = std::remainder(scan.phase + phi, 2.0 * pi);
    CHECK(std::abs(dphi) < 1e-9);
    // The fit at f must beat its neighbours decisively.
    CHECK(scan.alt_residual > 10.0 * scan.residual + 1e-9);
  }
}

TEST_CASE("parity scan separates amplitude from populations") {
  // Half-coherence GHZ-like state: corners 0.3/0.3, off-diagonal 0.2.
  const int n = 4;
  const long long dim = 1 << n;
  Mat m = Mat::Zero(dim, dim);
  m(0, 0) = 0.3;
  m(dim - 1, dim - 1) = 0.3;
  m(0, dim - 1) = 0.2;
  m(dim - 1, 0) = 0.2;
  for (long long k = 1; k < dim - 1; ++k) m(k, k) = 0.4 / (dim - 2);
  DensityMatrix rho(m, std::vector<int>(n, 2));

  RVec gamma(4 * n + 1);
  for (int i = 0; i < gamma.size(); ++i)
    gamma(i) = 2.0 * pi * i / gamma.size();
  auto scan = parity_scan(rho, gamma);
  CHECK(scan.frequency == n);
  CHECK(std::abs(scan.amplitude - 0.4) < 1e-9);
}

TEST_CASE("sampled parity converges to the exact scan") {
  const int n = 3;
  auto rho = DensityMatrix::from_pure(ghz_ideal(n, GhzBasis::computational));
  RVec gamma(2 * n + 3);
  for (int i = 0; i < gamma.size(); ++i)
    gamma(i) = 2.0 * pi * i / gamma.size();

  auto exact = parity_scan(rho, gamma);
  auto s1 = parity_scan_sampled(rho, gamma, 20000, 3, ReadoutModel::perfect(n));
  CHECK(s1.frequency == n);
  CHECK(std::abs(s1.amplitude - exact.amplitude) < 0.05);

  // Confusion plus correction: unbiased up to shot noise.
  auto s2 = parity_scan_sampled(rho, gamma, 20000, 3, table_readout(n));
  CHECK(s2.frequency == n);
  CHECK(std::abs(s2.amplitude - exact.amplitude) < 0.07);

  // Deterministic for a fixed seed, across thread counts.
  auto a = parity_scan_sampled(rho, gamma, 1000, 5, table_readout(n), 1);
  auto b = parity_scan_sampled(rho, gamma, 1000, 5, table_readout(n), 3);
  CHECK((a.parity - b.parity).cwiseAbs().maxCoeff() == 0.0);

  RVec tiny(3);
  tiny << 0.0, 1.0, 2.0;
  CHECK_THROWS_AS(parity_scan(rho, tiny), ConfigError);
}

TEST_CASE("ghz shortcut fidelity and significance") {
  Warnings w;
  const double f = ghz_fidelity_shortcut(0.274, 0.262, 0.4, &w);
  CHECK(std::abs(f - 0.468) < 1e-12);
  CHECK(w.empty());

  // Unphysical combination only warns.
  ghz_fidelity_shortcut(1.0, 1.0, 1.0, &w);
  CHECK(w.size() == 1);

  CHECK_THROWS_AS(ghz_fidelity_shortcut(-0.1, 0.5, 0.5), ConfigError);
  CHECK_THROWS_AS(ghz_fidelity_shortcut(0.5, 0.5, 1.5), ConfigError);

  CHECK(std::abs(ghz_significance(0.668, 0.025) - 6.72) < 0.01);
  CHECK_THROWS_AS(ghz_significance(0.6, 0.0), ConfigError);
}

TEST_CASE("bootstrap sigma tracks the fresh-dataset spread") {
  const int n = 2;
  auto rho = DensityMatrix::from_pure(ghz_ideal(n, GhzBasis::computational));
  ReadoutModel m = table_readout(n);
  const long long shots = 400;

  auto metric = [](const DensityMatrix& r) {
    return ghz_fidelity_max_phase(r, GhzBasis::computational).fidelity;
  };

  auto base = simulate_tomography(rho, shots, 1, m);
  auto bs = bootstrap_fidelity(base, metric, 60, 77);
  CHECK(bs.repeats == 60);
  CHECK(bs.sigma > 0);

  // Fresh datasets, same size: the spread should match within a factor 2.
  std::vector<double> fresh;
  for (int r = 0; r < 60; ++r) {
    auto ds = simulate_tomography(rho, shots, 1000 + r, m);
    fresh.push_back(metric(reconstruct(ds).rho));
  }
  double mean = 0;
  for (double v : fresh) mean += v;
  mean /= fresh.size();
  double var = 0;
  for (double v : fresh) var += (v - mean) * (v - mean);
  double sigma_fresh = std::sqrt(var / (fresh.size() - 1));

  CHECK(bs.sigma < 2.0 * sigma_fresh);
  CHECK(bs.sigma > 0.5 * sigma_fresh);

  // Exact datasets cannot be bootstrapped.
  auto exact = simulate_tomography(rho, 0, 1, m);
  CHECK_THROWS_AS(bootstrap_fidelity(exact, metric, 10, 1), ConfigError);
}
