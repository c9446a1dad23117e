// Resonance portrait of a finite Hermitian pair: couplings where the probe
// energy meets the spectrum of H + r V, i.e. where the boundary limit
// degenerates. Probes are the midpoints between consecutive eigenvalues of
// the unperturbed matrix, so every line of the table is an eigenvalue-flow
// crossing diagram in the coupling variable.

#include <krein/scattering.hpp>

#include <cstdio>

using namespace krein;

int main() {
  const Eigen::Index n = 12;
  Rng rng(31);
  FiniteHermitian fh{rng.hermitian(n)};
  Frame frame;
  frame.weights = RVec::Ones(n);
  frame.tail_bound = 0.0;
  const Perturbation pert = Perturbation::random_rank(n, 2, 32);
  const OperatorModel model = fh;

  Eigen::SelfAdjointEigenSolver<Mat> es(fh.h);
  std::printf("lambda,r_star,sigma_min\n");
  for (Eigen::Index i = 0; i + 1 < n; ++i) {
    const double lam =
        0.5 * (es.eigenvalues()(i) + es.eigenvalues()(i + 1));
    const LambdaContext ctx = make_context(model, frame, pert, lam);
    const ResonanceScan scan = resonance_scan(ctx, -3.0, 3.0, 601);
    if (scan.resonances.empty()) {
      std::printf("%.6f,,\n", lam);
      continue;
    }
    for (const ResonancePoint& p : scan.resonances)
      std::printf("%.6f,%.8f,%.3e\n", lam, p.r, p.sigma_min);
  }
  return 0;
}
