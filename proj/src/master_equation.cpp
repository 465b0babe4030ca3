#include "csl/master_equation.hpp"

namespace csl {

LindbladModel lindblad_model(const SparseH& H, const CollapseChannels& channels, double lambda) {
  if (!(lambda >= 0.0)) throw ConfigError("lambda must be >= 0");
  LindbladModel m;
  m.D = dephasing_matrix(channels, lambda);
  if (H.rows() != m.D.rows() || H.cols() != m.D.cols())
    throw ConfigError("Hamiltonian and collapse basis dimensions differ");
  m.H = H;
  return m;
}

CMatrix LindbladModel::operator()(const CMatrix& rho) const {
  if (rho.rows() != D.rows() || rho.cols() != D.cols()) throw ConfigError("density matrix basis mismatch");
  CMatrix out = -D.cast<cplx>().cwiseProduct(rho);
  if (H.nonZeros() > 0) {
    CMatrix Hr = H * rho;
    // [H, rho] = H rho - (H rho)^dag for Hermitian H, rho
    out += cplx(0.0, -1.0) * (Hr - Hr.adjoint());
  }
  return out;
}

CMatrix lindblad_generator(const CMatrix& rho, const LindbladModel& model) { return model(rho); }

double decoherence_rate(const MassDensityProfile& r, const MassDensityProfile& s, double lambda, double cell_volume) {
  if (r.values.size() != s.values.size()) throw ConfigError("profiles live on different lattices");
  double acc = 0.0;
  for (std::size_t x = 0; x < r.values.size(); ++x) {
    double d = r.values[x] - s.values[x];
    acc += d * d;
  }
  return 0.5 * lambda * cell_volume * acc;
}

}  // namespace csl
