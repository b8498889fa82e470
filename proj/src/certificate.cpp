#include "rstab/certificate.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rstab {

MatrixXd chi_selector(int n, int m) {
  MatrixXd q = MatrixXd::Zero(m, m * n);
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) q(i, chi_index(i, j, n)) = 1.0;
  return q;
}

MatrixXd xi_selector(int n, int m) {
  MatrixXd r = MatrixXd::Zero(n, n * (n + m));
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j) r(i, xi_index(i, j, n, m)) = 1.0;
  return r;
}

MatrixXd lipschitz_qc_matrix(double lipschitz, const MatrixXd& gamma) {
  if (lipschitz < 0.0)
    throw std::invalid_argument("lipschitz bound must be nonnegative");
  if ((gamma.array() < 0.0).any())
    throw std::invalid_argument("gamma multipliers must be nonnegative");
  const int m = static_cast<int>(gamma.rows());
  const int n = static_cast<int>(gamma.cols());
  MatrixXd out = MatrixXd::Zero(n + m * n, n + m * n);
  for (int j = 0; j < n; ++j)
    out(j, j) = lipschitz * lipschitz * gamma.col(j).sum();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) {
      const int k = n + chi_index(i, j, n);
      out(k, k) = -gamma(i, j);
    }
  return out;
}

SectorQcBlocks sector_qc_blocks(const SectorBound& sector,
                                const MatrixXd& lambda) {
  const int n = sector.state_dim();
  const int m = sector.input_dim();
  if (lambda.rows() != n || lambda.cols() != n + m)
    throw std::invalid_argument("lambda dimensions inconsistent with sector");
  if ((lambda.array() < 0.0).any())
    throw std::invalid_argument("lambda multipliers must be nonnegative");

  const MatrixXd c = 0.5 * (sector.lo + sector.hi);
  const MatrixXd cbar = sector.lo.cwiseAbs().cwiseMax(sector.hi.cwiseAbs());
  const MatrixXd gap = cbar.cwiseProduct(cbar) - c.cwiseProduct(c);

  SectorQcBlocks b;
  b.q = chi_selector(n, m);
  b.r = xi_selector(n, m);

  b.m_x = MatrixXd::Zero(n, n);
  for (int j = 0; j < n; ++j)
    b.m_x(j, j) = (lambda.col(j).cwiseProduct(gap.col(j))).sum();

  MatrixXd d_u = MatrixXd::Zero(m, m);
  for (int r = 0; r < m; ++r)
    d_u(r, r) = (lambda.col(n + r).cwiseProduct(gap.col(n + r))).sum();
  b.m_chi = b.q.transpose() * d_u * b.q;

  const int nxi = n * (n + m);
  b.m_xi = MatrixXd::Zero(nxi, nxi);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n + m; ++j) {
      const int k = xi_index(i, j, n, m);
      b.m_xi(k, k) = -lambda(i, j);
    }

  b.n_x = MatrixXd::Zero(n, nxi);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      b.n_x(j, xi_index(i, j, n, m)) = lambda(i, j) * c(i, j);

  MatrixXd n_u = MatrixXd::Zero(m, nxi);
  for (int i = 0; i < n; ++i)
    for (int r = 0; r < m; ++r)
      n_u(r, xi_index(i, n + r, n, m)) = lambda(i, n + r) * c(i, n + r);
  b.n_chi = b.q.transpose() * n_u;
  return b;
}

MatrixXd stability_lmi(const MatrixXd& a0k, const MatrixXd& b0,
                       const MatrixXd& p, const SectorQcBlocks& blocks,
                       double lipschitz, const MatrixXd& gamma) {
  const int n = static_cast<int>(a0k.rows());
  const int m = static_cast<int>(b0.cols());
  if (a0k.cols() != n || b0.rows() != n || p.rows() != n || p.cols() != n ||
      gamma.rows() != m || gamma.cols() != n)
    throw std::invalid_argument("certificate matrix dimension mismatch");
  const int nchi = m * n;
  const int nxi = n * (n + m);
  const int total = n + nchi + nxi;

  const MatrixXd lip = lipschitz_qc_matrix(lipschitz, gamma);
  MatrixXd t = MatrixXd::Zero(total, total);
  t.topLeftCorner(n, n) = blocks.m_x + lip.topLeftCorner(n, n) + p * a0k +
                          a0k.transpose() * p;
  t.block(n, 0, nchi, n) = blocks.q.transpose() * b0.transpose() * p;
  t.block(n, n, nchi, nchi) =
      blocks.m_chi + lip.bottomRightCorner(nchi, nchi);
  t.block(n + nchi, 0, nxi, n) =
      blocks.n_x.transpose() + blocks.r.transpose() * p;
  t.block(n + nchi, n, nxi, nchi) = blocks.n_chi.transpose();
  t.bottomRightCorner(nxi, nxi) = blocks.m_xi;
  // Mirror the lower triangle.
  t.block(0, n, n, nchi) = t.block(n, 0, nchi, n).transpose();
  t.block(0, n + nchi, n, nxi) = t.block(n + nchi, 0, nxi, n).transpose();
  t.block(n, n + nchi, nchi, nxi) = t.block(n + nchi, n, nxi, nchi).transpose();
  return t;
}

double max_level(const MatrixXd& p, const SafePolytope& domain) {
  if (p.rows() != p.cols() || p.rows() != domain.dim())
    throw std::invalid_argument("level computation dimension mismatch");
  Eigen::LLT<MatrixXd> llt(0.5 * (p + p.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("shape matrix not positive definite");
  double sigma = std::numeric_limits<double>::infinity();
  for (int i = 0; i < domain.num_faces(); ++i) {
    const VectorXd a = domain.faces().row(i).transpose();
    const double q = a.dot(llt.solve(a));
    sigma = std::min(sigma, domain.offsets()(i) * domain.offsets()(i) / q);
  }
  return sigma;
}

bool Ellipsoid::contains(const VectorXd& x, double slack) const {
  return x.dot(p * x) <= sigma * (1.0 + slack);
}

VectorXd Ellipsoid::sample(Rng& rng) const {
  const int n = static_cast<int>(p.rows());
  Eigen::LLT<MatrixXd> llt(0.5 * (p + p.transpose()));
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("shape matrix not positive definite");
  VectorXd g(n);
  for (int i = 0; i < n; ++i) g(i) = gaussian(rng);
  const double radius = std::pow(uniform(rng, 0.0, 1.0), 1.0 / n);
  const VectorXd y = g.normalized() * radius;
  return std::sqrt(sigma) * llt.matrixU().solve(y);
}

Ellipsoid safe_initialization_set(const StabilityCertificate& cert) {
  return {cert.p, cert.sigma};
}

Verdict verify_certificate(const PlantModel& model,
                           const StabilityCertificate& cert,
                           const SectorBound& sector) {
  const int n = model.state_dim, m = model.input_dim;
  if (cert.gain.rows() != m || cert.gain.cols() != n ||
      cert.p.rows() != n || cert.p.cols() != n)
    return {false, "certificate dimensions inconsistent with plant"};
  if (sector.state_dim() != n || sector.input_dim() != m)
    return {false, "sector dimensions inconsistent with plant"};
  if ((sector.gain - cert.gain).cwiseAbs().maxCoeff() > 1e-9)
    return {false, "sector was computed for a different gain"};
  if (sector.lipschitz < cert.lipschitz - 1e-12)
    return {false, "sector was computed for a smaller budget"};
  if ((cert.p - cert.p.transpose()).cwiseAbs().maxCoeff() >
      1e-9 * std::max(1.0, cert.p.cwiseAbs().maxCoeff()))
    return {false, "P not symmetric"};
  Eigen::SelfAdjointEigenSolver<MatrixXd> pe(0.5 * (cert.p + cert.p.transpose()));
  if (pe.eigenvalues().minCoeff() < 1e-9) return {false, "P not PD"};
  if (cert.multipliers.gamma.rows() != m ||
      cert.multipliers.gamma.cols() != n ||
      cert.multipliers.lambda.rows() != n ||
      cert.multipliers.lambda.cols() != n + m)
    return {false, "multiplier dimensions inconsistent"};
  if (cert.multipliers.gamma.minCoeff() < -1e-12 ||
      cert.multipliers.lambda.minCoeff() < -1e-12)
    return {false, "negative multiplier"};

  const LinearizedDynamics nom =
      linearize(model, VectorXd::Zero(model.param_dim));
  const MatrixXd a0k = nom.a + nom.b * cert.gain;
  const SectorQcBlocks blocks =
      sector_qc_blocks(sector, cert.multipliers.lambda.cwiseMax(0.0));
  const MatrixXd t = stability_lmi(a0k, nom.b, cert.p, blocks, cert.lipschitz,
                                   cert.multipliers.gamma.cwiseMax(0.0));
  Eigen::SelfAdjointEigenSolver<MatrixXd> te(0.5 * (t + t.transpose()));
  const double scale =
      std::max(1.0, std::max(std::abs(te.eigenvalues().minCoeff()),
                             std::abs(te.eigenvalues().maxCoeff())));
  if (te.eigenvalues().maxCoeff() > -cert.margin * scale)
    return {false, "LMI not negative definite"};

  if (!(cert.sigma > 0.0)) return {false, "level not positive"};
  if (cert.domain.dim() != n)
    return {false, "domain dimension inconsistent"};
  const double cap = max_level(cert.p, cert.domain);
  if (cert.sigma > cap * (1.0 + 1e-9))
    return {false, "ellipsoid exceeds the safe region"};
  return {true, ""};
}

namespace {

void write_matrix(std::ostream& os, const std::string& name,
                  const MatrixXd& m) {
  os << name << " " << m.rows() << " " << m.cols() << "\n";
  for (int i = 0; i < m.rows(); ++i) {
    for (int j = 0; j < m.cols(); ++j)
      os << (j ? "," : "") << format_double(m(i, j));
    os << "\n";
  }
}

MatrixXd read_matrix(std::istream& is, const std::string& expect) {
  std::string name;
  int rows = -1, cols = -1;
  if (!(is >> name >> rows >> cols) || name != expect || rows < 0 || cols < 0)
    throw std::invalid_argument("certificate report: bad matrix header for " +
                                expect);
  is.ignore();
  MatrixXd m(rows, cols);
  std::string line;
  for (int i = 0; i < rows; ++i) {
    if (!std::getline(is, line))
      throw std::invalid_argument("certificate report: truncated matrix " +
                                  expect);
    std::istringstream row(line);
    std::string cell;
    for (int j = 0; j < cols; ++j) {
      if (!std::getline(row, cell, ','))
        throw std::invalid_argument("certificate report: short row in " +
                                    expect);
      m(i, j) = std::stod(cell);
    }
  }
  return m;
}

}  // namespace

void write_certificate(std::ostream& os, const StabilityCertificate& cert) {
  os << "certificate v1\n";
  os << "lipschitz " << format_double(cert.lipschitz) << "\n";
  os << "sigma " << format_double(cert.sigma) << "\n";
  os << "delta " << format_double(cert.delta) << "\n";
  os << "margin " << format_double(cert.margin) << "\n";
  write_matrix(os, "K", cert.gain);
  write_matrix(os, "P", cert.p);
  write_matrix(os, "gamma", cert.multipliers.gamma);
  write_matrix(os, "lambda", cert.multipliers.lambda);
  write_matrix(os, "faces", cert.domain.faces());
  write_matrix(os, "offsets", cert.domain.offsets());
}

StabilityCertificate read_certificate(std::istream& is) {
  std::string tag, version;
  if (!(is >> tag >> version) || tag != "certificate" || version != "v1")
    throw std::invalid_argument("certificate report: bad header");
  StabilityCertificate cert;
  auto scalar = [&](const char* key) {
    std::string k;
    double v;
    if (!(is >> k >> v) || k != key)
      throw std::invalid_argument(std::string("certificate report: missing ") +
                                  key);
    return v;
  };
  cert.lipschitz = scalar("lipschitz");
  cert.sigma = scalar("sigma");
  cert.delta = scalar("delta");
  cert.margin = scalar("margin");
  cert.gain = read_matrix(is, "K");
  cert.p = read_matrix(is, "P");
  cert.multipliers.gamma = read_matrix(is, "gamma");
  cert.multipliers.lambda = read_matrix(is, "lambda");
  const MatrixXd faces = read_matrix(is, "faces");
  const MatrixXd offsets = read_matrix(is, "offsets");
  cert.domain = SafePolytope(faces, offsets.col(0));
  return cert;
}

}  // namespace rstab
