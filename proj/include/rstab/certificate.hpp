#ifndef RSTAB_CERTIFICATE_HPP
#define RSTAB_CERTIFICATE_HPP

#include <iosfwd>
#include <string>

#include "rstab/model.hpp"
#include "rstab/sector.hpp"

namespace rstab {

// Index layouts for the stacked auxiliary signals. chi collects the policy
// deviation decomposition (one block of n entries per input channel); xi
// collects the residual-Jacobian decomposition (one block of n+m entries per
// state channel). The selector matrices re-aggregate them: chi_selector
// (m x mn) sums each input's block, xi_selector (n x n(n+m)) sums each
// state's block.
inline int chi_index(int i, int j, int n) { return i * n + j; }
inline int xi_index(int i, int j, int n, int m) { return i * (n + m) + j; }
MatrixXd chi_selector(int n, int m);
MatrixXd xi_selector(int n, int m);

// S-procedure multipliers: gamma (m x n, entrywise >= 0) weighs the
// Lipschitz constraints, lambda (n x (n+m), entrywise >= 0) the sector
// constraints.
struct QcMultipliers {
  MatrixXd gamma;
  MatrixXd lambda;
};

// Block-diagonal quadratic-constraint matrix for a Lipschitz-L zero-at-origin
// policy deviation: [L^2 diag(col sums of gamma), 0; 0, -diag(gamma)] of size
// (n + mn) over the stacked (x, chi) signal.
MatrixXd lipschitz_qc_matrix(double lipschitz, const MatrixXd& gamma);

// Quadratic-constraint pieces derived from a sector bound, weighted by
// lambda. Built from the per-entry midpoint c = (lo+hi)/2 and magnitude
// cbar = max(|lo|, |hi|).
struct SectorQcBlocks {
  MatrixXd m_x;    // n x n, diagonal
  MatrixXd m_chi;  // mn x mn
  MatrixXd m_xi;   // n(n+m) x n(n+m), diagonal = -lambda
  MatrixXd n_x;    // n x n(n+m)
  MatrixXd n_chi;  // mn x n(n+m)
  MatrixXd q;      // chi selector
  MatrixXd r;      // xi selector
};

SectorQcBlocks sector_qc_blocks(const SectorBound& sector,
                                const MatrixXd& lambda);

// The certificate matrix over the stacked signal (x, chi, xi): negative
// definiteness proves the closed loop's Lyapunov decrease for every policy
// within the Lipschitz budget and every parameter evolution in the box.
// a0k = A0 + B0 K; b0 couples the policy deviation back into the state row.
MatrixXd stability_lmi(const MatrixXd& a0k, const MatrixXd& b0,
                       const MatrixXd& p, const SectorQcBlocks& blocks,
                       double lipschitz, const MatrixXd& gamma);

// Largest level sigma with {x : x'Px <= sigma} inscribed in the polytope:
// min_i b_i^2 / (a_i' P^{-1} a_i).
double max_level(const MatrixXd& p, const SafePolytope& domain);

// {x : x'Px <= sigma} with uniform-in-volume sampling.
struct Ellipsoid {
  MatrixXd p;
  double sigma = 1.0;

  bool contains(const VectorXd& x, double slack = 1e-9) const;
  VectorXd sample(Rng& rng) const;
};

struct StabilityCertificate {
  MatrixXd gain;          // K, m x n
  double lipschitz = 0.0; // budget L for the policy deviation
  MatrixXd p;             // Lyapunov shape, n x n PD
  QcMultipliers multipliers;
  double sigma = 0.0;     // safe-initialization level
  double delta = 1.0;     // domain scale the certificate was issued for
  SafePolytope domain;    // the scaled safe region X^k
  double margin = 1e-7;   // relative strictness demanded of the matrix check
};

struct Verdict {
  bool valid = false;
  std::string reason;  // empty when valid
};

// Independent re-derivation of every certificate condition: P positive
// definite, multipliers nonnegative, certificate matrix negative definite
// with margin, and the level-sigma ellipsoid inscribed in the domain. The
// sector must have been computed for the certificate's gain and budget.
Verdict verify_certificate(const PlantModel& model,
                           const StabilityCertificate& cert,
                           const SectorBound& sector);

Ellipsoid safe_initialization_set(const StabilityCertificate& cert);

// Plain-text report with CSV matrix blocks; parses back bit-identically.
void write_certificate(std::ostream& os, const StabilityCertificate& cert);
StabilityCertificate read_certificate(std::istream& is);

}  // namespace rstab

#endif
