#include "rstab/sector.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace rstab {

ControlBox control_box(double lipschitz, const SafePolytope& domain,
                       int input_dim) {
  if (lipschitz < 0.0)
    throw std::invalid_argument("control box needs a nonnegative bound");
  return {VectorXd::Constant(input_dim, lipschitz * domain.max_norm_inf())};
}

double npv_jacobian_entry(const PlantModel& model, const MatrixXd& gain,
                          NpvBlock which, int i, int j, const VectorXd& x,
                          const VectorXd& u, const VectorXd& theta) {
  const int n = model.state_dim, m = model.input_dim;
  if (gain.rows() != m || gain.cols() != n)
    throw std::invalid_argument("gain dimensions inconsistent with plant");
  if (i < 0 || i >= n || j < 0 ||
      j >= (which == NpvBlock::kState ? n : m))
    throw std::out_of_range("residual jacobian entry out of range");
  const LinearizedDynamics nom = linearize(model, VectorXd::Zero(model.param_dim));
  // u is the policy deviation; the plant sees the total input K x + u.
  auto [jx, ju] = eval_jacobians(model, x, gain * x + u, theta);
  if (which == NpvBlock::kState) {
    const MatrixXd a0k = nom.a + nom.b * gain;
    return jx(i, j) + (ju * gain)(i, j) - a0k(i, j);
  }
  return ju(i, j) - nom.b(i, j);
}

namespace {

struct BoxParts {
  Box x, u, th;
};

BoxParts split_box(const Box& full, int n, int m, int d) {
  BoxParts p{Box(n), Box(m), Box(d)};
  for (int i = 0; i < n; ++i) p.x(i) = full(i);
  for (int i = 0; i < m; ++i) p.u(i) = full(n + i);
  for (int i = 0; i < d; ++i) p.th(i) = full(n + m + i);
  return p;
}

// Domain restriction to {x inside the polytope}; the u and theta coordinates
// are free within their boxes. Repair pulls the state part toward the origin
// (offsets are positive, so scaling always lands inside).
DomainFilter polytope_filter(const SafePolytope& poly, int n) {
  DomainFilter f;
  const MatrixXd a = poly.faces();
  const VectorXd b = poly.offsets();
  f.outside = [a, b, n](const Box& box) {
    for (int r = 0; r < a.rows(); ++r) {
      double lo = 0.0;
      for (int j = 0; j < n; ++j)
        lo += a(r, j) > 0 ? a(r, j) * box(j).lo() : a(r, j) * box(j).hi();
      if (lo > b(r)) return true;
    }
    return false;
  };
  f.inside = [a, b, n](const VectorXd& p) {
    return ((a * p.head(n)).array() <= b.array() + 1e-12).all();
  };
  f.repair = [a, b, n](VectorXd& p) {
    const VectorXd v = a * p.head(n);
    double scale = 1.0;
    for (int r = 0; r < v.size(); ++r)
      if (v(r) > b(r)) scale = std::min(scale, b(r) / v(r));
    p.head(n) *= scale * (1.0 - 1e-12);
    return true;
  };
  return f;
}

}  // namespace

SectorBound compute_sector(const PlantModel& model, const MatrixXd& gain,
                           double lipschitz, const SafePolytope& domain,
                           const ParamBox& params, const SectorOptions& opts) {
  const int n = model.state_dim, m = model.input_dim, d = model.param_dim;
  if (gain.rows() != m || gain.cols() != n)
    throw std::invalid_argument("gain dimensions inconsistent with plant");
  if (domain.dim() != n || params.dim() != d)
    throw std::invalid_argument("domain dimensions inconsistent with plant");

  const LinearizedDynamics nom = linearize(model, VectorXd::Zero(d));
  const MatrixXd a0k = nom.a + nom.b * gain;
  const ControlBox ubox = control_box(lipschitz, domain, m);

  Box full(n + m + d);
  const Box xb = domain.bounding_box();
  for (int i = 0; i < n; ++i) full(i) = xb(i);
  for (int i = 0; i < m; ++i)
    full(n + i) = Interval(-ubox.u_max(i), ubox.u_max(i));
  const Box tb = params.box();
  for (int i = 0; i < d; ++i) full(n + m + i) = tb(i);

  const DomainFilter filter = polytope_filter(domain, n);
  BoundOptions bopts;
  bopts.tol = opts.tol;
  bopts.max_boxes = opts.max_boxes;
  bopts.domain = &filter;

  SectorBound sector;
  sector.lo.resize(n, n + m);
  sector.hi.resize(n, n + m);
  sector.gain = gain;
  sector.lipschitz = lipschitz;
  sector.tol = opts.tol;

  std::vector<char> tight(n * (n + m), 1);
  parallel_for(n * (n + m), [&](int idx) {
    const int i = idx / (n + m);
    const int j = idx % (n + m);
    ScalarIntervalFn entry = [&, i, j](const Box& box) {
      const BoxParts p = split_box(box, n, m, d);
      // p.u holds the policy deviation; the plant sees K x + u.
      IntervalVector u_tot = p.u;
      for (int r = 0; r < m; ++r)
        for (int c = 0; c < n; ++c)
          u_tot(r) = u_tot(r) + Interval(gain(r, c)) * p.x(c);
      if (j < n) {
        const IntervalMatrix jx = model.jac_x_box(p.x, u_tot, p.th);
        const IntervalMatrix ju = model.jac_u_box(p.x, u_tot, p.th);
        Interval v = jx(i, j);
        for (int r = 0; r < m; ++r)
          v = v + ju(i, r) * Interval(gain(r, j));
        return v - Interval(a0k(i, j));
      }
      const IntervalMatrix ju = model.jac_u_box(p.x, u_tot, p.th);
      return ju(i, j - n) - Interval(nom.b(i, j - n));
    };
    const Interval whole = entry(full);
    if (whole.width() <= 1e-9) {  // constant entry: no subdivision needed
      const double v = whole.mid();
      sector.lo(i, j) = v;
      sector.hi(i, j) = v;
      return;
    }
    const RangeBound r = bound_range(entry, full, bopts);
    sector.lo(i, j) = r.bound.lo();
    sector.hi(i, j) = r.bound.hi();
    tight[idx] = r.tight_lo && r.tight_hi;
  });
  for (char t : tight) sector.all_tight = sector.all_tight && t;
  return sector;
}

UncertaintyVertices uncertainty_vertices(const PlantModel& model,
                                         const ParamBox& params, double tol) {
  const int n = model.state_dim, m = model.input_dim, d = model.param_dim;
  if (params.dim() != d)
    throw std::invalid_argument("parameter box dimension mismatch");
  if (d > 16)
    throw std::invalid_argument(
        "parameter dimension too large for corner sampling");

  const LinearizedDynamics nom = linearize(model, VectorXd::Zero(d));

  UncertaintyVertices out;
  out.a_lo = nom.a;
  out.a_hi = nom.a;
  out.b_lo = nom.b;
  out.b_hi = nom.b;

  // Pin down which linearization entries move with the parameters.
  const Box tb = params.box();
  std::vector<VectorXd> samples;
  samples.push_back(box_center(tb));
  for (unsigned mask = 0; mask < (1u << d); ++mask)
    samples.push_back(box_corner(tb, mask));
  MatrixXd a_min = nom.a, a_max = nom.a, b_min = nom.b, b_max = nom.b;
  for (const VectorXd& th : samples) {
    const LinearizedDynamics ld = linearize(model, th);
    a_min = a_min.cwiseMin(ld.a);
    a_max = a_max.cwiseMax(ld.a);
    b_min = b_min.cwiseMin(ld.b);
    b_max = b_max.cwiseMax(ld.b);
  }
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j)
      if (a_max(i, j) - a_min(i, j) > 1e-12) out.a_entries.push_back({i, j});
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j)
      if (b_max(i, j) - b_min(i, j) > 1e-12) out.b_entries.push_back({i, j});

  const size_t total = out.a_entries.size() + out.b_entries.size();
  if (total > 20)
    throw std::invalid_argument(
        "too many parameter-dependent entries: vertex count 2^" +
        std::to_string(total));

  // Tol-tight bounds per varying entry over the parameter box.
  BoundOptions bopts;
  bopts.tol = tol;
  const Box zx = make_box(VectorXd::Zero(n), VectorXd::Zero(n));
  const Box zu = make_box(VectorXd::Zero(m), VectorXd::Zero(m));
  auto entry_bound = [&](bool in_a, int i, int j) {
    ScalarIntervalFn fn = [&, in_a, i, j](const Box& box) {
      return in_a ? model.jac_x_box(zx, zu, box)(i, j)
                  : model.jac_u_box(zx, zu, box)(i, j);
    };
    const RangeBound r = bound_range(fn, tb, bopts);
    return r.bound;
  };
  for (auto [i, j] : out.a_entries) {
    const Interval b = entry_bound(true, i, j);
    out.a_lo(i, j) = b.lo();
    out.a_hi(i, j) = b.hi();
  }
  for (auto [i, j] : out.b_entries) {
    const Interval b = entry_bound(false, i, j);
    out.b_lo(i, j) = b.lo();
    out.b_hi(i, j) = b.hi();
  }

  const size_t count = size_t{1} << total;
  out.vertices.reserve(count);
  for (size_t mask = 0; mask < count; ++mask) {
    LinearizedDynamics v{nom.a, nom.b};
    size_t bit = 0;
    for (auto [i, j] : out.a_entries) {
      v.a(i, j) = (mask >> bit) & 1 ? out.a_hi(i, j) : out.a_lo(i, j);
      ++bit;
    }
    for (auto [i, j] : out.b_entries) {
      v.b(i, j) = (mask >> bit) & 1 ? out.b_hi(i, j) : out.b_lo(i, j);
      ++bit;
    }
    out.vertices.push_back(std::move(v));
  }
  return out;
}

void write_sector_csv(std::ostream& os, const SectorBound& sector) {
  os << "# sector n=" << sector.state_dim() << " m=" << sector.input_dim()
     << " lipschitz=" << format_double(sector.lipschitz)
     << " tol=" << format_double(sector.tol)
     << " tight=" << (sector.all_tight ? 1 : 0) << "\n";
  os << "i,j,lo,hi\n";
  for (int i = 0; i < sector.lo.rows(); ++i)
    for (int j = 0; j < sector.lo.cols(); ++j)
      os << i << "," << j << "," << format_double(sector.lo(i, j)) << ","
         << format_double(sector.hi(i, j)) << "\n";
}

SectorBound read_sector_csv(std::istream& is) {
  std::string line;
  SectorBound sector;
  int n = -1, m = -1, tight = 1;
  if (!std::getline(is, line) || line.rfind("# sector ", 0) != 0)
    throw std::invalid_argument("sector csv: missing metadata line");
  {
    std::istringstream meta(line.substr(9));
    std::string tok;
    while (meta >> tok) {
      const auto eq = tok.find('=');
      if (eq == std::string::npos) continue;
      const std::string key = tok.substr(0, eq);
      const std::string val = tok.substr(eq + 1);
      if (key == "n") n = std::stoi(val);
      else if (key == "m") m = std::stoi(val);
      else if (key == "lipschitz") sector.lipschitz = std::stod(val);
      else if (key == "tol") sector.tol = std::stod(val);
      else if (key == "tight") tight = std::stoi(val);
    }
  }
  if (n <= 0 || m < 0) throw std::invalid_argument("sector csv: bad header");
  if (!std::getline(is, line) || line != "i,j,lo,hi")
    throw std::invalid_argument("sector csv: missing column header");
  sector.lo = MatrixXd::Zero(n, n + m);
  sector.hi = MatrixXd::Zero(n, n + m);
  sector.all_tight = tight != 0;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    int i, j;
    double lo, hi;
    char c1, c2, c3;
    if (!(row >> i >> c1 >> j >> c2 >> lo >> c3 >> hi) || c1 != ',' ||
        c2 != ',' || c3 != ',')
      throw std::invalid_argument("sector csv: bad row: " + line);
    if (i < 0 || i >= n || j < 0 || j >= n + m)
      throw std::invalid_argument("sector csv: entry out of range");
    sector.lo(i, j) = lo;
    sector.hi(i, j) = hi;
  }
  return sector;
}

}  // namespace rstab
