#include "qlbe/grid.hpp"

#include "qlbe/errors.hpp"
#include "qlbe/limits.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <string>
#include <unordered_map>

namespace qlbe {

namespace {

constexpr double kBoundaryFraction = 1e-6;
constexpr double kGrowthLimit = 1.10;
constexpr double kLossStepFactor = 0.05;
constexpr std::size_t kMaxKernelPairs = 80'000'000;

using Key = std::array<std::int64_t, 9>;

struct KeyHash {
  std::size_t operator()(const Key& k) const noexcept {
    std::uint64_t h = 0x9e3779b97f4a7c15ULL;
    for (const std::int64_t v : k) {
      std::uint64_t z = h + static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ULL;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      h = z ^ (z >> 31);
    }
    return static_cast<std::size_t>(h);
  }
};

using I3 = std::array<std::int64_t, 3>;

constexpr std::int64_t idot(const I3& a, const I3& b) { return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]; }
constexpr I3 isub(const I3& a, const I3& b) { return {a[0] - b[0], a[1] - b[1], a[2] - b[2]}; }

// Identifies a kernel entry K(P, P', Q). With an isotropic gas centred on
// the origin every model is O(3) invariant, so the Gram matrix of the three
// vectors (exact integers in half-lattice units) is a complete key.
class KernelKeys {
 public:
  explicit KernelKeys(bool rotational) : rotational_(rotational) {}

  Key operator()(const I3& A, const I3& B, const I3& C) const {
    if (rotational_) {
      return {idot(A, A), idot(B, B), idot(C, C), idot(A, B), idot(A, C), idot(B, C), 0, 0, 0};
    }
    return {A[0], A[1], A[2], B[0], B[1], B[2], C[0], C[1], C[2]};
  }

 private:
  bool rotational_;
};

class KernelTable {
 public:
  std::uint32_t slot(const Key& key, const I3& A, const I3& B, const I3& C) {
    const auto [it, inserted] = index_.try_emplace(key, static_cast<std::uint32_t>(args_.size()));
    if (inserted) {
      args_.push_back({A, B, C});
    }
    return it->second;
  }
  std::uint32_t find(const Key& key) const { return index_.at(key); }
  std::size_t size() const { return args_.size(); }
  const std::array<I3, 3>& args(std::size_t i) const { return args_[i]; }

 private:
  std::unordered_map<Key, std::uint32_t, KeyHash> index_;
  std::vector<std::array<I3, 3>> args_;
};

// Cubic-symmetry canonical form: sorted absolute components.
I3 cubic_canonical(const I3& v) {
  I3 c{std::abs(v[0]), std::abs(v[1]), std::abs(v[2])};
  std::ranges::sort(c);
  return c;
}

// |Q_c| times the mean of 1/|Q| over the lattice cell centred at Q_c (in
// half-lattice units, cell side 2). Weighting point values by this ratio
// integrates the 1/|Q| factor of the kernel exactly cell by cell.
double singular_cell_ratio(const I3& C) {
  constexpr int kNodes = 6;
  const GaussLegendre& gl = gauss_legendre(kNodes);
  CompensatedSum sum;
  for (int i = 0; i < kNodes; ++i) {
    for (int j = 0; j < kNodes; ++j) {
      for (int k = 0; k < kNodes; ++k) {
        const Vec3 x{C[0] + gl.nodes[i], C[1] + gl.nodes[j], C[2] + gl.nodes[k]};
        sum.add(gl.weights[i] * gl.weights[j] * gl.weights[k] / x.norm());
      }
    }
  }
  const double mean = sum.value() / 8.0;
  return std::sqrt(static_cast<double>(idot(C, C))) * mean;
}

// h^3 * plane integral of |L|^2 for the heavy-tracer jump operators.
double pure_decoherence_kernel(const CollisionSystem& sys, const Vec3& Q, int n) {
  const double q = Q.norm();
  const Vec3 q_hat = Q / q;
  const Frame fr = orthonormal_frame(Q);
  const Vec3 c = center(sys.distribution());
  const Vec3 origin = c - dot(c, q_hat) * q_hat;
  const double half = std::holds_alternative<MaxwellBoltzmann>(sys.distribution())
                          ? sys.quad().plane_extent * sys.p_beta()
                          : support_radius(sys.distribution());
  const GaussLegendre& gl = gauss_legendre(n);
  CompensatedSum sum;
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const Vec3 p = origin + half * gl.nodes[i] * fr.e1 + half * gl.nodes[j] * fr.e2;
      sum.add(half * half * gl.weights[i] * gl.weights[j] * std::norm(L_pure_decoherence(sys, p, Q)));
    }
  }
  return sum.value();
}

}  // namespace

MomentumGrid::MomentumGrid(int n, double half_width, Vec3 center) : n_(n), half_(half_width), center_(center) {
  if (n < 8) {
    fail(ErrorKind::InvalidArgument, "grid needs at least 8 nodes per axis");
  }
  if (!(half_width > 0.0) || !std::isfinite(half_width)) {
    fail(ErrorKind::InvalidArgument, "grid half-width must be positive");
  }
  h_ = 2.0 * half_width / (n - 1);
}

MomentumGrid MomentumGrid::for_system(const CollisionSystem& sys, int n, double extent) {
  return MomentumGrid(n, extent * (1.0 + sys.masses().ratio()) * sys.p_beta());
}

std::array<int, 3> MomentumGrid::axes(std::size_t idx) const {
  const auto n = static_cast<std::size_t>(n_);
  return {static_cast<int>(idx / (n * n)), static_cast<int>(idx / n % n), static_cast<int>(idx % n)};
}

std::array<int, 3> MomentumGrid::half_units(std::size_t idx) const {
  const auto a = axes(idx);
  return {2 * a[0] - (n_ - 1), 2 * a[1] - (n_ - 1), 2 * a[2] - (n_ - 1)};
}

Vec3 MomentumGrid::node(std::size_t idx) const {
  const auto u = half_units(idx);
  return center_ + 0.5 * h_ * Vec3{static_cast<double>(u[0]), static_cast<double>(u[1]), static_cast<double>(u[2])};
}

bool MomentumGrid::is_boundary(std::size_t idx) const {
  const auto a = axes(idx);
  return std::ranges::any_of(a, [&](int i) { return i == 0 || i == n_ - 1; });
}

CoherenceSector::CoherenceSector(MomentumGrid grid_, const Vec3& dP_)
    : grid(std::move(grid_)), dP(dP_), g(grid.size(), complex{}) {
  const double h = grid.spacing();
  for (int i = 0; i < 3; ++i) {
    const double steps = dP[i] / h;
    const double rounded = std::round(steps);
    if (std::abs(steps - rounded) > 1e-9 * std::max(1.0, std::abs(steps))) {
      fail(ErrorKind::InvalidArgument, "dP must be a multiple of the grid spacing on every axis");
    }
    dP_steps[i] = static_cast<int>(rounded);
  }
}

complex CoherenceSector::trace() const {
  CompensatedComplexSum s;
  for (const complex& v : g) {
    s.add(v);
  }
  return s.value() * grid.cell_volume();
}

double CoherenceSector::abs_mass() const {
  CompensatedSum s;
  for (const complex& v : g) {
    s.add(std::abs(v));
  }
  return s.value() * grid.cell_volume();
}

QlbeGenerator::QlbeGenerator(CollisionSystem sys, MomentumGrid grid, const Vec3& dP, GridOptions opt)
    : sys_(std::move(sys)), grid_(std::move(grid)), dP_(dP), opt_(opt) {
  if (opt_.n_plane < 2) {
    fail(ErrorKind::InvalidArgument, "n_plane must be at least 2");
  }
  const CoherenceSector probe(grid_, dP);  // validates dP
  const I3 shift{2 * probe.dP_steps[0], 2 * probe.dP_steps[1], 2 * probe.dP_steps[2]};
  const bool diagonal = shift == I3{0, 0, 0};

  const std::size_t n = grid_.size();
  const double h = grid_.spacing();
  const double r_steps = opt_.stencil_radius > 0.0 ? 2.0 * opt_.stencil_radius / h : 0.0;
  const auto r2_cap = opt_.stencil_radius > 0.0 ? static_cast<std::int64_t>(std::floor(r_steps * r_steps))
                                                : std::numeric_limits<std::int64_t>::max();

  // When the grid centre sits on the half-lattice, node coordinates are
  // exact integers measured from the origin and the rotational key applies.
  bool aligned = true;
  for (int i = 0; i < 3; ++i) {
    const double c = 2.0 * grid_.center()[i] / h;
    aligned = aligned && std::abs(c - std::round(c)) <= 1e-9 * std::max(1.0, std::abs(c));
    center_half_[i] = aligned ? static_cast<std::int64_t>(std::round(c)) : 0;
  }
  const bool rotational =
      aligned && is_isotropic(sys_.distribution()) && center(sys_.distribution()) == Vec3{};
  self_cell_rotational_ = rotational;
  const KernelKeys keys(rotational);
  KernelTable table;

  std::vector<I3> u(n);
  for (std::size_t a = 0; a < n; ++a) {
    u[a] = absolute_units(a);
  }

  std::size_t pairs = 0;
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) {
      if (a != b && idot(isub(u[a], u[b]), isub(u[a], u[b])) <= r2_cap) {
        ++pairs;
      }
    }
  }
  if (pairs > kMaxKernelPairs) {
    fail(ErrorKind::InvalidArgument, "kernel would hold " + std::to_string(pairs) +
                                         " node pairs; reduce N or set a stencil radius");
  }

  row_start_.assign(n + 1, 0);
  col_.reserve(pairs);
  slot_.reserve(pairs);
  for (std::size_t a = 0; a < n; ++a) {
    const I3 A = u[a];
    const I3 B = isub(A, shift);
    for (std::size_t b = 0; b < n; ++b) {
      const I3 C = isub(A, u[b]);
      if (a == b || idot(C, C) > r2_cap) {
        continue;
      }
      col_.push_back(static_cast<std::uint32_t>(b));
      slot_.push_back(table.slot(keys(A, B, C), A, B, C));
      if (!diagonal) {
        table.slot(keys(A, A, C), A, A, C);
        table.slot(keys(B, B, C), B, B, C);
      }
    }
    row_start_[a + 1] = col_.size();
  }

  // Cell integrals at fixed source node. Away from Q = 0 the fourth-order
  // rule h^3 [K + (h^2/24) lap_h K] is used; without the Laplacian term the
  // 1/|Q| singularity leaves an O(h^2) gap in the out-rate. The 26 cells
  // touching Q = 0 are split into 3x3x3 sub-cells, each weighted by its
  // exact mean of 1/|Q|.
  const bool fourth_order = opt_.cell_rule == CellRule::FourthOrder;
  auto is_near = [&](const I3& C) { return fourth_order && std::ranges::max(cubic_canonical(C)) <= 2; };
  const std::size_t stencil_entries = table.size();
  for (std::size_t i = 0; i < stencil_entries; ++i) {
    const auto [A, B, C] = table.args(i);
    if (!fourth_order || is_near(C)) {
      continue;
    }
    for (int axis = 0; axis < 3; ++axis) {
      for (const int step : {-2, 2}) {
        I3 A2 = A, B2 = B, C2 = C;
        A2[axis] += step;
        B2[axis] += step;
        C2[axis] += step;
        table.slot(keys(A2, B2, C2), A2, B2, C2);
      }
    }
  }

  std::map<I3, double> sub_ratio;
  for (const I3& C : {I3{0, 0, 2}, I3{0, 2, 2}, I3{2, 2, 2}}) {
    for (int x = -1; x <= 1; ++x) {
      for (int y = -1; y <= 1; ++y) {
        for (int z = -1; z <= 1; ++z) {
          const I3 sub = cubic_canonical({3 * C[0] + 2 * x, 3 * C[1] + 2 * y, 3 * C[2] + 2 * z});
          if (!sub_ratio.contains(sub)) {
            sub_ratio[sub] = singular_cell_ratio(sub);
          }
        }
      }
    }
  }

  const double cell = grid_.cell_volume();
  const Vec3 origin = aligned ? Vec3{} : grid_.center();
  auto to_vec = [&](const I3& v) {
    return origin + 0.5 * h * Vec3{static_cast<double>(v[0]), static_cast<double>(v[1]), static_cast<double>(v[2])};
  };
  auto point = [&](const Vec3& target, const Vec3& target_prime, const Vec3& q) -> complex {
    if (opt_.kernel == KernelKind::Full) {
      return m_in_quantum_at(sys_, target, target_prime, q, opt_.n_plane);
    }
    return pure_decoherence_kernel(sys_, q, opt_.n_plane);
  };

  // Point values (or near-cell integrals) for every entry, in parallel;
  // each slot is written by one worker.
  std::vector<complex> raw(table.size());
  parallel_for(table.size(), opt_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& [A, B, C] = table.args(i);
      const Vec3 P = to_vec(A);
      const Vec3 Pp = to_vec(B);
      const Vec3 Q = 0.5 * h * Vec3{static_cast<double>(C[0]), static_cast<double>(C[1]), static_cast<double>(C[2])};
      if (!is_near(C)) {
        raw[i] = point(P, Pp, Q);
        continue;
      }
      const Vec3 src = P - Q;
      const Vec3 src_prime = Pp - Q;
      complex acc;
      for (int x = -1; x <= 1; ++x) {
        for (int y = -1; y <= 1; ++y) {
          for (int z = -1; z <= 1; ++z) {
            const I3 sub{3 * C[0] + 2 * x, 3 * C[1] + 2 * y, 3 * C[2] + 2 * z};
            const Vec3 q = h / 6.0 * Vec3{static_cast<double>(sub[0]), static_cast<double>(sub[1]),
                                          static_cast<double>(sub[2])};
            acc += sub_ratio.at(cubic_canonical(sub)) * point(src + q, src_prime + q, q);
          }
        }
      }
      raw[i] = acc / 27.0;
    }
  });

  values_.assign(stencil_entries, complex{});
  parallel_for(stencil_entries, opt_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const auto& [A, B, C] = table.args(i);
      if (!fourth_order || is_near(C)) {
        values_[i] = cell * raw[i];
        continue;
      }
      complex lap = -6.0 * raw[i];
      for (int axis = 0; axis < 3; ++axis) {
        for (const int step : {-2, 2}) {
          I3 A2 = A, B2 = B, C2 = C;
          A2[axis] += step;
          B2[axis] += step;
          C2[axis] += step;
          lap += raw[table.find(keys(A2, B2, C2))];
        }
      }
      values_[i] = cell * (raw[i] + lap / 24.0);
    }
  });

  // Conservative loss: the discrete out-rates at P and P - dP, taken over
  // exactly the transfers the gain stencil uses.
  loss_.assign(n, 0.0);
  out_rate_.assign(n, 0.0);
  std::vector<CompensatedSum> out_a(n);
  std::vector<CompensatedSum> out_b(n);
  for (std::size_t a = 0; a < n; ++a) {
    const I3 A = u[a];
    const I3 B = isub(A, shift);
    for (std::size_t k = row_start_[a]; k < row_start_[a + 1]; ++k) {
      const std::size_t b = col_[k];
      if (diagonal) {
        out_a[b].add(values_[slot_[k]].real());
      } else {
        const I3 C = isub(A, u[b]);
        out_a[b].add(values_[table.find(keys(A, A, C))].real());
        out_b[b].add(values_[table.find(keys(B, B, C))].real());
      }
    }
  }
  for (std::size_t b = 0; b < n; ++b) {
    out_rate_[b] = out_a[b].value();
    loss_[b] = diagonal ? out_rate_[b] : 0.5 * (out_rate_[b] + out_b[b].value());
  }

  omega_.assign(n, 0.0);
  if (!diagonal) {
    const double M = sys_.masses().M();
    std::unordered_map<std::int64_t, double> shift_cache;
    auto shift_at = [&](const I3& v) {
      if (!rotational) {
        return energy_shift(sys_, to_vec(v));
      }
      const auto [it, inserted] = shift_cache.try_emplace(idot(v, v), 0.0);
      if (inserted) {
        it->second = energy_shift(sys_, to_vec(v));
      }
      return it->second;
    };
    for (std::size_t a = 0; a < n; ++a) {
      const I3 B = isub(u[a], shift);
      const Vec3 P = to_vec(u[a]);
      const Vec3 Pp = to_vec(B);
      omega_[a] = ((P.norm2() - Pp.norm2()) / (2.0 * M) + shift_at(u[a]) - shift_at(B)) / Units::hbar;
    }
  }
}

std::array<std::int64_t, 3> QlbeGenerator::absolute_units(std::size_t node) const {
  const auto u = grid_.half_units(node);
  return {u[0] + center_half_[0], u[1] + center_half_[1], u[2] + center_half_[2]};
}

double QlbeGenerator::max_loss() const { return *std::ranges::max_element(loss_); }

complex QlbeGenerator::kernel(std::size_t a, std::size_t b) const {
  const auto first = col_.begin() + static_cast<std::ptrdiff_t>(row_start_[a]);
  const auto last = col_.begin() + static_cast<std::ptrdiff_t>(row_start_[a + 1]);
  const auto it = std::lower_bound(first, last, static_cast<std::uint32_t>(b));
  if (it == last || *it != b) {
    return {};
  }
  return values_[slot_[static_cast<std::size_t>(it - col_.begin())]];
}

void QlbeGenerator::apply(std::span<const complex> g, std::span<complex> dg) const {
  const std::size_t n = grid_.size();
  if (g.size() != n || dg.size() != n) {
    fail(ErrorKind::InvalidArgument, "field size does not match the grid");
  }
  CompensatedSum total;
  CompensatedSum edge;
  for (std::size_t a = 0; a < n; ++a) {
    const double v = std::abs(g[a]);
    total.add(v);
    if (grid_.is_boundary(a)) {
      edge.add(v);
    }
  }
  if (edge.value() > kBoundaryFraction * total.value()) {
    char share[32];
    std::snprintf(share, sizeof share, "%.3g", edge.value() / total.value());
    fail(ErrorKind::GridTooSmall, std::string("boundary layer holds ") + share + " of sum |g| (limit 1e-6)");
  }
  parallel_for(n, opt_.threads, [&](std::size_t begin, std::size_t end) {
    for (std::size_t a = begin; a < end; ++a) {
      // Fixed order per row, so the result does not depend on threading.
      double re = 0.0;
      double im = 0.0;
      for (std::size_t k = row_start_[a]; k < row_start_[a + 1]; ++k) {
        const complex v = values_[slot_[k]];
        const complex x = g[col_[k]];
        re += v.real() * x.real() - v.imag() * x.imag();
        im += v.real() * x.imag() + v.imag() * x.real();
      }
      dg[a] = complex{re, im} - loss_[a] * g[a];
    }
  });
}

double QlbeGenerator::self_cell(std::size_t node) const {
  if (self_cell_rotational_) {
    const I3 key = cubic_canonical(absolute_units(node));
    const std::lock_guard lock(self_cell_mutex_);
    if (const auto it = self_cell_cache_.find(key); it != self_cell_cache_.end()) {
      return it->second;
    }
  }
  // Integral of the diagonal kernel over the cube |Q_i| <= h/2, in polar
  // coordinates out to the cube face along each direction.
  const Vec3 P = grid_.node(node);
  const double half = 0.5 * grid_.spacing();
  constexpr int kAngular = 12;
  constexpr int kRadial = 4;
  const GaussLegendre& gc = gauss_legendre(kAngular);
  const GaussLegendre& gr = gauss_legendre(kRadial);
  CompensatedSum sum;
  for (int i = 0; i < kAngular; ++i) {
    const double ct = gc.nodes[i];
    const double st = std::sqrt(1.0 - ct * ct);
    for (int j = 0; j < 2 * kAngular; ++j) {
      const double phi = 2.0 * kPi * (j + 0.5) / (2 * kAngular);
      const Vec3 dir{st * std::cos(phi), st * std::sin(phi), ct};
      const double rho = half / std::max({std::abs(dir.x), std::abs(dir.y), std::abs(dir.z)});
      const double wdir = gc.weights[i] * 2.0 * kPi / (2 * kAngular);
      for (int k = 0; k < kRadial; ++k) {
        const double q = 0.5 * rho * (gr.nodes[k] + 1.0);
        const Vec3 Q = q * dir;
        const double K = opt_.kernel == KernelKind::Full ? m_in_quantum_at(sys_, P + Q, P + Q, Q, opt_.n_plane).real()
                                                         : pure_decoherence_kernel(sys_, Q, opt_.n_plane);
        sum.add(wdir * 0.5 * rho * gr.weights[k] * q * q * K);
      }
    }
  }
  const double value = sum.value();
  if (self_cell_rotational_) {
    const std::lock_guard lock(self_cell_mutex_);
    self_cell_cache_.emplace(cubic_canonical(absolute_units(node)), value);
  }
  return value;
}

double QlbeGenerator::normalization_defect(std::size_t node) const {
  const double exact = m_out_cl(sys_, grid_.node(node));
  return std::abs(out_rate_[node] + self_cell(node) - exact) / exact;
}

double QlbeGenerator::normalization_defect(std::span<const complex> g) const {
  double peak = 0.0;
  for (const complex& v : g) {
    peak = std::max(peak, std::abs(v));
  }
  CompensatedSum gap;
  CompensatedSum scale;
  for (std::size_t a = 0; a < g.size(); ++a) {
    const double w = std::abs(g[a]);
    if (w <= 1e-4 * peak) {
      continue;
    }
    const double exact = m_out_cl(sys_, grid_.node(a));
    gap.add(w * std::abs(out_rate_[a] + self_cell(a) - exact));
    scale.add(w * exact);
  }
  return scale.value() > 0.0 ? gap.value() / scale.value() : 0.0;
}

std::vector<complex> apply_generator(const CollisionSystem& sys, const CoherenceSector& sector) {
  const QlbeGenerator gen(sys, sector.grid, sector.dP);
  std::vector<complex> dg(sector.g.size());
  gen.apply(sector.g, dg);
  return dg;
}

EvolveResult evolve(const QlbeGenerator& gen, CoherenceSector sector, const EvolveOptions& opt) {
  if (!(sector.grid == gen.grid()) || !(sector.dP == gen.dP())) {
    fail(ErrorKind::InvalidArgument, "sector does not match the generator's grid or offset");
  }
  if (!(opt.t_end >= 0.0)) {
    fail(ErrorKind::InvalidArgument, "t_end must be nonnegative");
  }
  const double max_loss = gen.max_loss();
  const double dt_cap = max_loss > 0.0 ? kLossStepFactor / max_loss : std::numeric_limits<double>::infinity();
  double dt = opt.dt > 0.0 ? opt.dt : dt_cap;
  if (dt > dt_cap * (1.0 + 1e-12)) {
    fail(ErrorKind::InvalidArgument, "dt exceeds 0.05 / max loss rate (" + std::to_string(dt_cap) + ")");
  }
  long steps = 0;
  if (opt.t_end > 0.0) {
    steps = std::isfinite(dt) ? static_cast<long>(std::ceil(opt.t_end / dt - 1e-9)) : 1;
    steps = std::max(steps, 1L);
    dt = opt.t_end / static_cast<double>(steps);
  }
  const long every =
      opt.output_interval > 0.0 && steps > 0 ? std::max(1L, std::lround(opt.output_interval / dt)) : 1L;

  EvolveResult result;
  result.dt = dt;
  result.normalization_defect = gen.normalization_defect(sector.g);
  auto record = [&] {
    result.series.push_back({sector.time, sector.trace(), sector.abs_mass()});
    if (opt.keep_fields) {
      result.fields.push_back(sector);
    }
  };
  record();

  const std::size_t n = sector.g.size();
  const auto& omega = gen.frequency();
  const bool rotate = std::ranges::any_of(omega, [](double w) { return w != 0.0; });
  auto phase = [&](std::vector<complex>& g, double tau) {
    if (!rotate) {
      return;
    }
    for (std::size_t a = 0; a < n; ++a) {
      g[a] *= std::polar(1.0, -omega[a] * tau);
    }
  };

  std::vector<complex> k1(n), k2(n), k3(n), k4(n), tmp(n);
  const double t0 = sector.time;
  for (long s = 1; s <= steps; ++s) {
    const double before = sector.abs_mass();
    auto& g = sector.g;
    phase(g, 0.5 * dt);
    gen.apply(g, k1);
    for (std::size_t a = 0; a < n; ++a) {
      tmp[a] = g[a] + 0.5 * dt * k1[a];
    }
    gen.apply(tmp, k2);
    for (std::size_t a = 0; a < n; ++a) {
      tmp[a] = g[a] + 0.5 * dt * k2[a];
    }
    gen.apply(tmp, k3);
    for (std::size_t a = 0; a < n; ++a) {
      tmp[a] = g[a] + dt * k3[a];
    }
    gen.apply(tmp, k4);
    for (std::size_t a = 0; a < n; ++a) {
      g[a] += dt / 6.0 * (k1[a] + 2.0 * k2[a] + 2.0 * k3[a] + k4[a]);
    }
    phase(g, 0.5 * dt);
    sector.time = t0 + static_cast<double>(s) * dt;
    const double after = sector.abs_mass();
    if (after > kGrowthLimit * before) {
      fail(ErrorKind::StepUnstable, "sum |g| grew by " + std::to_string(after / before - 1.0) + " in one step");
    }
    if (s % every == 0 || s == steps) {
      record();
    }
  }
  return result;
}

namespace {

// 1 - sin(x)/x without cancellation near 0.
double one_minus_sinc(double x) {
  const double x2 = x * x;
  if (x2 < 1e-4) {
    return x2 / 6.0 * (1.0 - x2 / 20.0 * (1.0 - x2 / 42.0));
  }
  return 1.0 - std::sin(x) / x;
}

// |f|^2 as a function of cos(theta) at a fixed relative momentum k.
template <class F>
void with_angular_density(const ScatteringModel& model, double k, F&& use) {
  if (const auto* hs = std::get_if<HardSphere>(&model)) {
    const PartialWaves pw = hard_sphere_partial_waves(*hs, k);
    use([&](double c) { return std::norm(pw.amplitude(c)); });
  } else {
    use([&](double c) {
      const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
      return differential_cross_section(model, Vec3{k * s, 0.0, k * c}, Vec3{0.0, 0.0, k});
    });
  }
}

double model_length(const ScatteringModel& model) {
  if (const auto* hs = std::get_if<HardSphere>(&model)) {
    return hs->radius;
  }
  if (const auto* b = std::get_if<BornGaussian>(&model)) {
    return b->s;
  }
  return 0.0;
}

template <class F>
double composite_gl(double lo, double hi, long panels, F&& f) {
  constexpr int kNodes = 8;
  const GaussLegendre& gl = gauss_legendre(kNodes);
  const double w = (hi - lo) / static_cast<double>(panels);
  CompensatedSum sum;
  for (long p = 0; p < panels; ++p) {
    const double a = lo + w * static_cast<double>(p);
    for (int i = 0; i < kNodes; ++i) {
      sum.add(0.5 * w * gl.weights[i] * f(a + 0.5 * w * (gl.nodes[i] + 1.0)));
    }
  }
  return sum.value();
}

// Isotropic gas: averaging the phase over joint rotations gives a sinc of
// |dx| |q| with |q| = k u, u = sqrt(2 (1 - cos theta)).
double localization_isotropic(const CollisionSystem& sys, double D) {
  const auto& quad = sys.quad();
  const double R = support_radius(sys.distribution());
  const double pb = sys.p_beta();
  const double len = model_length(sys.model());

  auto inner = [&](double k) {
    if (k == 0.0 || D == 0.0) {
      return 0.0;
    }
    double result = 0.0;
    with_angular_density(sys.model(), k, [&](auto&& dens) {
      auto f = [&](double u) { return u * dens(1.0 - 0.5 * u * u) * one_minus_sinc(D * k * u); };
      long panels = 2 + static_cast<long>(std::ceil(2.0 * D * k / kPi + 2.0 * k * len));
      double prev = composite_gl(0.0, 2.0, panels, f);
      for (int i = 0; i <= quad.max_doublings; ++i) {
        panels *= 2;
        const double cur = composite_gl(0.0, 2.0, panels, f);
        if (std::abs(cur - prev) <= quad.rel_tol * std::abs(cur)) {
          result = 2.0 * kPi * cur;
          return;
        }
        prev = cur;
      }
      fail(ErrorKind::QuadratureNotConverged, "localization angular integral did not converge");
    });
    return result;
  };

  auto outer = [&](double k) { return 4.0 * kPi * k * k * mu(sys.distribution(), Vec3{0.0, 0.0, k}) * k * inner(k); };
  long panels = std::max(4L, static_cast<long>(std::ceil(2.0 * R / pb)));
  double prev = composite_gl(0.0, R, panels, outer);
  for (int i = 0; i <= quad.max_doublings; ++i) {
    panels *= 2;
    const double cur = composite_gl(0.0, R, panels, outer);
    if (std::abs(cur - prev) <= quad.rel_tol * std::abs(cur) || cur == 0.0) {
      return sys.n_gas() / sys.masses().m() * cur;
    }
    prev = cur;
  }
  fail(ErrorKind::QuadratureNotConverged, "localization radial integral did not converge");
}

// General gas: spherical product rule around the gas centre for p, and a
// product rule over outgoing directions about p.
double localization_general(const CollisionSystem& sys, const Vec3& dx) {
  const auto& quad = sys.quad();
  const Vec3 c = center(sys.distribution());
  const double R = support_radius(sys.distribution());
  auto level = [&](int scale) {
    const int nr = 16 * scale;
    const int nc = 8 * scale;
    const int nphi = 16 * scale;
    const int mc = 16 * scale;
    const int mphi = 16 * scale;
    const GaussLegendre& gr = gauss_legendre(nr);
    const GaussLegendre& gc = gauss_legendre(nc);
    const GaussLegendre& hc = gauss_legendre(mc);
    CompensatedSum sum;
    for (int i = 0; i < nr; ++i) {
      const double r = 0.5 * R * (gr.nodes[i] + 1.0);
      const double wr = 0.5 * R * gr.weights[i] * r * r;
      for (int j = 0; j < nc; ++j) {
        const double ct = gc.nodes[j];
        const double st = std::sqrt(1.0 - ct * ct);
        for (int l = 0; l < nphi; ++l) {
          const double phi = 2.0 * kPi * (l + 0.5) / nphi;
          const Vec3 p = c + r * Vec3{st * std::cos(phi), st * std::sin(phi), ct};
          const double w = wr * gc.weights[j] * (2.0 * kPi / nphi) * mu(sys.distribution(), p);
          const double k = p.norm();
          if (w == 0.0 || k == 0.0) {
            continue;
          }
          const Vec3 axis = p / k;
          const Frame fr = orthonormal_frame(axis);
          double acc = 0.0;
          with_angular_density(sys.model(), k, [&](auto&& dens) {
            for (int a = 0; a < mc; ++a) {
              const double cn = hc.nodes[a];
              const double sn = std::sqrt(1.0 - cn * cn);
              const double d = dens(cn);
              for (int b = 0; b < mphi; ++b) {
                const double ph = 2.0 * kPi * (b + 0.5) / mphi;
                const Vec3 nvec = cn * axis + sn * (std::cos(ph) * fr.e1 + std::sin(ph) * fr.e2);
                acc += hc.weights[a] * (2.0 * kPi / mphi) * d * (1.0 - std::cos(dot(dx, p - k * nvec) / Units::hbar));
              }
            }
          });
          sum.add(w * k * acc);
        }
      }
    }
    return sum.value();
  };
  const double coarse = level(1);
  const double fine = level(2);
  if (std::abs(fine - coarse) > std::max(quad.rel_tol, 1e-4) * std::abs(fine) && fine != 0.0) {
    fail(ErrorKind::QuadratureNotConverged, "localization product rule did not converge");
  }
  return sys.n_gas() / sys.masses().m() * fine;
}

}  // namespace

double localization_rate(const CollisionSystem& sys, const Vec3& dx) {
  if (dx == Vec3{}) {
    return 0.0;
  }
  if (is_isotropic(sys.distribution()) && center(sys.distribution()) == Vec3{}) {
    return localization_isotropic(sys, dx.norm() / Units::hbar);
  }
  return localization_general(sys, dx);
}

}  // namespace qlbe
