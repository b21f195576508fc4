#pragma once

#include "qlbe/rates.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <mutex>
#include <span>
#include <vector>

namespace qlbe {

// Uniform cubic momentum grid, N nodes per axis, symmetric about `center`.
// Node coordinates are center + (h/2) u with u = 2i - (N - 1), so every
// difference of nodes is an integer multiple of h/2 ("half-lattice" units).
class MomentumGrid {
 public:
  MomentumGrid(int n, double half_width, Vec3 center = {});

  // Default layout for a system: half-width `extent` times (1 + m/M) p_beta.
  static MomentumGrid for_system(const CollisionSystem& sys, int n = 24, double extent = 8.0);

  int n() const { return n_; }
  std::size_t size() const { return static_cast<std::size_t>(n_) * n_ * n_; }
  double spacing() const { return h_; }
  double half_width() const { return half_; }
  double cell_volume() const { return h_ * h_ * h_; }
  const Vec3& center() const { return center_; }

  std::size_t index(int i, int j, int k) const { return (static_cast<std::size_t>(i) * n_ + j) * n_ + k; }
  std::array<int, 3> axes(std::size_t idx) const;
  // Node offset from the centre in half-lattice units.
  std::array<int, 3> half_units(std::size_t idx) const;
  Vec3 node(std::size_t idx) const;
  bool is_boundary(std::size_t idx) const;

  bool operator==(const MomentumGrid&) const = default;

 private:
  int n_ = 0;
  double half_ = 0.0;
  double h_ = 0.0;
  Vec3 center_;
};

// g(P) = <P| rho |P - dP> on the grid nodes, for a fixed lattice offset dP.
struct CoherenceSector {
  CoherenceSector(MomentumGrid grid, const Vec3& dP);

  MomentumGrid grid;
  Vec3 dP;
  std::array<int, 3> dP_steps{};  // dP in grid spacings
  std::vector<complex> g;
  double time = 0.0;

  // Sum of g and of |g|, each times the cell volume.
  complex trace() const;
  double abs_mass() const;
};

enum class KernelKind {
  Full,             // m_in_quantum on the Q-plane
  PureDecoherence,  // heavy-tracer jump operators, independent of P
};

// How a kernel point value becomes a cell weight.
enum class CellRule {
  Point,        // h^3 K at the cell centre
  FourthOrder,  // Laplacian-corrected centre value; sub-cells next to Q = 0
};

struct GridOptions {
  int n_plane = 32;              // fixed Gauss-Legendre order per plane axis
  CellRule cell_rule = CellRule::FourthOrder;
  double stencil_radius = 0.0;   // |Q| cap for the gain stencil; 0 keeps every grid difference
  KernelKind kernel = KernelKind::Full;
  int threads = 1;
};

// Gain kernel, loss rates and phases for one (system, grid, dP) triple.
// Built once; applying it is a sparse matrix-vector product.
class QlbeGenerator {
 public:
  QlbeGenerator(CollisionSystem sys, MomentumGrid grid, const Vec3& dP, GridOptions opt = {});

  const CollisionSystem& system() const { return sys_; }
  const MomentumGrid& grid() const { return grid_; }
  const Vec3& dP() const { return dP_; }
  const GridOptions& options() const { return opt_; }

  // Incoherent part of dg/dt. Throws GridTooSmall when the boundary layer
  // carries more than 1e-6 of sum |g|.
  void apply(std::span<const complex> g, std::span<complex> dg) const;

  // Conservative loss per node: half the sum of the discrete out-rates at P and P - dP.
  const std::vector<double>& loss() const { return loss_; }
  double max_loss() const;
  // Coherent angular frequency per node, [E(P) - E(P - dP) + E_n(P) - E_n(P - dP)] / hbar.
  const std::vector<double>& frequency() const { return omega_; }

  // Gain kernel entry (cell volume included) coupling node b into node a; 0 off-stencil.
  complex kernel(std::size_t a, std::size_t b) const;
  std::size_t unique_kernel_values() const { return values_.size(); }

  // Relative gap between the discrete out-rate and the continuum one, weighted
  // by |g| over nodes above 1e-4 of the peak. The discrete out-rate counts
  // the stencil plus the Q = 0 cell, whose gain and loss cancel on the diagonal.
  double normalization_defect(std::span<const complex> g) const;
  double normalization_defect(std::size_t node) const;
  // Diagonal kernel integrated over the Q = 0 cell at a node.
  double self_cell(std::size_t node) const;

 private:
  CollisionSystem sys_;
  MomentumGrid grid_;
  Vec3 dP_;
  GridOptions opt_;
  std::vector<std::size_t> row_start_;
  std::vector<std::uint32_t> col_;
  std::vector<std::uint32_t> slot_;
  std::vector<complex> values_;
  std::vector<double> loss_;
  std::vector<double> omega_;
  std::vector<double> out_rate_;  // discrete column sums at each node
  // Node coordinates in half-lattice units from the origin, when the grid
  // centre is on the half-lattice (otherwise from the centre).
  std::array<std::int64_t, 3> absolute_units(std::size_t node) const;

  std::array<std::int64_t, 3> center_half_{};
  bool self_cell_rotational_ = false;
  mutable std::mutex self_cell_mutex_;
  mutable std::map<std::array<std::int64_t, 3>, double> self_cell_cache_;
};

// One-shot dg/dt for a sector (builds a generator with default options).
std::vector<complex> apply_generator(const CollisionSystem& sys, const CoherenceSector& sector);

struct EvolveOptions {
  double t_end = 1.0;
  double dt = 0.0;               // 0: 0.05 / max loss
  double output_interval = 0.0;  // 0: every step
  bool keep_fields = true;
};

struct SectorSample {
  double time = 0.0;
  complex trace;    // sum g * cell volume
  double abs_mass;  // sum |g| * cell volume
};

struct EvolveResult {
  std::vector<SectorSample> series;
  std::vector<CoherenceSector> fields;  // at output times, if kept
  double normalization_defect = 0.0;    // for the initial field
  double dt = 0.0;
};

// Strang splitting: half phase rotation, RK4 on the incoherent part, half phase.
// Throws InvalidArgument if dt exceeds 0.05 / max loss and StepUnstable if
// sum |g| grows by more than 10% in one step.
EvolveResult evolve(const QlbeGenerator& gen, CoherenceSector sector, const EvolveOptions& opt);

// Decoherence rate F(dx) of a heavy tracer (m/M -> 0 kinematics).
double localization_rate(const CollisionSystem& sys, const Vec3& dx);

}  // namespace qlbe
