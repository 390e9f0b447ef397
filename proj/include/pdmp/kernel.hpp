#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/SparseCore>

#include "pdmp/grid.hpp"

namespace pdmp {

using SparseMatrix = Eigen::SparseMatrix<double>;

// Discretized jump decomposition (P₀, P∂). Inputs are the pair (q·f, f₊)
// of bulk and Γ⁺ densities; P₀ lands in the bulk, P∂ on Γ⁻. When pd_bulk is
// empty the boundary operator is Ψ = H∘Tr⁺ with H = pd_plus.
struct JumpKernel {
  SparseMatrix p0_bulk; // bulk  -> bulk
  SparseMatrix p0_plus; // Γ⁺    -> bulk
  SparseMatrix pd_bulk; // bulk  -> Γ⁻
  SparseMatrix pd_plus; // Γ⁺    -> Γ⁻
  // Renormalization applied while building (e.g. burst mass beyond the
  // transverse cut); 0 when none.
  double renormalization_error {0.0};

  bool has_B() const { return p0_bulk.nonZeros() + p0_plus.nonZeros() > 0; }
  bool has_Psi() const { return pd_bulk.nonZeros() + pd_plus.nonZeros() > 0; }
  bool boundary_only() const { return pd_bulk.nonZeros() == 0; }

  static JumpKernel zero(const CharGrid& grid);
};

enum class KernelTarget { Bulk, Minus };
enum class KernelSource { Bulk, Plus };

// Assembles a kernel from mass fractions: `fraction` of the mass at the
// source node lands at the target node.
class KernelBuilder {
public:
  explicit KernelBuilder(const CharGrid& grid) : grid_ {&grid} {}

  void add(KernelTarget target, std::size_t to, KernelSource source,
    std::size_t from, double fraction);
  JumpKernel build() const;

private:
  struct Entry {
    KernelTarget target;
    std::size_t to;
    KernelSource source;
    std::size_t from;
    double fraction;
  };
  const CharGrid* grid_;
  std::vector<Entry> entries_;
};

struct KernelReport {
  bool positive {true};
  double max_column_mass {0.0};
  double min_active_column_mass {1.0};
  bool substochastic {true};
  bool conservative {false};
};

// Column mass fractions of the pair operator. Columns with no outgoing mass
// are skipped when computing min_active_column_mass.
KernelReport check_kernel(const JumpKernel& kernel, const CharGrid& grid,
  double tolerance = 1e-10);

// P₀(g, g₊) and P∂(g, g₊) with g = q·f already applied by the caller.
GridDensity apply_P0(const JumpKernel& kernel, const GridDensity& g,
  const BoundaryDensity& g_plus);
BoundaryDensity apply_Pd(const JumpKernel& kernel, const GridDensity& g,
  const BoundaryDensity& g_plus);

} // namespace pdmp
