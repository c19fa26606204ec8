#pragma once

#include <span>
#include <vector>

namespace kfbf::ad {

/// Values of all B-splines of the given degree defined on `knots`, evaluated
/// at x with the Cox-de Boor recursion. There are knots.size() - degree - 1 of
/// them. x outside [knots.front(), knots.back()] is clamped to the nearest
/// edge; the right edge is treated as a closed interval end.
std::vector<double> bspline_basis(double x, std::span<const double> knots, int degree);

/// Same as bspline_basis, also writing dB_p/dx into `derivatives`. Both output
/// spans must hold knots.size() - degree - 1 entries. `scratch` needs
/// knots.size() entries and is reused to avoid allocation in hot loops.
void bspline_basis_with_derivative(double x, std::span<const double> knots, int degree,
                                   std::span<double> values, std::span<double> derivatives,
                                   std::span<double> scratch);

/// Only the degree + 1 B-splines that can be nonzero at x, returned as the
/// index of the first one. x must lie in [knots[degree], knots[m - 1 - degree]]
/// (m = knots.size()), where every such function is defined; ContractError
/// otherwise. `derivatives` may be empty. Both spans hold degree + 1 entries.
std::size_t bspline_local_basis(double x, std::span<const double> knots, int degree,
                                std::span<double> values, std::span<double> derivatives);

}  // namespace kfbf::ad
