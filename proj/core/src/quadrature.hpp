#pragma once
// Internal quadrature helpers.

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>

namespace critdiff::detail {

//! Composite 20-point Gauss-Legendre with panels no wider than \p width.
template <class Fn>
double panel_quadrature(Fn&& f, double a, double b, double width, double max_panels = 4000.0) {
    if (!(b > a)) return 0.0;
    const auto panels = static_cast<int>(std::clamp(std::ceil((b - a) / width), 1.0, max_panels));
    const double w = (b - a) / panels;
    double s = 0.0;
    for (int k = 0; k < panels; ++k)
        s += boost::math::quadrature::gauss<double, 20>::integrate(f, a + k * w, a + (k + 1) * w);
    return s;
}

}  // namespace critdiff::detail
