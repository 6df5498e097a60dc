#pragma once

#include <functional>

#include "dive/matrix.hpp"

namespace dive {

// Central-difference gradient of `f` with respect to every entry of
// `values`, which `f` is expected to read. Entries are perturbed in place
// and restored. The denominator is the step actually representable in
// float, (x+h) - (x-h), not 2h.
Matrix finite_difference_grad(const std::function<double()>& f, Matrix& values, float step);

// max |a - b| / max(max |a|, max |b|): error measured against the scale of
// the gradient tensor, so entries that are ~0 do not blow the ratio up.
// Returns 0 when both tensors are exactly zero.
double gradient_relative_error(const Matrix& analytic, const Matrix& numeric);

}  // namespace dive
