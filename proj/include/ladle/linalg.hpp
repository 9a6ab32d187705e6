#pragma once

#include "ladle/tensor.hpp"

namespace ladle {

// Symmetric eigendecomposition by cyclic Jacobi rotations.
// Returns eigenvalues in descending order; eigvecs column j is the
// eigenvector for eigenvalue j.
void jacobi_eigh(const Tensor& A, Tensor& eigvals, Tensor& eigvecs, int max_sweeps = 64);

}  // namespace ladle
