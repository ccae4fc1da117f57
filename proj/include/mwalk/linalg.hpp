#pragma once

#include <stdexcept>
#include <vector>

namespace mw {

struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Symmetric eigendecomposition by cyclic Jacobi rotations. `a` is n x n
// row-major and is left untouched. Returns eigenvalues sorted ascending;
// `vecs` (if non-null) receives the matching eigenvectors, column-major
// (vecs[i + n*k] = component i of eigenvector k), orthonormal.
std::vector<double> jacobi_eigensym(const std::vector<double>& a, int n,
                                    std::vector<double>* vecs,
                                    double tol = 1e-12);

// Solves a x = b in place by Gaussian elimination with partial pivoting.
// `a` is n x n row-major; both are overwritten; the solution ends up in b.
// Throws NumericalError on a (numerically) singular pivot.
void solve_dense(std::vector<double>& a, std::vector<double>& b, int n);

double dot(const std::vector<double>& a, const std::vector<double>& b);
double norm2(const std::vector<double>& a);

}  // namespace mw
