#pragma once

#include <string>
#include <vector>

#include "mwalk/expr.hpp"

namespace mw {

struct PotentialError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// F on an axis-aligned open box, with symbolic gradient and Hessian.
class Potential {
public:
    Potential(int dim, std::vector<double> lo, std::vector<double> hi, Expr f);

    // Text format:
    //   dim = <d>
    //   domain = [lo1,hi1]x[lo2,hi2]x...
    //   F = <expression>
    // Blank lines and lines starting with '#' are ignored.
    static Potential parse(const std::string& text);
    static Potential load_file(const std::string& path);

    int dim() const { return dim_; }
    const std::vector<double>& lo() const { return lo_; }
    const std::vector<double>& hi() const { return hi_; }
    const Expr& expr() const { return f_; }
    const Expr& grad_expr(int i) const { return grad_[i]; }
    const Expr& hess_expr(int i, int j) const { return hess_[static_cast<size_t>(i) * dim_ + j]; }

    double value(const double* x) const { return eval(f_, x); }
    void gradient(const double* x, double* g) const;
    void hessian(const double* x, double* h) const;  // d*d row-major, symmetric

    bool inside(const double* x) const;
    double diameter() const;

private:
    int dim_;
    std::vector<double> lo_, hi_;
    Expr f_;
    std::vector<Expr> grad_;
    std::vector<Expr> hess_;
};

enum class CritKind { Minimum, Saddle, Maximum, Degenerate };

const char* to_string(CritKind k);

struct CriticalPoint {
    std::vector<double> x;
    double f = 0.0;
    double grad_norm = 0.0;
    std::vector<double> hess;       // d*d row-major
    std::vector<double> eigvals;    // ascending
    std::vector<double> eigvecs;    // column-major, matching eigvals, orthonormal
    CritKind kind = CritKind::Degenerate;

    // Saddle helpers. mu = -eigvals[0]; v = unstable direction (unit norm).
    double mu() const { return -eigvals[0]; }
    std::vector<double> unstable_dir() const;
};

struct CritFindOptions {
    int seeds_per_axis = 12;
    int max_newton_iter = 80;
    double newton_tol_factor = 1e-10;   // * gradient scale
    double dedup_factor = 1e-6;         // * domain diameter
    double degeneracy_factor = 1e-8;    // * ||Hess||
    double eigen_tol = 1e-12;
};

std::vector<CriticalPoint> find_critical_points(const Potential& pot,
                                                const CritFindOptions& opt = {});

struct HypothesisReport {
    double h1_lipschitz_estimate = 0.0;  // empirical C1 for second derivatives
    bool h1_ok = true;
    bool h2_ok = true;                   // minima nondegenerate, >= 1 minimum
    bool h3_ok = true;                   // no Degenerate points among the rest
    bool h4_ok = true;                   // boundary drift points inward on all faces
    std::vector<std::string> violations;
    bool ok() const { return h1_ok && h2_ok && h3_ok && h4_ok; }
};

// literal_boundary_sign=false (default) requires grad F . n > 0 with n the
// outward normal, i.e. F increases toward the boundary, so there are no
// boundary minima; true checks the opposite inequality instead.
HypothesisReport check_hypotheses(const Potential& pot,
                                  const std::vector<CriticalPoint>& cps,
                                  bool literal_boundary_sign = false,
                                  int boundary_samples_per_axis = 64);

}  // namespace mw
