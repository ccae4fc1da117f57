#include "mwalk/potential.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <fmt/format.h>

#include "mwalk/linalg.hpp"

namespace mw {

Potential::Potential(int dim, std::vector<double> lo, std::vector<double> hi, Expr f)
    : dim_(dim), lo_(std::move(lo)), hi_(std::move(hi)), f_(std::move(f)) {
    if (dim_ < 1) throw PotentialError("dimension must be >= 1");
    if (lo_.size() != static_cast<size_t>(dim_) || hi_.size() != static_cast<size_t>(dim_))
        throw PotentialError("domain bounds do not match dimension");
    for (int i = 0; i < dim_; ++i)
        if (!(lo_[i] < hi_[i]))
            throw PotentialError(fmt::format("empty domain interval on axis {}", i + 1));
    grad_.resize(dim_);
    hess_.resize(static_cast<size_t>(dim_) * dim_);
    for (int i = 0; i < dim_; ++i) grad_[i] = diff(f_, i);
    for (int i = 0; i < dim_; ++i)
        for (int j = i; j < dim_; ++j) {
            Expr d2 = diff(grad_[i], j);
            hess_[static_cast<size_t>(i) * dim_ + j] = d2;
            hess_[static_cast<size_t>(j) * dim_ + i] = d2;
        }
}

static std::string trimmed(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

Potential Potential::parse(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    int dim = -1;
    std::vector<double> lo, hi;
    std::string fexpr;
    while (std::getline(in, line)) {
        line = trimmed(line);
        if (line.empty() || line[0] == '#') continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw PotentialError(fmt::format("malformed line: '{}'", line));
        std::string key = trimmed(line.substr(0, eq));
        std::string val = trimmed(line.substr(eq + 1));
        if (key == "dim") {
            dim = std::stoi(val);
        } else if (key == "domain") {
            // [lo1,hi1]x[lo2,hi2]x...
            size_t pos = 0;
            while (pos < val.size()) {
                if (val[pos] != '[')
                    throw PotentialError(fmt::format("bad domain syntax near '{}'", val.substr(pos)));
                size_t close = val.find(']', pos);
                if (close == std::string::npos) throw PotentialError("unterminated domain interval");
                std::string iv = val.substr(pos + 1, close - pos - 1);
                size_t comma = iv.find(',');
                if (comma == std::string::npos) throw PotentialError("domain interval needs two bounds");
                lo.push_back(std::stod(trimmed(iv.substr(0, comma))));
                hi.push_back(std::stod(trimmed(iv.substr(comma + 1))));
                pos = close + 1;
                while (pos < val.size() && std::isspace(static_cast<unsigned char>(val[pos]))) ++pos;
                if (pos < val.size()) {
                    if (val[pos] != 'x')
                        throw PotentialError("domain intervals must be joined by 'x'");
                    ++pos;
                    while (pos < val.size() && std::isspace(static_cast<unsigned char>(val[pos]))) ++pos;
                }
            }
        } else if (key == "F") {
            fexpr = val;
        } else {
            throw PotentialError(fmt::format("unknown key '{}'", key));
        }
    }
    if (dim < 1) throw PotentialError("missing or invalid 'dim'");
    if (lo.empty()) throw PotentialError("missing 'domain'");
    if (fexpr.empty()) throw PotentialError("missing 'F'");
    if (lo.size() != static_cast<size_t>(dim))
        throw PotentialError("domain dimension does not match 'dim'");
    return Potential(dim, std::move(lo), std::move(hi), parse_expression(fexpr, dim));
}

Potential Potential::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PotentialError(fmt::format("cannot open potential file: {}", path));
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
}

void Potential::gradient(const double* x, double* g) const {
    for (int i = 0; i < dim_; ++i) g[i] = eval(grad_[i], x);
}

void Potential::hessian(const double* x, double* h) const {
    for (int i = 0; i < dim_; ++i)
        for (int j = i; j < dim_; ++j) {
            double v = eval(hess_[static_cast<size_t>(i) * dim_ + j], x);
            h[static_cast<size_t>(i) * dim_ + j] = v;
            h[static_cast<size_t>(j) * dim_ + i] = v;
        }
}

bool Potential::inside(const double* x) const {
    for (int i = 0; i < dim_; ++i)
        if (!(lo_[i] < x[i] && x[i] < hi_[i])) return false;
    return true;
}

double Potential::diameter() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i) s += (hi_[i] - lo_[i]) * (hi_[i] - lo_[i]);
    return std::sqrt(s);
}

const char* to_string(CritKind k) {
    switch (k) {
        case CritKind::Minimum: return "minimum";
        case CritKind::Saddle: return "saddle";
        case CritKind::Maximum: return "maximum";
        case CritKind::Degenerate: return "degenerate";
    }
    return "?";
}

std::vector<double> CriticalPoint::unstable_dir() const {
    int d = static_cast<int>(x.size());
    std::vector<double> v(d);
    for (int i = 0; i < d; ++i) v[i] = eigvecs[i];
    return v;
}

static CritKind classify(const std::vector<double>& eigvals, double tol, int dim) {
    int neg = 0, pos = 0, zero = 0;
    for (double l : eigvals) {
        if (l < -tol) ++neg;
        else if (l > tol) ++pos;
        else ++zero;
    }
    if (zero > 0) return CritKind::Degenerate;
    if (neg == 0) return CritKind::Minimum;
    // In d=1 a nondegenerate local maximum plays the saddle role (H3).
    if (dim == 1) return CritKind::Saddle;
    if (neg == 1) return CritKind::Saddle;
    if (pos == 0) return CritKind::Maximum;
    return CritKind::Degenerate;  // index >= 2 but not a maximum: outside H2/H3
}

std::vector<CriticalPoint> find_critical_points(const Potential& pot,
                                                const CritFindOptions& opt) {
    if (opt.seeds_per_axis < 3) throw PotentialError("seeds_per_axis must be >= 3");
    const int d = pot.dim();
    const double diam = pot.diameter();
    const double dedup_radius = opt.dedup_factor * diam;

    // Gradient scale over the seed grid sets the absolute Newton tolerance.
    std::vector<double> x(d), g(d);
    std::vector<int> idx(d, 0);
    double grad_scale = 1.0;
    auto seed_point = [&](const std::vector<int>& k, std::vector<double>& p) {
        for (int i = 0; i < d; ++i) {
            double t = (k[i] + 1.0) / (opt.seeds_per_axis + 1.0);
            p[i] = pot.lo()[i] + t * (pot.hi()[i] - pot.lo()[i]);
        }
    };
    std::vector<std::vector<double>> seeds;
    for (;;) {
        seed_point(idx, x);
        seeds.push_back(x);
        pot.gradient(x.data(), g.data());
        for (int i = 0; i < d; ++i)
            if (std::isfinite(g[i])) grad_scale = std::max(grad_scale, std::abs(g[i]));
        int axis = 0;
        while (axis < d && ++idx[axis] == opt.seeds_per_axis) idx[axis++] = 0;
        if (axis == d) break;
    }
    const double newton_tol = opt.newton_tol_factor * grad_scale;
    const double max_step = 0.25 * diam;

    std::vector<CriticalPoint> out;
    std::vector<double> hess(static_cast<size_t>(d) * d), step(d), hcopy(hess.size());
    for (const auto& seed : seeds) {
        x = seed;
        bool converged = false;
        for (int it = 0; it < opt.max_newton_iter; ++it) {
            pot.gradient(x.data(), g.data());
            bool finite = true;
            for (double gi : g) finite = finite && std::isfinite(gi);
            if (!finite) break;
            double gn = norm2(g);
            if (gn <= newton_tol) { converged = true; break; }
            pot.hessian(x.data(), hess.data());
            hcopy = hess;
            step = g;
            try {
                solve_dense(hcopy, step, d);
            } catch (const NumericalError&) {
                break;  // singular Hessian along the way: discard seed
            }
            double sn = norm2(step);
            if (!std::isfinite(sn)) break;
            if (sn > max_step)
                for (double& s : step) s *= max_step / sn;
            for (int i = 0; i < d; ++i) x[i] -= step[i];
            if (!pot.inside(x.data())) break;
        }
        if (!converged || !pot.inside(x.data())) continue;

        // polish: keep stepping until the position settles, so seeds that met
        // the gradient tolerance at slightly different points (flat minima)
        // collapse onto one representative
        for (int it = 0; it < 80; ++it) {
            pot.gradient(x.data(), g.data());
            pot.hessian(x.data(), hess.data());
            hcopy = hess;
            step = g;
            try {
                solve_dense(hcopy, step, d);
            } catch (const NumericalError&) {
                break;
            }
            double sn = norm2(step);
            if (!std::isfinite(sn) || sn > max_step) break;
            for (int i = 0; i < d; ++i) x[i] -= step[i];
            if (!pot.inside(x.data())) {
                for (int i = 0; i < d; ++i) x[i] += step[i];
                break;
            }
            if (sn <= 1e-13 * diam) break;
        }

        bool dup = false;
        for (const auto& cp : out) {
            double dist = 0.0;
            for (int i = 0; i < d; ++i) dist += (cp.x[i] - x[i]) * (cp.x[i] - x[i]);
            if (std::sqrt(dist) <= dedup_radius) { dup = true; break; }
        }
        if (dup) continue;

        CriticalPoint cp;
        cp.x = x;
        cp.f = pot.value(x.data());
        pot.gradient(x.data(), g.data());
        cp.grad_norm = norm2(g);
        cp.hess.resize(hess.size());
        pot.hessian(x.data(), cp.hess.data());
        cp.eigvals = jacobi_eigensym(cp.hess, d, &cp.eigvecs, opt.eigen_tol);
        double hnorm = 0.0;
        for (double h : cp.hess) hnorm = std::max(hnorm, std::abs(h));
        // floor the scale globally: a flat critical point has a vanishing local
        // Hessian, which must read as degenerate rather than as a tiny tolerance
        hnorm = std::max(hnorm, grad_scale / diam);
        cp.kind = classify(cp.eigvals, opt.degeneracy_factor * hnorm, d);
        out.push_back(std::move(cp));
    }

    std::sort(out.begin(), out.end(), [](const CriticalPoint& a, const CriticalPoint& b) {
        if (a.f != b.f) return a.f < b.f;
        return a.x < b.x;
    });
    return out;
}

HypothesisReport check_hypotheses(const Potential& pot,
                                  const std::vector<CriticalPoint>& cps,
                                  bool literal_boundary_sign,
                                  int boundary_samples_per_axis) {
    HypothesisReport rep;
    const int d = pot.dim();

    // H1: sample Hessian differences at nearby interior point pairs to
    // estimate a Lipschitz constant for the second derivatives.
    {
        std::vector<double> ha(static_cast<size_t>(d) * d), hb(ha.size());
        std::vector<double> xa(d), xb(d);
        double lip = 0.0;
        bool finite = true;
        const int ns = 40;
        for (int s = 0; s < ns; ++s) {
            for (int i = 0; i < d; ++i) {
                double t = (std::sin(12.9898 * (s + 1) * (i + 1)) + 1.0) / 2.0;
                xa[i] = pot.lo()[i] + (0.05 + 0.9 * t) * (pot.hi()[i] - pot.lo()[i]);
                xb[i] = xa[i] + 1e-3 * (pot.hi()[i] - pot.lo()[i]) * (i == s % d ? 1 : 0);
            }
            pot.hessian(xa.data(), ha.data());
            pot.hessian(xb.data(), hb.data());
            double diffn = 0.0, dist = 0.0;
            for (size_t k = 0; k < ha.size(); ++k) {
                if (!std::isfinite(ha[k]) || !std::isfinite(hb[k])) finite = false;
                diffn += (ha[k] - hb[k]) * (ha[k] - hb[k]);
            }
            for (int i = 0; i < d; ++i) dist += (xa[i] - xb[i]) * (xa[i] - xb[i]);
            if (dist > 0) lip = std::max(lip, std::sqrt(diffn / dist));
        }
        rep.h1_lipschitz_estimate = lip;
        rep.h1_ok = finite;
        if (!finite) rep.violations.push_back("H1: non-finite second derivatives in the domain interior");
    }

    // H2/H3 from classifications.
    int minima = 0;
    for (const auto& cp : cps) {
        if (cp.kind == CritKind::Minimum) ++minima;
        if (cp.kind == CritKind::Degenerate) {
            rep.violations.push_back(fmt::format(
                "H2/H3: degenerate critical point at ({})", fmt::join(cp.x, ", ")));
            rep.h2_ok = false;
            rep.h3_ok = false;
        }
    }
    if (minima == 0) {
        rep.h2_ok = false;
        rep.violations.push_back("H2: no local minimum found");
    }

    // H4: sample each boundary face; outward normal n on face (axis, side).
    for (int axis = 0; axis < d; ++axis) {
        for (int side = 0; side < 2; ++side) {
            double worst = std::numeric_limits<double>::infinity();
            std::vector<double> x(d), g(d);
            std::vector<int> idx(d, 0);
            int samples = d == 1 ? 1 : boundary_samples_per_axis;
            for (int s = 0; s < (d == 1 ? 1 : samples); ++s) {
                for (int i = 0; i < d; ++i) {
                    if (i == axis) {
                        x[i] = side == 0 ? pot.lo()[i] : pot.hi()[i];
                    } else {
                        double t = (s + 0.5) / samples;
                        x[i] = pot.lo()[i] + t * (pot.hi()[i] - pot.lo()[i]);
                    }
                }
                pot.gradient(x.data(), g.data());
                double drift = g[axis] * (side == 0 ? -1.0 : 1.0);  // grad F . n
                if (literal_boundary_sign) drift = -drift;
                worst = std::min(worst, drift);
            }
            if (!(worst > 0)) {
                rep.h4_ok = false;
                rep.violations.push_back(fmt::format(
                    "H4: boundary drift not inward on face x{} = {} (min grad.n = {})",
                    axis + 1, side == 0 ? pot.lo()[axis] : pot.hi()[axis], worst));
            }
        }
    }
    return rep;
}

}  // namespace mw
