#include "mwalk/lattice.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include <fmt/format.h>

namespace mw {

double Lattice::holding_rate(int64_t site) const {
    double lam = 0.0;
    for (int axis = 0; axis < dim; ++axis)
        for (int dir : {-1, 1}) {
            int64_t nb = neighbor(site, axis, dir);
            if (nb >= 0) lam += std::exp(log_jump_rate(site, nb));
        }
    return lam;
}

Lattice build_lattice(const Potential& pot, int N, const BuildLatticeOptions& opt) {
    if (N < 4) throw LatticeError("N must be >= 4");
    if (pot.dim() > 8) throw LatticeError("dimension > 8 not supported");

    Lattice lat;
    lat.dim = pot.dim();
    lat.N = N;
    lat.lo = pot.lo();
    lat.hi = pot.hi();
    lat.kmin.resize(lat.dim);
    lat.kmax.resize(lat.dim);
    lat.shape.resize(lat.dim);

    int64_t total = 1;
    for (int i = 0; i < lat.dim; ++i) {
        // strictly inside the open interval (lo, hi)
        lat.kmin[i] = static_cast<int>(std::floor(lat.lo[i] * N)) + 1;
        while (lat.kmin[i] <= lat.lo[i] * N) ++lat.kmin[i];
        lat.kmax[i] = static_cast<int>(std::ceil(lat.hi[i] * N)) - 1;
        while (lat.kmax[i] >= lat.hi[i] * N) --lat.kmax[i];
        if (lat.kmax[i] < lat.kmin[i]) throw LatticeError("empty lattice (N too small)");
        lat.shape[i] = lat.kmax[i] - lat.kmin[i] + 1;
        total *= lat.shape[i];
    }
    if (total > opt.max_sites)
        throw LatticeError(fmt::format("lattice would have {} sites (cap {})", total, opt.max_sites));

    lat.stride.assign(lat.dim, 1);
    for (int i = lat.dim - 2; i >= 0; --i)
        lat.stride[i] = lat.stride[i + 1] * lat.shape[i + 1];

    lat.f.resize(total);
    std::vector<double> x(lat.dim);
    lat.f_min = std::numeric_limits<double>::infinity();
    lat.f_max = -lat.f_min;
    for (int64_t s = 0; s < total; ++s) {
        lat.position(s, x.data());
        double v = pot.value(x.data());
        if (!std::isfinite(v))
            throw LatticeError(fmt::format("F not finite at lattice site ({})", fmt::join(x, ", ")));
        lat.f[s] = v;
        lat.f_min = std::min(lat.f_min, v);
        lat.f_max = std::max(lat.f_max, v);
    }
    lat.f_ref = lat.f_min;
    if (N * (lat.f_max - lat.f_min) > opt.max_scaled_exponent)
        throw LatticeError(fmt::format(
            "scaled exponent N*(max F - min F) = {} exceeds the overflow guard {}",
            N * (lat.f_max - lat.f_min), opt.max_scaled_exponent));
    return lat;
}

double partition_sum_check(const Lattice& lat, const std::vector<CriticalPoint>& cps) {
    double fmin_cp = std::numeric_limits<double>::infinity();
    for (const auto& cp : cps)
        if (cp.kind == CritKind::Minimum) fmin_cp = std::min(fmin_cp, cp.f);
    if (!std::isfinite(fmin_cp)) throw LatticeError("no classified minimum supplied");

    double denom = 0.0;
    int d = lat.dim;
    for (const auto& cp : cps) {
        if (cp.kind != CritKind::Minimum) continue;
        if (cp.f > fmin_cp + 1e-8 * std::max(1.0, std::abs(fmin_cp))) continue;
        double det = 1.0;
        for (double l : cp.eigvals) det *= l;
        denom += 1.0 / std::sqrt(det);
    }
    double sum = 0.0;
    for (int64_t s = 0; s < lat.size(); ++s)
        sum += std::exp(-lat.N * (lat.f[s] - fmin_cp));
    double rho = sum / std::pow(2.0 * M_PI * lat.N, d / 2.0) / denom;
    return rho;
}

bool lattice_connected(const Lattice& lat) {
    // The site box is a product of intervals, hence connected by construction;
    // still verified by BFS as a guard against indexing bugs.
    if (lat.size() == 0) return false;
    std::vector<uint8_t> seen(lat.size(), 0);
    std::queue<int64_t> q;
    q.push(0);
    seen[0] = 1;
    int64_t count = 1;
    while (!q.empty()) {
        int64_t s = q.front();
        q.pop();
        for (int axis = 0; axis < lat.dim; ++axis)
            for (int dir : {-1, 1}) {
                int64_t nb = lat.neighbor(s, axis, dir);
                if (nb >= 0 && !seen[nb]) {
                    seen[nb] = 1;
                    ++count;
                    q.push(nb);
                }
            }
    }
    return count == lat.size();
}

static const char kMagic[8] = {'M', 'W', 'L', 'A', 'T', '0', '0', '1'};

void Lattice::dump(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw LatticeError(fmt::format("cannot open {} for writing", path));
    out.write(kMagic, 8);
    int32_t d = dim, n = N;
    int64_t count = size();
    out.write(reinterpret_cast<const char*>(&d), 4);
    out.write(reinterpret_cast<const char*>(&n), 4);
    out.write(reinterpret_cast<const char*>(&count), 8);
    auto wr = [&out](const void* p, size_t bytes) {
        out.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(bytes));
    };
    wr(lo.data(), sizeof(double) * lo.size());
    wr(hi.data(), sizeof(double) * hi.size());
    wr(kmin.data(), sizeof(int) * kmin.size());
    wr(kmax.data(), sizeof(int) * kmax.size());
    wr(&f_ref, sizeof(double));
    wr(f.data(), sizeof(double) * f.size());
    if (!out) throw LatticeError("write failure");
}

Lattice Lattice::load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LatticeError(fmt::format("cannot open {}", path));
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kMagic, 8) != 0)
        throw LatticeError("bad lattice file header");
    Lattice lat;
    int32_t d = 0, n = 0;
    int64_t count = 0;
    in.read(reinterpret_cast<char*>(&d), 4);
    in.read(reinterpret_cast<char*>(&n), 4);
    in.read(reinterpret_cast<char*>(&count), 8);
    if (!in || d < 1 || d > 8 || n < 4 || count <= 0)
        throw LatticeError("corrupt lattice file");
    lat.dim = d;
    lat.N = n;
    lat.lo.resize(d);
    lat.hi.resize(d);
    lat.kmin.resize(d);
    lat.kmax.resize(d);
    lat.shape.resize(d);
    auto rd = [&in](void* p, size_t bytes) {
        in.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(bytes));
    };
    rd(lat.lo.data(), sizeof(double) * d);
    rd(lat.hi.data(), sizeof(double) * d);
    rd(lat.kmin.data(), sizeof(int) * d);
    rd(lat.kmax.data(), sizeof(int) * d);
    rd(&lat.f_ref, sizeof(double));
    int64_t total = 1;
    for (int i = 0; i < d; ++i) {
        lat.shape[i] = lat.kmax[i] - lat.kmin[i] + 1;
        total *= lat.shape[i];
    }
    if (total != count) throw LatticeError("corrupt lattice file (shape mismatch)");
    lat.stride.assign(d, 1);
    for (int i = d - 2; i >= 0; --i) lat.stride[i] = lat.stride[i + 1] * lat.shape[i + 1];
    lat.f.resize(total);
    rd(lat.f.data(), sizeof(double) * lat.f.size());
    if (!in) throw LatticeError("truncated lattice file");
    lat.f_min = *std::min_element(lat.f.begin(), lat.f.end());
    lat.f_max = *std::max_element(lat.f.begin(), lat.f.end());
    return lat;
}

}  // namespace mw
