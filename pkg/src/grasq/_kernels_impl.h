// Hot loops for sparse Grassmann products and Pfaffian moments.
// Masks are 128-bit: bit i is generator i.
#pragma once

#include <algorithm>
#include <complex>
#include <cstdint>
#include <unordered_map>
#include <utility>
#include <vector>

namespace grasq {

typedef unsigned __int128 u128;
typedef std::complex<double> cplx;

struct Hash128 {
    size_t operator()(const u128 &x) const {
        uint64_t lo = (uint64_t)x;
        uint64_t hi = (uint64_t)(x >> 64);
        uint64_t h = lo * 0x9E3779B97F4A7C15ULL;
        h ^= hi + 0x632BE59BD9B4E019ULL + (h << 6) + (h >> 2);
        return (size_t)h;
    }
};

static inline int popcount128(u128 x) {
    return __builtin_popcountll((uint64_t)x) + __builtin_popcountll((uint64_t)(x >> 64));
}

// bit i of the result is the parity of #{j in b : j < i}
static inline u128 prefix_parity128(u128 b) {
    u128 p = b;
    p ^= p << 1;
    p ^= p << 2;
    p ^= p << 4;
    p ^= p << 8;
    p ^= p << 16;
    p ^= p << 32;
    p ^= p << 64;
    return p << 1;
}

// Sparse product; output sorted by mask.
static void wedge128(const std::vector<u128> &ma, const std::vector<cplx> &ca,
                     const std::vector<u128> &mb, const std::vector<cplx> &cb,
                     int max_degree, std::vector<u128> &mo, std::vector<cplx> &co) {
    size_t nb = mb.size();
    std::vector<u128> pb(nb);
    std::vector<int> db(nb);
    for (size_t j = 0; j < nb; ++j) {
        pb[j] = prefix_parity128(mb[j]);
        db[j] = popcount128(mb[j]);
    }
    std::unordered_map<u128, cplx, Hash128> acc;
    acc.reserve(std::min<size_t>(ma.size() * nb, 1u << 20));
    for (size_t i = 0; i < ma.size(); ++i) {
        u128 a = ma[i];
        int da = popcount128(a);
        cplx c0 = ca[i];
        for (size_t j = 0; j < nb; ++j) {
            u128 b = mb[j];
            if (a & b) continue;
            if (max_degree >= 0 && da + db[j] > max_degree) continue;
            cplx c = c0 * cb[j];
            if (popcount128(a & pb[j]) & 1) c = -c;
            acc[a | b] += c;
        }
    }
    std::vector<std::pair<u128, cplx>> items(acc.begin(), acc.end());
    std::sort(items.begin(), items.end(),
              [](const std::pair<u128, cplx> &x, const std::pair<u128, cplx> &y) {
                  return x.first < y.first;
              });
    mo.clear();
    co.clear();
    for (auto &it : items) {
        if (it.second != cplx(0.0, 0.0)) {
            mo.push_back(it.first);
            co.push_back(it.second);
        }
    }
}

// Pfaffian of an n x n antisymmetric matrix (row-major, overwritten).
static cplx pfaffian_inplace(cplx *a, int n) {
    if (n == 0) return cplx(1.0, 0.0);
    if (n % 2) return cplx(0.0, 0.0);
    cplx pf(1.0, 0.0);
    for (int k = 0; k < n - 1; k += 2) {
        int kp = k + 1;
        double best = std::abs(a[(k + 1) * n + k]);
        for (int r = k + 2; r < n; ++r) {
            double v = std::abs(a[r * n + k]);
            if (v > best) {
                best = v;
                kp = r;
            }
        }
        if (kp != k + 1) {
            for (int c = 0; c < n; ++c) std::swap(a[(k + 1) * n + c], a[kp * n + c]);
            for (int r = 0; r < n; ++r) std::swap(a[r * n + k + 1], a[r * n + kp]);
            pf = -pf;
        }
        cplx piv = a[k * n + k + 1];
        if (piv == cplx(0.0, 0.0)) return cplx(0.0, 0.0);
        pf *= piv;
        for (int r = k + 2; r < n; ++r) {
            cplx tr = a[k * n + r] / piv;
            cplx cr = a[r * n + k + 1];
            for (int s = k + 2; s < n; ++s) {
                cplx ts = a[k * n + s] / piv;
                cplx cs = a[s * n + k + 1];
                a[r * n + s] += tr * cs - cr * ts;
            }
        }
    }
    return pf;
}

static inline int bits_of(u128 m, int *idx) {
    int d = 0;
    uint64_t lo = (uint64_t)m, hi = (uint64_t)(m >> 64);
    while (lo) {
        idx[d++] = __builtin_ctzll(lo);
        lo &= lo - 1;
    }
    while (hi) {
        idx[d++] = 64 + __builtin_ctzll(hi);
        hi &= hi - 1;
    }
    return d;
}

static cplx moment(u128 m, const cplx *sigma, int g, std::vector<cplx> &buf) {
    int idx[128];
    int d = bits_of(m, idx);
    if (d == 0) return cplx(1.0, 0.0);
    if (d % 2) return cplx(0.0, 0.0);
    if (d == 2) return sigma[idx[0] * g + idx[1]];
    if (d == 4) {
        int i = idx[0], j = idx[1], k = idx[2], l = idx[3];
        return sigma[i * g + j] * sigma[k * g + l] - sigma[i * g + k] * sigma[j * g + l] +
               sigma[i * g + l] * sigma[j * g + k];
    }
    buf.resize((size_t)d * d);
    for (int r = 0; r < d; ++r)
        for (int c = 0; c < d; ++c) buf[r * d + c] = sigma[idx[r] * g + idx[c]];
    return pfaffian_inplace(buf.data(), d);
}

static cplx wick128(const std::vector<u128> &m, const std::vector<cplx> &c, const cplx *sigma,
                    int g) {
    std::vector<cplx> buf;
    cplx total(0.0, 0.0);
    for (size_t i = 0; i < m.size(); ++i) total += c[i] * moment(m[i], sigma, g, buf);
    return total;
}

static cplx wick_product128(const std::vector<u128> &ma, const std::vector<cplx> &ca,
                            const std::vector<u128> &mb, const std::vector<cplx> &cb,
                            const cplx *sigma, int g) {
    std::vector<cplx> buf;
    size_t nb = mb.size();
    std::vector<u128> pb(nb);
    std::vector<int> db(nb);
    for (size_t j = 0; j < nb; ++j) {
        pb[j] = prefix_parity128(mb[j]);
        db[j] = popcount128(mb[j]);
    }
    cplx total(0.0, 0.0);
    for (size_t i = 0; i < ma.size(); ++i) {
        u128 a = ma[i];
        int da = popcount128(a);
        for (size_t j = 0; j < nb; ++j) {
            u128 b = mb[j];
            if ((a & b) || ((da + db[j]) & 1)) continue;
            cplx c = ca[i] * cb[j];
            if (popcount128(a & pb[j]) & 1) c = -c;
            total += c * moment(a | b, sigma, g, buf);
        }
    }
    return total;
}

}  // namespace grasq
