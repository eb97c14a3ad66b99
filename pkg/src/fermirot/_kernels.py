"""Compiled inner loop for elementwise products of canonical operator products.

Same contract as ``algebra._multiply_pairs_numpy``; the numpy version stays
as the reference and as the fallback when numba is unavailable.
"""

import numpy as np

try:
    from numba import njit
except ImportError:  # pragma: no cover
    njit = None


if njit is not None:

    @njit(cache=True, inline="always")
    def _popcount(x):
        x = x - ((x >> np.uint64(1)) & np.uint64(0x5555555555555555))
        x = (x & np.uint64(0x3333333333333333)) + ((x >> np.uint64(2)) & np.uint64(0x3333333333333333))
        x = (x + (x >> np.uint64(4))) & np.uint64(0x0F0F0F0F0F0F0F0F)
        return (x * np.uint64(0x0101010101010101)) >> np.uint64(56)

    @njit(cache=True, inline="always")
    def _above_xor(b):
        y = b << np.uint64(1)
        y ^= y << np.uint64(1)
        y ^= y << np.uint64(2)
        y ^= y << np.uint64(4)
        y ^= y << np.uint64(8)
        y ^= y << np.uint64(16)
        y ^= y << np.uint64(32)
        return y

    @njit(cache=True, inline="always")
    def _inv_parity(a, b):
        # parity of #{(i in a, j in b): i > j}
        return _popcount(a & _above_xor(b)) & np.uint64(1)

    @njit(cache=True, inline="always")
    def _count_pair(q1, p2):
        return np.int64(1) << np.int64(_popcount(q1 & p2))

    @njit(cache=True, inline="always")
    def _emit(p1, q1, v1, p2, q2, v2, out_c, out_a, out_v, k):
        one = np.uint64(1)
        common = q1 & p2
        pp = p2 & ~common
        qq = q1 & ~common
        npp = _popcount(pp)
        nqq = _popcount(qq)
        base = (_inv_parity(common, qq) + _inv_parity(common, pp) + (nqq * npp)) & one
        v0 = v1 * v2
        s = common
        while True:
            cp = s | pp
            cq = s | qq
            if (p1 & cp) == 0 and (cq & q2) == 0:
                ns = _popcount(s)
                par = (base + ns + ns * npp + _inv_parity(s, pp) + _inv_parity(qq, s)
                       + _inv_parity(p1, cp) + _inv_parity(q2, cq)) & one
                out_c[k] = p1 | cp
                out_a[k] = cq | q2
                out_v[k] = -v0 if par else v0
                k += 1
            if s == 0:
                break
            s = (s - one) & common
        return k

    @njit(cache=True)
    def multiply_pairs(p1, q1, c1, p2, q2, c2):
        n = p1.shape[0]
        total = 0
        for i in range(n):
            total += _count_pair(q1[i], p2[i])
        out_c = np.empty(total, dtype=np.uint64)
        out_a = np.empty(total, dtype=np.uint64)
        out_v = np.empty(total, dtype=np.complex128)
        k = 0
        for i in range(n):
            k = _emit(p1[i], q1[i], c1[i], p2[i], q2[i], c2[i], out_c, out_a, out_v, k)
        return out_c[:k], out_a[:k], out_v[:k]

    @njit(cache=True)
    def multiply_outer(p1, q1, c1, p2, q2, c2):
        """All products x_i y_j, grouped by j."""
        total = 0
        for j in range(p2.shape[0]):
            for i in range(p1.shape[0]):
                total += _count_pair(q1[i], p2[j])
        out_c = np.empty(total, dtype=np.uint64)
        out_a = np.empty(total, dtype=np.uint64)
        out_v = np.empty(total, dtype=np.complex128)
        k = 0
        for j in range(p2.shape[0]):
            for i in range(p1.shape[0]):
                k = _emit(p1[i], q1[i], c1[i], p2[j], q2[j], c2[j], out_c, out_a, out_v, k)
        return out_c[:k], out_a[:k], out_v[:k]

else:  # pragma: no cover
    multiply_pairs = None
    multiply_outer = None
