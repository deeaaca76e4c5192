"""Compiled event-driven kernels.

Group elements are ``int64`` codes (see :mod:`contactlab.groups`); right
multiplication by an element is described by an operand row.  Each replica
owns a xoshiro256** stream seeded from ``(seed, replica, stream)`` through
splitmix64, so results do not depend on how replicas are scheduled across
threads.
"""
from __future__ import annotations

import numpy as np
from numba import config, njit, prange

# TBB in this environment is too old; workqueue is always available
config.THREADING_LAYER = "workqueue"

EMPTY = np.int64(-9223372036854775808)

ST_ALIVE = 0
ST_EXTINCT = 1
ST_ESCAPED = 2
ST_CAPPED = 3
ST_OVERFLOW = 4

_U53 = 1.0 / 9007199254740992.0


# --- random numbers -----------------------------------------------------------

@njit(cache=True, inline="always")
def _rotl(x, k):
    return (x << np.uint64(k)) | (x >> np.uint64(64 - k))


@njit(cache=True, inline="always")
def _splitmix(x):
    x = x + np.uint64(0x9E3779B97F4A7C15)
    z = x
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@njit(cache=True)
def rng_new(seed, stream_a, stream_b):
    s = np.empty(4, np.uint64)
    x = _splitmix(np.uint64(seed))
    x = _splitmix(x ^ np.uint64(stream_a))
    x = _splitmix(x ^ (np.uint64(stream_b) * np.uint64(0xD1B54A32D192ED03)))
    for i in range(4):
        x = _splitmix(x)
        s[i] = x
    return s


@njit(cache=True, inline="always")
def _next(s):
    result = _rotl(s[1] * np.uint64(5), 7) * np.uint64(9)
    t = s[1] << np.uint64(17)
    s[2] ^= s[0]
    s[3] ^= s[1]
    s[1] ^= s[2]
    s[0] ^= s[3]
    s[2] ^= t
    s[3] = _rotl(s[3], 45)
    return result


@njit(cache=True, inline="always")
def rng_uniform(s):
    return np.float64(_next(s) >> np.uint64(11)) * _U53


@njit(cache=True, inline="always")
def rng_exponential(s, rate):
    return -np.log(1.0 - rng_uniform(s)) / rate


@njit(cache=True, inline="always")
def rng_index(s, n):
    i = np.int64(rng_uniform(s) * n)
    return i if i < n else n - 1


@njit(cache=True)
def rng_poisson(s, mean):
    """Poisson variate by inversion, in chunks of mean at most 30."""
    k = 0
    while mean > 0:
        m = mean if mean <= 30.0 else 30.0
        mean -= m
        u = rng_uniform(s)
        p = np.exp(-m)
        c = p
        j = 0
        while u > c and p > 0.0:
            j += 1
            p *= m / j
            c += p
        k += j
    return k


# --- open-addressing hash map: code -> position in the dense site list ------------

@njit(cache=True, inline="always")
def _slot(key, mask):
    h = np.uint64(key) * np.uint64(0x9E3779B97F4A7C15)
    h ^= h >> np.uint64(29)
    return np.int64(h & np.uint64(mask))


@njit(cache=True)
def hs_new(cap):
    keys = np.full(cap, EMPTY, np.int64)
    vals = np.zeros(cap, np.int64)
    return keys, vals


@njit(cache=True, inline="always")
def hs_find(keys, key):
    mask = keys.size - 1
    i = _slot(key, mask)
    while keys[i] != EMPTY and keys[i] != key:
        i = (i + 1) & mask
    return i


@njit(cache=True, inline="always")
def hs_contains(keys, key):
    return keys[hs_find(keys, key)] == key


@njit(cache=True)
def hs_grow(keys, vals):
    nk, nv = hs_new(keys.size * 2)
    for i in range(keys.size):
        if keys[i] != EMPTY:
            j = hs_find(nk, keys[i])
            nk[j] = keys[i]
            nv[j] = vals[i]
    return nk, nv


@njit(cache=True)
def hs_delete(keys, vals, key):
    mask = keys.size - 1
    i = hs_find(keys, key)
    if keys[i] == EMPTY:
        return
    j = i
    while True:
        j = (j + 1) & mask
        if keys[j] == EMPTY:
            break
        k = _slot(keys[j], mask)
        if i <= j:
            if i < k <= j:
                continue
        else:
            if k <= j or k > i:
                continue
        keys[i] = keys[j]
        vals[i] = vals[j]
        i = j
    keys[i] = EMPTY


# --- group arithmetic on codes ----------------------------------------------------

@njit(cache=True)
def rmul(kind, kp, code, row):
    """Return ``(code * g, ok)`` for the element ``g`` described by ``row``."""
    if kind == 0:
        return code + row[0], True
    if kind == 1:
        base = kp[1]
        limit = (np.int64(9223372036854775807) - base) // base
        for idx in range(1, row[0] + 1):
            l = row[idx]
            if code > 0 and (code % base) - 1 == (l ^ 1):
                code = code // base
            else:
                if code > limit:
                    return code, False
                code = code * base + l + 1
        return code, True
    if kind == 2:
        return (code + row[0]) % kp[0], True
    # lamplighter
    half_l = kp[0]
    pb = kp[1]
    half_p = np.int64(1) << (pb - 1)
    x = (code & ((np.int64(1) << pb) - 1)) - half_p
    bits = code >> pb
    t = row[0]
    if t != 0:
        if row[2] + x < -half_l or row[3] + x >= half_l:
            return code, False
        if x >= 0:
            bits ^= t << x
        else:
            bits ^= t >> (-x)
    y = x + row[1]
    if y < -half_p or y >= half_p:
        return code, False
    return (bits << pb) | (y + half_p), True


@njit(cache=True, inline="always")
def _pick(cum, u):
    k = 0
    while k < cum.size - 1 and u > cum[k]:
        k += 1
    return k


# --- contact process replica --------------------------------------------------------

@njit(cache=True)
def _observe(kind, kp, keys, vals, sites, n, o,
             sizes, qcodes, qoff, hits, wcodes, wpat,
             crows, cpat, ciota, rng,
             drows, dom, srows, srates, gcard, store, slen):
    sizes[o] = n
    nq = qoff.size - 1
    for q in range(nq):
        hit = False
        for p in range(qoff[q], qoff[q + 1]):
            if n > 0 and hs_contains(keys, qcodes[p]):
                hit = True
                break
        hits[o, q] = hit
    if wcodes.size > 0:
        pat = np.int64(0)
        for b in range(wcodes.size):
            if n > 0 and hs_contains(keys, wcodes[b]):
                pat |= np.int64(1) << b
        wpat[o] = pat
    if crows.shape[0] > 0:
        if n == 0:
            cpat[o] = -1
            ciota[o] = EMPTY
        else:
            iota = sites[rng_index(rng, n)]
            pat = np.int64(0)
            for b in range(crows.shape[0]):
                y, ok = rmul(kind, kp, iota, crows[b])
                if ok and hs_contains(keys, y):
                    pat |= np.int64(1) << b
            cpat[o] = pat
            ciota[o] = iota
    if drows.shape[0] > 0:
        found = False
        if n > 0:
            for p in range(n):
                shift, ok = rmul(kind, kp, sites[p], drows[0])
                if not ok:
                    continue
                good = True
                for b in range(1, drows.shape[0]):
                    y, ok2 = rmul(kind, kp, shift, drows[b])
                    if not ok2 or not hs_contains(keys, y):
                        good = False
                        break
                if good:
                    found = True
                    break
        dom[o] = found
    if gcard.size > 0:
        acc = 0.0
        for p in range(n):
            for k in range(srows.shape[0]):
                y, ok = rmul(kind, kp, sites[p], srows[k])
                if not ok or not hs_contains(keys, y):
                    acc += srates[k]
        gcard[o] = acc
    if store.shape[1] > 0:
        if n <= store.shape[1]:
            for p in range(n):
                store[o, p] = sites[p]
            slen[o] = n
        else:
            slen[o] = -1


@njit(cache=True)
def run_replica(kind, kp, srows, srates, scum, arate, delta,
                init, obs, rng, size_cap, esc,
                sizes, qcodes, qoff, hits, wcodes, wpat,
                crows, cpat, ciota, drows, dom, gcard, store, slen):
    """Simulate one replica, writing observations at the sorted times ``obs``.

    Returns ``(status, extinction_time, events)``.
    """
    cap = 16
    while cap < 4 * init.size:
        cap *= 2
    keys, vals = hs_new(cap)
    sites = np.empty(max(8, init.size), np.int64)
    n = 0
    for c in init:
        i = hs_find(keys, c)
        if keys[i] != c:
            keys[i] = c
            vals[i] = n
            sites[n] = c
            n += 1
    t = 0.0
    ext_time = -1.0
    status = ST_ALIVE
    events = 0
    per_site = arate + delta
    p_rec = delta / per_site if per_site > 0 else 0.0
    o = 0
    nobs = obs.size
    while o < nobs:
        t_obs = obs[o]
        # events strictly before the observation time
        while n > 0 and per_site > 0:
            dt = rng_exponential(rng, n * per_site)
            if t + dt > t_obs:
                break
            t += dt
            events += 1
            p = rng_index(rng, n)
            u = rng_uniform(rng)
            if u < p_rec:
                c = sites[p]
                hs_delete(keys, vals, c)
                n -= 1
                if p != n:
                    last = sites[n]
                    sites[p] = last
                    vals[hs_find(keys, last)] = p
                if n == 0:
                    ext_time = t
                    status = ST_EXTINCT
            else:
                k = _pick(scum, (u - p_rec) / (1.0 - p_rec))
                y, ok = rmul(kind, kp, sites[p], srows[k])
                if not ok:
                    status = ST_OVERFLOW
                    break
                i = hs_find(keys, y)
                if keys[i] != y:
                    if 2 * (n + 1) > keys.size:
                        keys, vals = hs_grow(keys, vals)
                        i = hs_find(keys, y)
                    if n + 1 > sites.size:
                        ns = np.empty(sites.size * 2, np.int64)
                        ns[:n] = sites[:n]
                        sites = ns
                    keys[i] = y
                    vals[i] = n
                    sites[n] = y
                    n += 1
                    if n > size_cap:
                        status = ST_CAPPED
                        break
                    if esc > 0 and n >= esc:
                        status = ST_ESCAPED
                        break
        if status >= ST_ESCAPED:
            break
        t = t_obs
        _observe(kind, kp, keys, vals, sites, n, o,
                 sizes, qcodes, qoff, hits, wcodes, wpat,
                 crows, cpat, ciota, rng, drows, dom, srows, srates, gcard, store, slen)
        o += 1
    while o < nobs:
        sizes[o] = -1
        o += 1
    if status == ST_ALIVE and n == 0:
        status = ST_EXTINCT
    return status, ext_time, events


@njit(cache=True, parallel=True)
def run_batch(kind, kp, srows, srates, scum, arate, delta,
              init, obs, exp_mean, seed, rep0, size_cap, esc,
              sizes, status, ext_time, events, obs_used,
              qcodes, qoff, hits, wcodes, wpat, crows, cpat, ciota,
              drows, dom, gcard, store, slen):
    """Run replicas ``rep0 .. rep0 + len(sizes) - 1``.

    With ``exp_mean > 0`` each replica is observed once, at an independent
    exponential time of that mean drawn from its own auxiliary stream.
    """
    nrep = sizes.shape[0]
    for r in prange(nrep):
        rng = rng_new(seed, rep0 + r, 0)
        if exp_mean > 0:
            aux = rng_new(seed, rep0 + r, 1)
            my_obs = np.empty(1)
            my_obs[0] = -exp_mean * np.log(1.0 - rng_uniform(aux))
        else:
            my_obs = obs
        obs_used[r] = my_obs[my_obs.size - 1]
        st, et, ev = run_replica(kind, kp, srows, srates, scum, arate, delta,
                                 init, my_obs, rng, size_cap, esc,
                                 sizes[r], qcodes, qoff, hits[r], wcodes, wpat[r],
                                 crows, cpat[r], ciota[r], drows, dom[r], gcard[r],
                                 store[r], slen[r])
        status[r] = st
        ext_time[r] = et
        events[r] = ev


# --- branching process, optionally coupled to a contact process --------------------

@njit(cache=True)
def branching_replica(kind, kp, srows, scum, arate, delta, ident, obs, rng, pop_cap,
                      qcodes, pop, counts, cp_size, dominated):
    """Branching random walk with birth kernel ``a`` and death rate ``delta``.

    A contact process rides along: every infected site owns one *leader*
    particle.  A leader's offspring landing on a healthy site becomes that
    site's leader (an infection); otherwise offspring are free particles.
    A leader's death is a recovery.  Returns ``(status, positions, leader
    flags)`` for the particles alive at the end.
    """
    pos = np.empty(16, np.int64)
    lead = np.zeros(16, np.bool_)
    keys, vals = hs_new(16)
    pos[0] = ident
    lead[0] = True
    i0 = hs_find(keys, pos[0])
    keys[i0] = pos[0]
    vals[i0] = 0
    m = 1
    ncp = 1
    per = arate + delta
    p_death = delta / per if per > 0 else 0.0
    t = 0.0
    status = ST_ALIVE
    for o in range(obs.size):
        t_obs = obs[o]
        while m > 0 and per > 0:
            dt = rng_exponential(rng, m * per)
            if t + dt > t_obs:
                break
            t += dt
            p = rng_index(rng, m)
            u = rng_uniform(rng)
            if u < p_death:
                if lead[p]:
                    hs_delete(keys, vals, pos[p])
                    ncp -= 1
                m -= 1
                pos[p] = pos[m]
                lead[p] = lead[m]
                if lead[p]:
                    vals[hs_find(keys, pos[p])] = p
            else:
                k = _pick(scum, (u - p_death) / (1.0 - p_death))
                y, ok = rmul(kind, kp, pos[p], srows[k])
                if not ok:
                    status = ST_OVERFLOW
                    break
                if m + 1 > pos.size:
                    np_ = np.empty(pos.size * 2, np.int64)
                    nl = np.zeros(pos.size * 2, np.bool_)
                    np_[:m] = pos[:m]
                    nl[:m] = lead[:m]
                    pos = np_
                    lead = nl
                pos[m] = y
                lead[m] = False
                if lead[p]:
                    i = hs_find(keys, y)
                    if keys[i] != y:
                        if 2 * (ncp + 1) > keys.size:
                            keys, vals = hs_grow(keys, vals)
                            i = hs_find(keys, y)
                        keys[i] = y
                        vals[i] = m
                        lead[m] = True
                        ncp += 1
                m += 1
                if m > pop_cap:
                    status = ST_CAPPED
                    break
        if status != ST_ALIVE:
            for oo in range(o, obs.size):
                pop[oo] = -1
                cp_size[oo] = -1
            break
        t = t_obs
        pop[o] = m
        cp_size[o] = ncp
        for q in range(qcodes.size):
            c = 0
            for p in range(m):
                if pos[p] == qcodes[q]:
                    c += 1
            counts[o, q] = c
        # pathwise check: every infected site carries at least one particle
        pk, pv = hs_new(16)
        while pk.size < 2 * (m + 1):
            pk, pv = hs_new(pk.size * 2)
        for p in range(m):
            j = hs_find(pk, pos[p])
            if pk[j] != pos[p]:
                pk[j] = pos[p]
                pv[j] = 1
            else:
                pv[j] += 1
        ok_all = True
        for j in range(keys.size):
            if keys[j] != EMPTY:
                jj = hs_find(pk, keys[j])
                if pk[jj] != keys[j]:
                    ok_all = False
                    break
        dominated[o] = ok_all
    return status, pos[:m].copy(), lead[:m].copy()


@njit(cache=True, parallel=True)
def branching_batch(kind, kp, srows, scum, arate, delta, ident, obs, seed, rep0, pop_cap,
                    qcodes, pop, counts, cp_size, dominated, status):
    for r in prange(pop.shape[0]):
        rng = rng_new(seed, rep0 + r, 2)
        st, _, _ = branching_replica(kind, kp, srows, scum, arate, delta, ident, obs, rng, pop_cap,
                                     qcodes, pop[r], counts[r], cp_size[r], dominated[r])
        status[r] = st


# --- random walks --------------------------------------------------------------------

@njit(cache=True, parallel=True)
def rate_walk_batch(kind, kp, srows, scum, arate, t, seed, rep0, ident, final, jumps, ok):
    """Continuous-time walk jumping by support offsets at total rate ``arate``."""
    for r in prange(final.size):
        rng = rng_new(seed, rep0 + r, 3)
        code = ident
        nj = rng_poisson(rng, arate * t)
        good = True
        for _ in range(nj):
            k = _pick(scum, rng_uniform(rng))
            code, okk = rmul(kind, kp, code, srows[k])
            if not okk:
                good = False
                break
        final[r] = code
        jumps[r] = nj
        ok[r] = good


@njit(cache=True, parallel=True)
def overlap_walks(kind, kp, grows, set_codes, set_off, iotas, m_max, n_walks, seed, out, lost):
    """Average over walks of ``1{iota * xi_m in B}`` for uniform generator walks ``xi``.

    ``lost[s]`` counts walks that left the encodable range; they are scored
    as outside ``B`` from then on.
    """
    ns = iotas.size
    for s in prange(ns):
        size = set_off[s + 1] - set_off[s]
        cap = 16
        while cap < 2 * size + 2:
            cap *= 2
        keys, vals = hs_new(cap)
        for p in range(set_off[s], set_off[s + 1]):
            j = hs_find(keys, set_codes[p])
            keys[j] = set_codes[p]
        rng = rng_new(seed, s, 4)
        for w in range(n_walks):
            code = iotas[s]
            good = True
            for m in range(m_max + 1):
                if m > 0:
                    g = rng_index(rng, grows.shape[0])
                    if good:
                        code, okk = rmul(kind, kp, code, grows[g])
                        if not okk:
                            good = False
                            lost[s] += 1
                if good and hs_contains(keys, code):
                    out[s, m] += 1.0
        for m in range(m_max + 1):
            out[s, m] /= n_walks
