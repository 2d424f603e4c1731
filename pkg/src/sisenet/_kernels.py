"""Compiled inner loops: SSA + event replay + Euler, swab urn, event generator.

All kernels draw from a ``numpy.random.Generator`` passed in by the caller, so
a trajectory is fully determined by the generator's state on entry.
"""
import numpy as np
import numba as nb

ENTER = 0
EXIT = 1
TRANSFER = 2

OK = 0
UNDERFLOW = 1

DAYS_PER_YEAR = 365


@nb.njit(cache=True)
def draw_infected(rng, s, i, count):
    """Infected among ``count`` individuals drawn without replacement from (s, i)."""
    n = s + i
    if count >= n:
        return i
    if i == 0:
        return 0
    if s == 0:
        return count
    # draw the smaller of the sample and its complement
    flip = 2 * count > n
    m = n - count if flip else count
    k = 0
    rem_i = i
    rem_n = n
    for _ in range(m):
        if rng.random() * rem_n < rem_i:
            k += 1
            rem_i -= 1
        rem_n -= 1
    return i - k if flip else k


@nb.njit(cache=True)
def ssa_node(rng, s, i, phi, upsilon, gamma, dt):
    """Gillespie direct method over one step with phi frozen; returns (s, i)."""
    t = 0.0
    while True:
        a_inf = upsilon * phi * s
        a0 = a_inf + gamma * i
        if a0 <= 0.0:
            break
        t += rng.exponential(1.0) / a0
        if t >= dt:
            break
        if rng.random() * a0 < a_inf:
            s -= 1
            i += 1
        else:
            i -= 1
            s += 1
    return s, i


@nb.njit(cache=True)
def apply_event_arrays(rng, S, I, kind, src, dst, count, strict, clear_on_arrival):
    """Apply one scheduled event in place. Returns OK or UNDERFLOW."""
    if kind == ENTER:
        S[dst] += count
        return OK
    pop = S[src] + I[src]
    if count > pop:
        if strict:
            return UNDERFLOW
        count = pop
    k = draw_infected(rng, S[src], I[src], count)
    S[src] -= count - k
    I[src] -= k
    if kind == TRANSFER:
        if clear_on_arrival:
            S[dst] += count
        else:
            S[dst] += count - k
            I[dst] += k
    return OK


@nb.njit(cache=True)
def advance(
    rng,
    S,
    I,
    phi,
    t0,
    n_steps,
    dt,
    ev_time,
    ev_kind,
    ev_src,
    ev_dst,
    ev_count,
    ev_pos,
    par_pre,
    par_post,
    switch_time,
    clear_transport,
    seasons,
    strict,
    post_event_shedding,
    rec_step,
    rec_nodes,
    out,
):
    """Advance the network ``n_steps`` steps of length ``dt`` from time ``t0``.

    ``par_*`` rows hold (upsilon, beta1..beta4, gamma); ``par_post`` takes
    over at ``switch_time``, as does arrival clearing if ``clear_transport``.
    Snapshots (S, I, phi) of ``rec_nodes`` are written to ``out[r]`` before
    step ``rec_step[r]`` (``rec_step == n_steps`` records the final state).

    Returns (next event index, status, index of the failing event or -1).
    """
    n_nodes = S.shape[0]
    n_ev = ev_time.shape[0]
    n_rec = rec_step.shape[0]
    s_jump = np.empty(n_nodes, dtype=np.int64)
    i_jump = np.empty(n_nodes, dtype=np.int64)
    r = 0
    for n in range(n_steps + 1):
        while r < n_rec and rec_step[r] == n:
            for j in range(rec_nodes.shape[0]):
                node = rec_nodes[j]
                out[r, j, 0] = S[node]
                out[r, j, 1] = I[node]
                out[r, j, 2] = phi[node]
            r += 1
        if n == n_steps:
            break
        t = t0 + n * dt
        par = par_post if t >= switch_time else par_pre
        upsilon = par[0]
        gamma = par[5]
        doy = int(np.floor(t)) % DAYS_PER_YEAR

        # (1) local jumps, phi frozen at its start-of-step value
        for node in range(n_nodes):
            s, i = ssa_node(rng, S[node], I[node], phi[node], upsilon, gamma, dt)
            S[node] = s
            I[node] = i
            s_jump[node] = s
            i_jump[node] = i

        # (2) scheduled events in [t, t + dt)
        clear = clear_transport and t >= switch_time
        t_end = t + dt
        while ev_pos < n_ev and ev_time[ev_pos] < t_end:
            status = apply_event_arrays(
                rng, S, I, ev_kind[ev_pos], ev_src[ev_pos], ev_dst[ev_pos], ev_count[ev_pos], strict, clear
            )
            if status != OK:
                return ev_pos, status, ev_pos
            ev_pos += 1

        # (3) forward Euler for phi
        for node in range(n_nodes):
            if post_event_shedding:
                s = S[node]
                i = I[node]
            else:
                s = s_jump[node]
                i = i_jump[node]
            shed = i / (s + i) if s + i > 0 else 0.0
            beta = par[1 + seasons[node, doy]]
            phi[node] = phi[node] + dt * (shed - beta * phi[node])
    return ev_pos, OK, -1


@nb.njit(cache=True)
def swab_nodes(rng, S, I, p_detect, unit_size):
    """Urn swab protocol per node: 1 detected, 0 clean, -1 empty node."""
    n = S.shape[0]
    result = np.empty(n, dtype=np.int8)
    for j in range(n):
        s = S[j]
        i = I[j]
        if s + i == 0:
            result[j] = -1
            continue
        detected = 0
        while i > 0:
            size = min(unit_size, s + i)
            k = draw_infected(rng, s, i, size)
            s -= size - k
            i -= k
            if k > 0 and rng.random() < p_detect[k]:
                detected = 1
                break
        result[j] = detected
    return result


@nb.njit(cache=True)
def _pick_weighted(rng, pop, bound):
    # rejection sampling: uniform node, accept with probability pop / bound
    n = pop.shape[0]
    while True:
        node = int(rng.random() * n)
        if rng.random() * bound < pop[node]:
            return node


@nb.njit(cache=True)
def _pick_weighted_plus_one(rng, pop, bound):
    n = pop.shape[0]
    while True:
        node = int(rng.random() * n)
        if rng.random() * bound < pop[node] + 1:
            return node


@nb.njit(cache=True)
def generate_events(rng, pop, n_days, enter_mean, exit_mean, transfer_mean):
    """Seasonal demography: per-day Poisson counts of single-animal events.

    ``*_mean`` are per-day expected network-wide counts (length ``n_days``).
    Enter destinations are weighted by population + 1; exit and transfer sources are weighted by
    current node population; transfer destinations are uniform among the
    other nodes. ``pop`` is updated in place.
    """
    n_nodes = pop.shape[0]
    cap = 16
    for d in range(n_days):
        cap += 3 * int(enter_mean[d] + exit_mean[d] + transfer_mean[d]) + 16
    time = np.empty(cap, dtype=np.int64)
    kind = np.empty(cap, dtype=np.int8)
    src = np.empty(cap, dtype=np.int64)
    dst = np.empty(cap, dtype=np.int64)
    m = 0
    total = pop.sum()
    for d in range(n_days):
        n_enter = rng.poisson(enter_mean[d])
        n_exit = rng.poisson(exit_mean[d])
        n_transfer = rng.poisson(transfer_mean[d])
        need = n_enter + n_exit + n_transfer
        if m + need > cap:
            cap = 2 * (m + need)
            time = _grow_i64(time, cap)
            kind = _grow_i8(kind, cap)
            src = _grow_i64(src, cap)
            dst = _grow_i64(dst, cap)
        # births land in proportion to herd size (+1 so empty herds restock)
        bound = pop.max() + 1
        for _ in range(n_enter):
            node = _pick_weighted_plus_one(rng, pop, bound)
            pop[node] += 1
            if pop[node] + 1 > bound:
                bound = pop[node] + 1
            total += 1
            time[m] = d
            kind[m] = ENTER
            src[m] = -1
            dst[m] = node
            m += 1
        bound = pop.max()
        if bound == 0:
            continue
        for _ in range(n_exit):
            if total == 0:
                break
            node = _pick_weighted(rng, pop, bound)
            pop[node] -= 1
            total -= 1
            time[m] = d
            kind[m] = EXIT
            src[m] = node
            dst[m] = -1
            m += 1
        if total == 0:
            continue
        for _ in range(n_transfer):
            a = _pick_weighted(rng, pop, bound)
            b = int(rng.random() * (n_nodes - 1))
            if b >= a:
                b += 1
            pop[a] -= 1
            pop[b] += 1
            time[m] = d
            kind[m] = TRANSFER
            src[m] = a
            dst[m] = b
            m += 1
            # destinations may exceed the start-of-day maximum
            if pop[b] > bound:
                bound = pop[b]
    return time[:m], kind[:m], src[:m], dst[:m]


@nb.njit(cache=True)
def _grow_i64(a, cap):
    b = np.empty(cap, dtype=np.int64)
    b[: a.shape[0]] = a
    return b


@nb.njit(cache=True)
def _grow_i8(a, cap):
    b = np.empty(cap, dtype=np.int8)
    b[: a.shape[0]] = a
    return b
