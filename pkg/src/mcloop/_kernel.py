"""Compiled inner loop of the loop-channel simulator.

Segments live in a ring buffer: the segment at loop position ``p`` is stored
in slot ``(head + p) % n``, so plug-flow advection is a change of ``head``.
Outside the EX/TX/RX regions only thermal relaxation acts, which is linear,
so it is applied lazily from the step stamp in ``age`` whenever a segment is
touched. The result matches the per-step operator order of ``channel_step``.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _catch_up(on, off, age, slot, target, lam_dt):
    m = target - age[slot]
    if m > 0:
        moved = off[slot] * -math.expm1(-lam_dt * m)
        off[slot] -= moved
        on[slot] += moved
        age[slot] = target


@njit(cache=True)
def run_loop(on, off, bl, age, head, res, levels, step0, sample_every,
             ex_lo, ex_hi, tx_lo, tx_hi, rx_lo, rx_hi,
             k_tx_dt, k_ex_dt, lam_dt, b_tx_dt, b_ex_dt, b_rx_dt,
             ex_active, mix, alpha, readout):
    """Advance ``len(levels)`` steps in place; return the new head.

    ``age`` stores absolute step stamps, ``step0`` is the stamp of the first
    step. ``readout[j]`` receives the mean ON fraction of the RX region before
    step ``j * sample_every``.
    """
    n = on.size
    p_relax = -math.expm1(-lam_dt)
    q_rx = math.exp(-b_rx_dt)
    p_ex = -math.expm1(-k_ex_dt) if ex_active else 0.0
    q_ex = math.exp(-b_ex_dt) if ex_active else 1.0
    j = 0
    for local in range(levels.size):
        s = step0 + local
        gamma = levels[local]

        if local % sample_every == 0 and j < readout.size:
            acc = 0.0
            for pos in range(rx_lo, rx_hi):
                slot = (head + pos) % n
                _catch_up(on, off, age, slot, s, lam_dt)
                acc += on[slot]
            readout[j] = acc / (rx_hi - rx_lo)
            j += 1

        p_tx = -math.expm1(-k_tx_dt * gamma)
        q_tx = math.exp(-b_tx_dt * gamma)
        for region in range(3):
            if region == 0:
                lo, hi = ex_lo, ex_hi
            elif region == 1:
                lo, hi = tx_lo, tx_hi
            else:
                lo, hi = rx_lo, rx_hi
            for pos in range(lo, hi):
                slot = (head + pos) % n
                _catch_up(on, off, age, slot, s, lam_dt)
                a = on[slot]
                b = off[slot]
                if region == 1:
                    moved = a * p_tx
                    a -= moved
                    b += moved
                elif region == 0:
                    moved = b * p_ex
                    b -= moved
                    a += moved
                moved = b * p_relax
                b -= moved
                a += moved
                if region == 1:
                    q = q_tx
                elif region == 0:
                    q = q_ex
                else:
                    q = q_rx
                lost = (a + b) - (a * q + b * q)
                a *= q
                b *= q
                on[slot] = a
                off[slot] = b
                bl[slot] += lost
                age[slot] = s + 1

        moved = res[1] * p_relax
        res[1] -= moved
        res[0] += moved

        if alpha > 0.0:
            for slot in range(n):
                _catch_up(on, off, age, slot, s + 1, lam_dt)
            _disperse(on, head, alpha)
            _disperse(off, head, alpha)
            _disperse(bl, head, alpha)

        end = (head + n - 1) % n
        _catch_up(on, off, age, end, s + 1, lam_dt)
        old0 = on[end]
        old1 = off[end]
        old2 = bl[end]
        on[end] = res[0]
        off[end] = res[1]
        bl[end] = res[2]
        res[0] = (1.0 - mix) * res[0] + mix * old0
        res[1] = (1.0 - mix) * res[1] + mix * old1
        res[2] = (1.0 - mix) * res[2] + mix * old2
        head = end
    return head


@njit(cache=True)
def _disperse(c, head, alpha):
    # explicit second-difference mixing before the shift, zero-flux ends
    n = c.size
    prev = c[head % n]
    for pos in range(n):
        slot = (head + pos) % n
        cur = c[slot]
        left = prev if pos > 0 else cur
        right = c[(head + pos + 1) % n] if pos < n - 1 else cur
        c[slot] = cur + alpha * (left - 2.0 * cur + right)
        prev = cur


def sync_all(on, off, age, target, lam_dt):
    """Bring every segment's relaxation up to step ``target`` (numpy, in place)."""
    m = target - age
    moved = off * -np.expm1(-lam_dt * m)
    off -= moved
    on += moved
    age[:] = target
