"""End-to-end acceptance checks; each prints one PASS/FAIL line.

Run alone with ``pytest -s tests/test_acceptance.py`` to see the lines inline
(they are also printed when output is captured).
"""
import math
import time

import numpy as np
import pytest
from scipy.special import jn_zeros

from seglab import blowup, nodal
from seglab.almgren import average, frequency_profile, monotonicity_check
from seglab.grid import Grid2D
from seglab.partition import disk_mask, lambda1, optimize_partition, partition_to_config
from seglab.pipeline import auto_centers
from seglab.segregated import Reaction, ReactionSpec
from seglab.solver import BoundarySpec, CompetitionProblem, beta_continuation, class_s_check, make_prototype

pytestmark = pytest.mark.slow


def verdict(request, n, ok, elapsed, limit, detail):
    ok = bool(ok) and elapsed < limit
    line = f"{'PASS' if ok else 'FAIL'} acceptance {n:>2}: {detail} ({elapsed:.1f}s / {limit:g}s)"
    capman = request.config.pluginmanager.getplugin("capturemanager")
    with capman.global_and_fixture_disabled():
        print("\n" + line, flush=True)
    assert ok, line


def test_01_arc_table(request):
    t = time.perf_counter()
    cases = [([2 * math.pi], 0.5), ([math.pi, math.pi], 1.0), ([2 * math.pi / 3] * 3, 1.5)]
    err = max(float(np.max(np.abs(blowup.classify_lengths(l).degrees - a))) for l, a in cases)
    verdict(request, 1, err <= 1e-12, time.perf_counter() - t, 1, f"max degree error {err:.1e}")


def test_02_prototype_three_sectors(request):
    t = time.perf_counter()
    g = Grid2D.square(-1.0, 1.0, 512)
    h = g.h
    U = make_prototype(3, g)
    prof = frequency_profile(U, (0.0, 0.0), 6 * h, 0.3, 24)
    n_err = float(np.max(np.abs(prof.N - 1.5)))
    ns = nodal.extract_nodal_set(U)
    sing = nodal.classify_points(U, [(0.0, 0.0)], ns, r_min=6 * h, r_max=0.3)[0]
    dev = math.degrees(nodal.equal_angle_check(sing))
    regular, _ = auto_centers(U, ns, 0.1, 0.15, 20 * h)
    reps = nodal.classify_points(U, regular, ns, r_min=6 * h)
    n0 = max(abs(r.N0 - 1.0) for r in reps)
    refl = max(nodal.reflection_check(U, p, nodal=ns).mismatch for p in regular)
    ok = (n_err <= 0.05 and sing.singular and sing.branch_count == 3 and dev <= 3
          and all(not r.singular for r in reps) and n0 <= 0.05 and refl <= 0.02 and len(reps) >= 10)
    verdict(request, 2, ok, time.perf_counter() - t, 30,
            f"|N-1.5|max {n_err:.3f}, angles dev {dev:.2f} deg, {len(reps)} regular |N0-1|max {n0:.3f}, "
            f"reflection {refl:.4f}")


def test_03_prototype_two_sectors(request):
    t = time.perf_counter()
    g = Grid2D.square(-1.0, 1.0, 256)
    U = make_prototype(2, g)
    prof = frequency_profile(U, (0.0, 0.0), 4 * g.h, 0.4, 24)
    mono = monotonicity_check(prof)
    n_err = float(np.max(np.abs(prof.N - 1.0)))
    ratios = [average(U, (0.0, 0.0), 2 * r) / average(U, (0.0, 0.0), r) for r in (0.05, 0.1, 0.2, 0.4)]
    d_err = max(abs(q / 4 - 1) for q in ratios)
    ok = n_err <= 0.01 and mono.C_tilde == 0 and mono.violation <= 1e-12 and d_err <= 0.01
    verdict(request, 3, ok, time.perf_counter() - t, 10,
            f"|N-1|max {n_err:.1e}, C {mono.C_tilde:g}, violation {mono.violation:.1e}, doubling err {d_err:.1e}")


def _competition(kind, amplitude=5000.0):
    g = Grid2D.square(0.0, 1.0, 256)
    bc = BoundarySpec.edge_bumps(g, ["left", "right"], amplitude)
    if kind == "gp":
        reaction = ReactionSpec.zero(2)
    else:
        reaction = ReactionSpec(tuple(Reaction.logistic(5.0, amplitude) for _ in range(2)))
    prob = CompetitionProblem(kind, reaction, 10.0, bc, g)
    return g, beta_continuation(prob, [10.0, 1e2, 1e3, 1e4], tol=1e-6 * amplitude, max_iters=100)


def test_04_gp_continuation(request):
    t = time.perf_counter()
    g, res = _competition("gp")
    h = g.h
    ov = res.overlaps
    U = res.final
    ns = nodal.extract_nodal_set(U)
    regular, _ = auto_centers(U, ns, 0.05, 0.15, 20 * h)
    reps = nodal.classify_points(U, regular, ns, r_min=12 * h, r_max=0.12)
    good = 0
    worst = (0.0, 0.0, 0.0, 0.0)
    for r in reps:
        m = nodal.reflection_check(U, r.location, nodal=ns).mismatch
        worst = tuple(max(a, b) for a, b in zip(worst, (abs(r.N0 - 1), r.C_tilde, r.violation, m)))
        good += abs(r.N0 - 1) <= 0.15 and r.C_tilde <= 10 and r.violation <= 1e-2 and m <= 0.1
    ok = (bool(np.all(np.diff(ov) < 0)) and ov[-1] <= 1e-3 * ov[0] and res.eps_seg <= 1e-3
          and good >= 10 and good == len(reps))
    verdict(request, 4, ok, time.perf_counter() - t, 300,
            f"overlap ratio {ov[-1] / ov[0]:.1e}, eps_seg {res.eps_seg:.1e}, {good}/{len(reps)} centers ok, "
            f"worst |N0-1| {worst[0]:.3f} C {worst[1]:.2f} viol {worst[2]:.1e} refl {worst[3]:.3f}")


def test_05_lv_class_s(request):
    t = time.perf_counter()
    _, res = _competition("lv")
    cs = class_s_check(res.final)
    verdict(request, 5, cs.passed, time.perf_counter() - t, 300,
            f"violations {cs.first:.2e}, {cs.second:.2e} vs tau {cs.tau:.2e}")


def test_06_partition_two_parts(request):
    t = time.perf_counter()
    g = Grid2D.square(0.0, 1.0, 128)
    P = optimize_partition(2, math.inf, g, seed=0)
    target = 5 * math.pi**2
    lam = P.eigenvalues
    rel = abs(P.objective / target - 1)
    spread = (lam.max() - lam.min()) / lam.max()
    verdict(request, 6, rel <= 0.03 and spread <= 0.05, time.perf_counter() - t, 180,
            f"objective {P.objective:.3f} (rel {rel:.4f}), spread {spread:.4f}")


def test_07_partition_three_parts_disk(request):
    t = time.perf_counter()
    g = Grid2D.square(-1.0, 1.0, 128)
    P = optimize_partition(3, math.inf, g, seed=0, domain=disk_mask(g))
    U = partition_to_config(P)
    ns = nodal.extract_nodal_set(U)
    inside = [c for c in ns.singular_candidates if math.hypot(*c) <= 1 - 10 * g.h]
    reps = nodal.classify_points(U, inside, ns) if inside else []
    sing = [r for r in reps if r.singular and r.branch_count >= 3]
    dev = math.degrees(nodal.equal_angle_check(sing[0])) if len(sing) == 1 else float("nan")
    ok = len(sing) == 1 and dev <= 5
    loc = np.round(sing[0].location, 3).tolist() if sing else None
    verdict(request, 7, ok, time.perf_counter() - t, 300,
            f"{len(sing)} interior singular point(s) at {loc}, angle dev {dev:.2f} deg")


def test_08_scaling_identities(request):
    t = time.perf_counter()
    g = Grid2D.square(-2.0, 2.0, 513)
    # frame nodes land on source nodes: x0 on the grid, t = 1/2
    aligned = max(max(blowup.scaling_identity_check(make_prototype(m, g, center=c), x0, 0.5, (0.0, 0.0), 1.0))
                  for m, c, x0 in [(2, (0.0, 0.0), (0.0, 0.0)), (3, (0.1, -0.2), (0.0, 0.0)),
                                   (3, (0.0, 0.0), (0.25, -0.125))])
    V = make_prototype(3, Grid2D.square(-1.0, 1.0, 257))
    generic = max(blowup.scaling_identity_check(V, (0.03, -0.02), 0.3, (0.21, 0.37), 0.6))
    verdict(request, 8, aligned <= 1e-6 and generic <= 1e-2, time.perf_counter() - t, 5,
            f"aligned residual {aligned:.1e}, generic residual {generic:.1e}")


def test_09_lambda1_closed_forms(request):
    t = time.perf_counter()
    g = Grid2D.square(0.0, 1.0, 128)
    sq, _ = lambda1(np.ones(g.shape, bool), g)
    gh = Grid2D.square(0.0, 1.0, 129)
    X, _ = gh.mesh()
    half, _ = lambda1(X < 0.5 - 1e-9, gh)
    gd = Grid2D.square(-1.05, 1.05, 256)
    disk, _ = lambda1(disk_mask(gd), gd)
    errs = (abs(sq / (2 * math.pi**2) - 1), abs(half / (5 * math.pi**2) - 1), abs(disk / jn_zeros(0, 1)[0] ** 2 - 1))
    ok = errs[0] <= 5e-3 and errs[1] <= 5e-3 and errs[2] <= 1e-2
    verdict(request, 9, ok, time.perf_counter() - t, 30,
            "rel errors square {:.1e}, half-square {:.1e}, disk {:.1e}".format(*errs))


def test_10_flatness(request):
    t = time.perf_counter()
    g = Grid2D.square(-1.0, 1.0, 256)
    h = g.h
    radii = np.geomspace(8 * h, 0.3, 8)
    U2 = make_prototype(2, g)
    n2 = nodal.extract_nodal_set(U2)
    flat = max(f.delta * f.radius / (2 * h) for p in [(0.0, 0.0), (0.0, 0.4), (0.0, -0.5)]
               for f in nodal.flatness_scan(U2, p, radii, n2))
    U3 = make_prototype(3, g)
    rough = min(f.delta for f in nodal.flatness_scan(U3, (0.0, 0.0), radii))
    verdict(request, 10, flat <= 1 and rough >= 0.2, time.perf_counter() - t, 10,
            f"m=2 max delta/(2h/r) {flat:.3f}, m=3 min delta {rough:.3f}")
