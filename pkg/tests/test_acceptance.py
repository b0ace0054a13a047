"""Acceptance criteria, one PASS/FAIL line each.

Lines are printed as they are decided and repeated in the pytest terminal
summary.  Criteria known not to hold as literally stated are reported as
FAIL and marked ``xfail(strict=True)``, so they turn the suite red the day
they start passing.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from surfao import io
from surfao.functional import AnalysisConfig, ao_fields, fom, fom_from_fields
from surfao.preprocess import gradient_augment
from surfao.projection import DirectionConfig, batch_ao, generate_directions
from surfao.robust import adjusted_fence, medcouple, univariate_ao, univariate_ao_many
from surfao.trilinear import fit_trilinear, residuals

from . import oracles
from .conftest import ACCEPTANCE
from .synthetic import BLOB, ISOLATED, SHAPE, SHIFT, VIDEO_BLOB_FRAMES, corrupt, low_rank, taxonomy, video


def report(number, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
    print(line)
    ACCEPTANCE.append(line)
    return ok


def skip(number, reason):
    ACCEPTANCE.append(f"SKIP criterion {number}: {reason}")
    pytest.skip(reason)


# 1: medcouple against the naive kernel median


def medcouple_samples():
    rng = np.random.default_rng(2024)
    out = []
    for i in range(200):
        n = int(rng.integers(4, 61))
        if i < 60:
            # small integer support makes ties at the median routine
            x = rng.integers(-3, 4, n).astype(float)
        else:
            x = rng.standard_normal(n) * rng.uniform(0.1, 10) + rng.exponential(1.0, n) * (i % 3)
        out.append(x)
    return out


def ties_at_median(x):
    return np.count_nonzero(x == np.median(x)) >= 2


def test_criterion_1_medcouple_oracle():
    samples = medcouple_samples()
    t0 = time.perf_counter()
    got = [medcouple(x) for x in samples]
    fast = [medcouple(x, method="fast") for x in samples]
    elapsed = time.perf_counter() - t0
    want = [oracles.medcouple(x) for x in samples]
    mismatches = sum(g != w or f != w for g, f, w in zip(got, fast, want))
    tied = sum(ties_at_median(x) for x in samples)
    ok = mismatches == 0 and tied >= 30 and elapsed < 5
    assert report(1, ok, f"{mismatches} mismatches in 200 samples ({tied} with median ties), {elapsed:.2f} s")


# 2: univariate AO contract


def test_criterion_2_univariate_ao():
    rng = np.random.default_rng(7)
    bad = []
    for i in range(100):
        n = int(rng.integers(4, 80))
        x = rng.lognormal(0, rng.uniform(0.1, 1.5), n) * (1 if i % 2 else -1)
        f = adjusted_fence(x)
        if univariate_ao(f.med, x) != 0 or univariate_ao(f.w1, x) != 1 or univariate_ao(f.w2, x) != 1:
            bad.append(i)
            continue
        span = x.max() - x.min()
        grid = np.linspace(x.min() - span, x.max() + span, 50)
        ao = univariate_ao_many(grid, x)
        below, above = grid < f.med, grid > f.med
        if np.any(np.diff(ao[below]) > 0) or np.any(np.diff(ao[above]) < 0):
            bad.append(i)
    assert report(2, not bad, f"{len(bad)} of 100 samples violate AO(med)=0, AO(w)=1 or monotonicity")


# 3: multivariate AO against a dense angular grid


@pytest.fixture(scope="module")
def grid_comparison():
    grid = oracles.grid_directions(3600)
    rel, mono = [], 0
    for s in range(50):
        rng = np.random.default_rng(300 + s)
        y = rng.standard_normal((30, 2))
        q = rng.normal(0, 2, (5, 2))
        cfg = DirectionConfig(500, seed=s)
        got = batch_ao(q, y, cfg)
        ref = batch_ao(q, y, directions=grid)
        rel.append(np.abs(got - ref) / ref)
        dirs = generate_directions(y, cfg)
        sub = batch_ao(q, y, directions=dirs)
        sup = batch_ao(q, y, directions=np.vstack([dirs, grid]))
        mono += int(np.sum(sub > sup * (1 + 1e-12)))
    return np.concatenate(rel), mono


@pytest.mark.xfail(
    strict=True,
    reason="hyperplane normals hit exact projection ties and miss narrow maximising windows; "
    "about 8% of queries deviate from the 3600-direction grid by more than 5%",
)
def test_criterion_3_within_5_percent(grid_comparison):
    rel, mono = grid_comparison
    miss = int(np.sum(rel > 0.05))
    ok = miss == 0 and mono == 0
    report(
        3,
        ok,
        f"{miss} of {rel.size} queries beyond 5% of the grid (max {rel.max():.2f}); "
        f"monotone superset violations {mono}",
    )
    assert ok


def test_criterion_3_monotone_superset(grid_comparison):
    _, mono = grid_comparison
    assert mono == 0


# 4: affine invariance


def test_criterion_4_affine_invariance():
    rng = np.random.default_rng(44)
    worst = 0.0
    for s in range(50):
        u, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        v, _ = np.linalg.qr(rng.standard_normal((2, 2)))
        A = u @ np.diag([1.0, 10 ** rng.uniform(-3, 0)]) @ v * 10 ** rng.uniform(-2, 2)
        assert np.linalg.cond(A) <= 1e3 + 1e-6
        b = rng.normal(0, 10, 2)
        y = rng.standard_normal((30, 2))
        q = rng.normal(0, 2, (5, 2))
        cfg = DirectionConfig(500, seed=s)
        before = batch_ao(q, y, cfg)
        after = batch_ao(q @ A.T + b, y @ A.T + b, cfg)
        worst = max(worst, float(np.max(np.abs(after - before) / before)))
    assert report(4, worst < 1e-8, f"max relative change {worst:.1e} over 50 maps")


# 5: taxonomy of outliers on the FOM


@pytest.fixture(scope="module")
def taxonomy_run():
    t0 = time.perf_counter()
    result, _ = fom(taxonomy())
    return result, time.perf_counter() - t0


def taxonomy_clauses(result, elapsed):
    regular = np.arange(SHIFT)
    flagged = set(np.flatnonzero(result.flagged))
    again, _ = fom(taxonomy())
    return {
        "planted flagged": {SHIFT, ISOLATED, SHAPE} <= flagged,
        "shift fAO largest": result.fao[SHIFT] > max(result.fao[ISOLATED], result.fao[SHAPE]),
        "shift vAO < P90": result.vao[SHIFT] < np.percentile(result.vao, 90),
        "isolated fAO < shift fAO": result.fao[ISOLATED] < result.fao[SHIFT],
        "isolated vAO > regular max": result.vao[ISOLATED] > result.vao[regular].max(),
        "false positives <= 2": len(flagged - {SHIFT, ISOLATED, SHAPE}) <= 2,
        "deterministic": np.array_equal(again.cfo, result.cfo),
        "runtime < 60 s": elapsed < 60,
    }


@pytest.mark.xfail(
    strict=True,
    reason="the shift outlier's vAO sits near the 90th percentile and lands just above it; "
    "its AO profile is set by the whisker position, which moves with the medcouple",
)
def test_criterion_5_taxonomy(taxonomy_run):
    result, elapsed = taxonomy_run
    clauses = taxonomy_clauses(result, elapsed)
    failed = [k for k, v in clauses.items() if not v]
    detail = (
        f"flagged {sorted(int(i) for i in np.flatnonzero(result.flagged))}, "
        f"shift vAO {result.vao[SHIFT]:.3f} vs P90 {np.percentile(result.vao, 90):.3f}, "
        f"{elapsed:.1f} s; failed clauses: {', '.join(failed) or 'none'}"
    )
    report(5, not failed, detail)
    assert not failed


def test_criterion_5_other_clauses(taxonomy_run):
    clauses = taxonomy_clauses(*taxonomy_run)
    clauses.pop("shift vAO < P90")
    assert all(clauses.values()), clauses


# 6: video localisation


def test_criterion_6_video():
    values, boxes = video()
    t0 = time.perf_counter()
    fields = ao_fields(values)
    result = fom_from_fields(fields)
    elapsed = time.perf_counter() - t0
    flagged = set(np.flatnonzero(result.flagged).tolist())
    blob = set(VIDEO_BLOB_FRAMES)
    missing = set(range(41, 60)) - flagged
    extra = flagged - blob
    missed_peaks = []
    for t in range(45, 56):
        j, k = np.unravel_index(np.argmax(fields[t]), fields[t].shape)
        j0, k0 = boxes[t]
        if not (j0 - 2 <= j <= j0 + BLOB + 1 and k0 - 2 <= k <= k0 + BLOB + 1):
            missed_peaks.append(t)
    ok = not missing and len(extra) <= 3 and not missed_peaks and elapsed < 120
    detail = (
        f"missing {sorted(missing)}, false positives {sorted(extra)}, "
        f"heatmap peaks outside box {missed_peaks}, {elapsed:.0f} s"
    )
    assert report(6, ok, detail)


# 7: gradient stencils


def test_criterion_7_gradient_exact():
    rng = np.random.default_rng(77)
    jj, kk = np.meshgrid(np.arange(13.0), np.arange(17.0), indexing="ij")
    worst = 0.0
    for _ in range(20):
        a, b, c, d, e = rng.uniform(-5, 5, 5)
        y = a + b * jj + c * kk + d * jj**2 + e * kk**2
        g = gradient_augment(y[None])[0]
        worst = max(worst, np.abs(g[..., 1] - (b + 2 * d * jj)).max(), np.abs(g[..., 2] - (c + 2 * e * kk)).max())
    assert report(7, worst <= 1e-10, f"max absolute derivative error {worst:.1e}")


# 8 and 9: trimmed trilinear fit


@pytest.fixture(scope="module")
def trilinear_runs():
    x, _ = low_rank(n=30, J=15, K=25, F=3)
    exact = fit_trilinear(x, 3, h=1.0)
    y, bad = corrupt(x, count=6, amplitude=20.0)
    trimmed = [fit_trilinear(y, 3, h=0.75, random_state=s) for s in range(5)]
    return x, exact, y, bad, trimmed


def test_criterion_8_trilinear(trilinear_runs):
    x, exact, y, bad, trimmed = trilinear_runs
    rel = np.linalg.norm(residuals(x, exact)) / np.linalg.norm(x)
    clean = np.setdiff1d(np.arange(x.shape[0]), bad)
    good = 0
    for m in trimmed:
        rms = np.sqrt(np.mean(residuals(y, m)[clean] ** 2, axis=(1, 2)))
        good += int(not set(bad) & set(m.subset.tolist()) and rms.max() < 1e-6)
    ok = rel < 1e-8 and good >= 4
    assert report(8, ok, f"exact fit relative residual {rel:.1e}; {good} of 5 seeded trimmed fits clean")


def test_criterion_9_monotone(trilinear_runs):
    _, exact, _, _, trimmed = trilinear_runs
    worst = 0.0
    for m in [exact, *trimmed]:
        t = np.asarray(m.loss_trace)
        if t.size > 1:
            worst = max(worst, float(np.max((t[1:] - t[:-1]) / np.maximum(t[:-1], np.finfo(float).tiny))))
    assert report(9, worst <= 1e-12, f"largest relative loss increase {max(worst, 0.0):.1e}")


# 10: null behaviour of the cutoff


def test_criterion_10_null_flags():
    flags = [int(fom(np.random.default_rng(1000 + s).standard_normal((50, 15, 15)))[0].flagged.sum()) for s in range(20)]
    mean = float(np.mean(flags))
    assert report(10, mean <= 1.5, f"mean {mean:.2f} flags over 20 pure-noise datasets")


# 11: determinism and formats


def test_criterion_11_determinism_and_formats(tmp_path):
    import numba

    x = taxonomy()
    cfg = AnalysisConfig()
    for name, jobs in (("one", 1), ("all", numba.config.NUMBA_NUM_THREADS)):
        io.write_result_table(fom(x, cfg, n_jobs=jobs)[0], tmp_path / f"{name}.csv")
    same_table = (tmp_path / "one.csv").read_bytes() == (tmp_path / "all.csv").read_bytes()

    holes = x.copy()
    holes[3, 4, 5] = np.nan
    io.write_tensor(holes, tmp_path / "t.fdt")
    back = io.read_tensor(tmp_path / "t.fdt").values[..., 0]
    same_tensor = back.tobytes() == holes.tobytes()

    pgm = b"P5\n# fixture\n3 2\n255\n" + bytes([0, 1, 2, 253, 254, 255])
    ppm = b"P6 2 1 255\n" + bytes([10, 20, 30, 40, 50, 60])
    (tmp_path / "a.pgm").write_bytes(pgm)
    (tmp_path / "a.ppm").write_bytes(ppm)
    g = io.read_image(tmp_path / "a.pgm")
    c = io.read_image(tmp_path / "a.ppm")
    io.write_image(g[..., 0], tmp_path / "b.pgm")
    io.write_image(c, tmp_path / "b.ppm")
    images = (
        g[..., 0].astype(np.uint8).tobytes() == pgm[-6:]
        and c.astype(np.uint8).tobytes() == ppm[-6:]
        and (tmp_path / "b.pgm").read_bytes() == b"P5\n3 2\n255\n" + pgm[-6:]
        and (tmp_path / "b.ppm").read_bytes() == b"P6\n2 1\n255\n" + ppm[-6:]
    )
    ok = same_table and same_tensor and images
    detail = f"threads byte-identical {same_table}, FDT1 bit-exact {same_tensor}, netpbm fixtures {images}"
    assert report(11, ok, detail)


# 12: optional external data


def load_external(path):
    p = Path(path)
    if p.is_dir():
        return io.read_frame_dir(p).values
    return io.read_tensor(p).values


def near(flagged, expected):
    return len(set(flagged) ^ set(expected)) <= 1


def test_criterion_12_external():
    dorrit, beach = os.environ.get("SURFAO_DORRIT"), os.environ.get("SURFAO_BEACH")
    if not dorrit and not beach:
        skip(12, "set SURFAO_DORRIT and/or SURFAO_BEACH to run the external-data checks")
    parts, ok = [], True
    if dorrit:
        x = load_external(dorrit)
        raw = (np.flatnonzero(fom(x)[0].flagged) + 1).tolist()
        model = fit_trilinear(x, 4, h=0.75)
        res = (np.flatnonzero(fom(residuals(x, model))[0].flagged) + 1).tolist()
        ok &= near(raw, [3, 5]) and near(res, [2, 3, 5])
        parts.append(f"EEM raw flags {raw}, residual flags {res}")
    if beach:
        x = load_external(beach)
        flagged = (np.flatnonzero(fom(x)[0].flagged) + 1).tolist()
        early = [i for i in flagged if i <= 480]
        found = set(range(484, 488)) & set(flagged)
        ok &= len(early) <= 1 and len(found) >= 3
        parts.append(f"video flags in 1..480 {early}, 484-487 found {sorted(found)}")
    assert report(12, ok, "; ".join(parts))
