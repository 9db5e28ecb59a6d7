"""Exit criteria for the package, one test per criterion.

Each test prints a single ``[PASS]``/``[FAIL]`` line; the lines are also
collected and repeated in the terminal summary.
"""

import csv
import io
import struct
import time

import numpy as np
import pytest

from mnflow.cli import main as cli_main
from mnflow.hos import mean_window_kurtosis
from mnflow.imagecore import FlowField, Image, load_pgm, motion_compensate, save_pgm
from mnflow.mnsolver import SolverConfig, mixed_norm_gradient, solve_update
from mnflow.noiselab import NoiseSpec, degrade_to_snr, sample_noise, snr_between
from mnflow.pelrec import PelRecConfig, estimate_flow, read_flo, write_flo
from mnflow.synthetic import shifted_pair, texture
from oracles import central_difference, grid_polish_min, least_squares, random_system

RESULTS = []


def report(number, title, ok, detail):
    line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}"
    RESULTS.append(line)
    print(line)
    assert ok, line


@pytest.fixture(scope="module")
def warm():
    # compile the scan kernels outside the timed regions
    cur, prev = shifted_pair(8, (1, 0), seed=0)
    for mode in ("lms", "adaptive"):
        estimate_flow(cur, prev, PelRecConfig(solver=SolverConfig(mode=mode)))


@pytest.fixture(scope="module")
def textured_pair_files(tmp_path_factory):
    d = tmp_path_factory.mktemp("pair")
    cur, prev = shifted_pair(64, (1, 0), seed=0)
    save_pgm(cur, d / "k.pgm")
    save_pgm(prev, d / "km1.pgm")
    return d / "k.pgm", d / "km1.pgm"


def _bench(files, out_dir, noises, snrs, seed=0):
    buf = io.StringIO()
    code = cli_main(["bench", "--frames", str(files[0]), str(files[1]), "--noise", noises, "--snr", snrs,
                     "--modes", "lms,lmf,adaptive", "--seed", str(seed), "--out", str(out_dir)], out=buf)
    assert code == 0
    text = buf.getvalue()
    rows = list(csv.DictReader(l for l in text.splitlines() if not l.startswith("#")))
    return text, rows


def test_01_gradient_fidelity():
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        obs = random_system(rng)
        u = rng.uniform(-1, 1, 2)
        for gamma in (0.0, 0.3, 0.7, 1.0):
            fd = central_difference(obs.z, obs.G, u, gamma)
            an = mixed_norm_gradient(obs, u, gamma)
            worst = max(worst, np.linalg.norm(an - fd) / np.linalg.norm(fd))
    dt = time.perf_counter() - t0
    report(1, "gradient fidelity", worst < 1e-5 and dt < 1.0, f"max rel err {worst:.2e} (<1e-5), {dt:.2f}s (<1s)")


def test_02_lms_oracle():
    rng = np.random.default_rng(2)
    cfg = SolverConfig(mode="lms", max_iters=500, tol=1e-12)
    t0 = time.perf_counter()
    worst, most = 0.0, 0
    for _ in range(100):
        obs = random_system(rng, cond_max=4.0)
        res = solve_update(obs, cfg)
        worst = max(worst, np.linalg.norm(res.u - least_squares(obs.z, obs.G)))
        most = max(most, res.iters)
    dt = time.perf_counter() - t0
    report(2, "LMS oracle equivalence", worst < 1e-6 and most <= 500 and dt < 5.0,
           f"max |u - pinv(G) z| {worst:.2e} (<1e-6), max iters {most} (<=500), {dt:.2f}s (<5s)")


def test_03_lmf_oracle():
    rng = np.random.default_rng(3)
    cfg = SolverConfig(mode="lmf", max_iters=20000, tol=1e-13)
    t0 = time.perf_counter()
    worst = -np.inf
    for _ in range(20):
        obs = random_system(rng, n=5, cond_max=4.0)
        _, jmin = grid_polish_min(obs.z, obs.G, 1.0)
        worst = max(worst, solve_update(obs, cfg).final_cost - jmin)
    dt = time.perf_counter() - t0
    report(3, "LMF oracle equivalence", worst < 1e-8 and dt < 30.0,
           f"max J - J_grid {worst:.2e} (<1e-8), {dt:.2f}s (<30s)")


def test_04_kurtosis_calibration():
    t0 = time.perf_counter()
    got = {}
    for family in ("gaussian", "uniform", "laplacian"):
        x = sample_noise(NoiseSpec(family, 1.0, seed=4), 100_000)
        got[family] = mean_window_kurtosis(x, 1000)
    dt = time.perf_counter() - t0
    ok = (abs(got["gaussian"]) <= 0.1 and abs(got["uniform"] + 1.2) <= 0.1
          and abs(got["laplacian"] - 3.0) <= 0.3 and dt < 5.0)
    report(4, "kurtosis calibration", ok,
           f"gaussian {got['gaussian']:+.3f} (0+-0.1), uniform {got['uniform']:+.3f} (-1.2+-0.1), "
           f"laplacian {got['laplacian']:+.3f} (3+-0.3), {dt:.2f}s (<5s)")


def test_05_gamma_polarity(textured_pair_files, tmp_path, warm):
    _, rows = _bench(textured_pair_files, tmp_path / "b", "laplacian,uniform", "30,20")
    gam = {(r["noise"], r["snr_target"]): float(r["mean_gamma"]) for r in rows if r["mode"] == "adaptive"}
    ok = all(gam[("laplacian", s)] < 0.5 and gam[("uniform", s)] > 0.5 for s in ("30", "20"))
    detail = ", ".join(f"{n}@{s}dB {g:.3f}" for (n, s), g in sorted(gam.items()))
    report(5, "gamma polarity", ok, detail + " (laplacian <0.5, uniform >0.5)")


def test_06_snr_targeting():
    errs = []
    for size in (64, 128):
        img = Image(texture(size, size, seed=size))
        for family in ("gaussian", "laplacian", "uniform"):
            for target in (20.0, 30.0):
                noisy, _ = degrade_to_snr(img, family, target, seed=6)
                errs.append(abs(snr_between(img, noisy).snr_db - target))
    report(6, "SNR targeting", max(errs) <= 0.2, f"max |achieved - target| {max(errs):.2e} dB (<=0.2)")


def test_07_end_to_end_accuracy(warm):
    cur, prev = shifted_pair(64, (1, 0), seed=0)
    t0 = time.perf_counter()
    flow, _ = estimate_flow(cur, prev)
    dt = time.perf_counter() - t0
    inner = flow.vectors[2:-2, 2:-2]
    epe = float(np.mean(np.hypot(inner[..., 0] - 1.0, inner[..., 1])))
    psnr = snr_between(cur, motion_compensate(prev, flow)).psnr_db
    base = snr_between(cur, prev).psnr_db
    report(7, "end-to-end flow accuracy", epe < 0.3 and psnr >= base + 5 and dt < 10.0,
           f"interior EPE {epe:.4f}px (<0.3), PSNR {psnr:.2f} vs zero-flow {base:.2f} dB (>= +5), {dt:.2f}s (<10s)")


def test_08_adaptive_robustness(warm):
    cur, prev = shifted_pair(64, (1, 0), seed=0)
    t0 = time.perf_counter()
    parts, ok = [], True
    for i, family in enumerate(("gaussian", "laplacian", "uniform")):
        noisy, _ = degrade_to_snr(cur, family, 20.0, seed=80 + i)
        psnr = {}
        for mode in ("lms", "lmf", "adaptive"):
            flow, _ = estimate_flow(noisy, prev, PelRecConfig(solver=SolverConfig(mode=mode)))
            psnr[mode] = snr_between(cur, motion_compensate(prev, flow)).psnr_db
        margin = psnr["adaptive"] - max(psnr["lms"], psnr["lmf"])
        ok &= margin >= -0.5
        parts.append(f"{family} {psnr['adaptive']:.2f} vs best {max(psnr['lms'], psnr['lmf']):.2f} ({margin:+.2f})")
    dt = time.perf_counter() - t0
    report(8, "adaptive robustness", ok and dt < 60.0, "; ".join(parts) + f" (>= -0.5 dB), {dt:.2f}s (<60s)")


def test_09_format_round_trips(tmp_path):
    rng = np.random.default_rng(9)
    pgm_ok = flo_ok = True
    for i in range(100):
        h, w = (int(v) for v in rng.integers(1, 33, size=2))
        raw = b"P5\n%d %d\n255\n" % (w, h) + rng.integers(0, 256, h * w, dtype=np.uint8).tobytes()
        (tmp_path / "in.pgm").write_bytes(raw)
        img = load_pgm(tmp_path / "in.pgm")
        save_pgm(img, tmp_path / "out.pgm")
        pgm_ok &= (tmp_path / "out.pgm").read_bytes() == raw and load_pgm(tmp_path / "out.pgm") == img
        vec = rng.normal(scale=3.0, size=(h, w, 2)).astype(np.float32).astype(np.float64)
        write_flo(FlowField(vec), tmp_path / "f.flo")
        back = read_flo(tmp_path / "f.flo")
        flo_ok &= back.vectors.tobytes() == vec.tobytes()
    golden = struct.pack("<f", 202021.25) + struct.pack("<ii", 2, 1) + struct.pack("<4f", 1.0, 2.0, 3.0, 4.0)
    write_flo(FlowField(np.array([[[1.0, 2.0], [3.0, 4.0]]])), tmp_path / "g.flo")
    golden_ok = (tmp_path / "g.flo").read_bytes() == golden
    report(9, "format round-trips", pgm_ok and flo_ok and golden_ok,
           f"PGM x100 {'ok' if pgm_ok else 'MISMATCH'}, flow x100 {'ok' if flo_ok else 'MISMATCH'}, "
           f"golden layout {'ok' if golden_ok else 'MISMATCH'}")


def test_10_determinism(textured_pair_files, tmp_path, warm):
    def strip(text):
        out = []
        for line in text.splitlines():
            if line.startswith("#"):
                out.append(line)
            else:
                out.append(",".join(line.split(",")[:-1]))
        return out

    a, _ = _bench(textured_pair_files, tmp_path / "r1", "gaussian,laplacian,uniform", "30,20", seed=10)
    b, _ = _bench(textured_pair_files, tmp_path / "r2", "gaussian,laplacian,uniform", "30,20", seed=10)
    same = strip(a) == strip(b)
    report(10, "determinism", same, f"two bench runs ({len(a.splitlines())} lines) identical excluding runtime_ms")
