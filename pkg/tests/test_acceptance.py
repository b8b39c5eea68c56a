"""One test per acceptance criterion; each prints a single PASS/FAIL line."""

import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from hyersulam.cli import parse_config
from hyersulam.control import bound_constant, power_bound_coefficient, power_control
from hyersulam.fixed_point import ContractionOperator, MapPoint, dm_iterate, verify_dm_conclusions
from hyersulam.maps import (
    Bump,
    ConstantShift,
    HomomorphismSpec,
    Homogeneous,
    additive_defect,
    build_homomorphism,
    build_perturbed,
    certify,
    mu_palette,
    random_homomorphism_spec,
    star_defect,
    triple_defect,
)
from hyersulam.module import ModuleDescriptor, check_axioms, norm_of, probe_set, random_unit_element
from hyersulam.stabilizer import approximant, defect_decay, stabilize, verify_error_bound

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
D = ModuleDescriptor(2, 2)
PROBES = probe_set(D, 200, seed=2024)


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, detail
    return report


def shift_setup(norm=0.3, seed=1):
    phi = power_control(0.15, 0.0, "expand")
    c = norm * random_unit_element(D, seed, 0xC0)
    return build_perturbed(HomomorphismSpec(), ConstantShift(c), phi, D), phi


def bump_setup(seed=1):
    phi = power_control(0.1, 0.5, "expand")
    f = build_perturbed(random_homomorphism_spec(D, 4), Bump(radius=1.0, seed=seed), phi, D)
    return f, phi


def homogeneous_setup(seed=1):
    phi = power_control(0.1, 4.0, "contract")
    f = build_perturbed(random_homomorphism_spec(D, 5), Homogeneous(amplitude=0.1 / 9, seed=seed), phi, D)
    return f, phi


def run_pipeline(f, phi, N):
    cert = certify(f, phi, n_iter=N, seed=0)
    res = stabilize(f, phi, N, PROBES, certificate=cert)
    return cert, res


def test_criterion_1_axiom_suite(verdict):
    t0 = time.perf_counter()
    rep = check_axioms(ModuleDescriptor(3, 2), 1000, seed=1, tol=1e-10)
    dt = time.perf_counter() - t0
    worst = max(rep.violations.values())
    verdict(1, rep.passed and len(rep.violations) == 5 and dt < 10,
            f"M3(C)^2, 1000 samples: worst relative violation {worst:.2e} <= 1e-10, {dt:.2f}s < 10s")


def test_criterion_2_homomorphism_ground_truth(verdict):
    desc = ModuleDescriptor(3, 3)
    P = probe_set(desc, 200, seed=7)
    i = np.arange(200)
    x, y, z = P, P[(i + 1) % 200], P[(i + 2) % 200]
    mus = mu_palette(200, 7)
    tri_scale = np.maximum(1.0, norm_of(x) * norm_of(y) * norm_of(z))
    add_scale = np.maximum(1.0, norm_of(x) + norm_of(y))
    worst = 0.0
    for seed in range(20):
        H = build_homomorphism(random_homomorphism_spec(desc, seed), desc)
        worst = max(worst,
                    float(np.max(additive_defect(H, x, y, mus) / add_scale)),
                    float(np.max(triple_defect(H, x, y, z) / tri_scale)),
                    float(np.max(star_defect(H, x, y, z) / tri_scale)))
    verdict(2, worst <= 1e-12, f"20 catalog specs x 200 triples: worst scaled defect {worst:.2e} <= 1e-12")


def test_criterion_3_tight_expanding_bound(verdict):
    t0 = time.perf_counter()
    f, phi = shift_setup()
    res = stabilize(f, phi, 30, PROBES)
    bound = verify_error_bound(res, phi)
    dt = time.perf_counter() - t0
    sup = res.records[-1].sup_distance_to_f
    coeff = power_bound_coefficient(0.15, 0.0, "expand")
    inc = [r.sup_cauchy_increment for r in res.records]
    ratios = [inc[n + 1] / inc[n] for n in range(1, 29)]
    worst_ratio = max(abs(r - 0.5) for r in ratios)
    ok = (0.3 * (1 - 1e-9) <= sup <= 0.3 * (1 + 1e-9) and coeff == pytest.approx(0.3, rel=1e-15)
          and bound.passed and worst_ratio <= 1e-6 and dt < 5)
    verdict(3, ok, f"sup||f-H_30|| = {sup:.12f} vs bound {coeff:.12f}; "
                   f"max |ratio-0.5| = {worst_ratio:.1e}; {dt:.2f}s < 5s")


def test_criterion_4_expanding_bound_p_half(verdict):
    f, phi = bump_setup()
    cert, res = run_pipeline(f, phi, 30)
    L = phi.lipschitz
    nx = np.asarray(norm_of(PROBES), float)
    dist = np.asarray(norm_of(res.f_values - res.final_values), float)
    coeff = 2 * 0.1 / (2 - 2 ** 0.5)
    bound_ok = bool(np.all(dist <= coeff * nx ** 0.5 * (1 + 1e-9)))
    add_ok = bool(np.all(res.additive[30] <= L ** 30 * res.additive_control))
    worst = float(np.max(dist / np.where(nx > 0, coeff * nx ** 0.5, 1)))
    verdict(4, cert.additive_passed and bound_ok and add_ok,
            f"BUMP p=0.5: max ||f-H_30||/(2 theta/(2-sqrt2) ||x||^0.5) = {worst:.4f} <= 1; "
            f"H_30 additive defect within L^30 phi at all 200 pairs")


def test_criterion_5_contracting_bound_p4(verdict):
    f, phi = homogeneous_setup()
    cert, res = run_pipeline(f, phi, 20)
    nx4 = np.asarray(norm_of(PROBES), float) ** 4
    dist = np.asarray(norm_of(res.f_values - res.final_values), float)
    closed = 0.1 / 9 * nx4
    live = nx4 > 0
    rel = float(np.max(np.abs(dist[live] - closed[live]) / closed[live]))
    coeff = power_bound_coefficient(0.1, 4.0, "contract")
    below = bool(np.all(dist <= coeff * nx4 * (1 + 1e-9)))
    bound = verify_error_bound(res, phi)
    margin = bound.margin_factor
    ok = (rel <= 1e-9 and below and coeff == pytest.approx(0.025, rel=1e-15)
          and dist[~live].max() == 0 and margin == pytest.approx(2.25, rel=1e-6))
    verdict(5, ok, f"||f-H_20|| = (theta/9)||x||^4 to {rel:.1e} relative; "
                   f"coefficient 0.0111 vs bound {coeff}; margin {margin:.6f}x")


def test_criterion_6_defect_decay_envelopes(verdict):
    lines, ok = [], True
    for name, (f, phi), N in [("shift", shift_setup(), 30), ("bump", bump_setup(), 30),
                              ("homogeneous", homogeneous_setup(), 20)]:
        cert, res = run_pipeline(f, phi, N)
        dec = defect_decay(res, phi)
        feasible = sum(1 for r in res.records if not math.isnan(r.sup_triple_defect))
        case = (cert.additive_passed and dec.additive_ok and dec.triple_ok and dec.rate_ok
                and dec.gated_checks["additive"] > 0 and dec.gated_checks["triple"] > 0)
        ok &= case
        lines.append(f"{name}: rate {dec.rate:.4f} <= L+0.05 = {phi.lipschitz + 0.05:.4f}, "
                     f"{dec.gated_checks['triple']} gated triple checks over {feasible} feasible n")
    verdict(6, ok, "; ".join(lines))


def _cli(args):
    return subprocess.run([sys.executable, "-m", "hyersulam", *args], capture_output=True, text=True)


def test_criterion_7_star_variant(verdict, tmp_path):
    lines, ok = [], True
    for name in ("bump_expand", "homogeneous_contract"):
        out = tmp_path / name
        r = _cli(["stabilize", "--config", str(CONFIGS / f"{name}.yaml"), "--out-dir", str(out), "--star"])
        rep = json.loads((out / "report.json").read_text())["report"]
        phi = power_control(rep["control"]["theta"], rep["control"]["p"], rep["control"]["direction"])
        same_constant = rep["bound_constant"] == bound_constant(phi)
        case = (r.returncode == 0 and rep["checks"]["star_decay"] and rep["checks"]["error_bound"]
                and rep["decay"]["gated_checks"]["star"] > 0 and same_constant)
        ok &= case
        lines.append(f"{name}: star worst ratio {rep['decay']['worst_ratios']['star']:.3f} <= 1, "
                     f"bound constant {rep['bound_constant']:.6g}")
    verdict(7, ok, "; ".join(lines))


def test_criterion_8_fixed_point_certificates(verdict):
    f, phi = shift_setup(0.3, seed=1)
    g, _ = shift_setup(0.17, seed=9)
    J = ContractionOperator.for_control(phi)
    a = dm_iterate(MapPoint(f), J, phi, PROBES, max_iter=100, tol=1e-10)
    b = dm_iterate(MapPoint(g), J, phi, PROBES, max_iter=100, tol=1e-10)
    rep = verify_dm_conclusions(a, b)
    ds = a.distances
    max_ratio = max(ds[i + 1] / ds[i] for i in range(len(ds) - 1))
    ok = (a.first_step <= 0.5 * (1 + 1e-9)
          and a.measured <= a.first_step / (1 - phi.lipschitz) * (1 + 1e-9)
          and max_ratio <= 0.55 and rep.uniqueness_gap <= 1e-9 and rep.passed)
    verdict(8, ok, f"d(f,Jf) = {a.first_step:.12f} <= 1/2; d(f,y*) = {a.measured:.10f} <= "
                   f"{a.certificate_bound:.10f}; max step ratio {max_ratio:.6f}; "
                   f"two starts agree to {rep.uniqueness_gap:.1e}")


def test_criterion_9_bit_for_bit_consistency(verdict):
    checked = 0
    ok = True
    for f, phi in (shift_setup(), bump_setup(), homogeneous_setup()):
        J = ContractionOperator.for_control(phi)
        g = MapPoint(f)
        for n in range(21):
            ok &= np.array_equal(g(PROBES), approximant(f, n, phi.direction, PROBES))
            checked += 1
            g = J(g)
    verdict(9, ok, f"J^n f == approximant(f, n) bitwise at 200 probes for n <= 20 "
                   f"({checked} comparisons, both directions)")


def test_criterion_10_cli_determinism_and_exit_codes(verdict, tmp_path):
    cfg = CONFIGS / "tight_shift.yaml"
    runs = []
    for k in range(2):
        out = tmp_path / f"run{k}"
        r = _cli(["full", "--config", str(cfg), "--out-dir", str(out)])
        doc = json.loads((out / "report.json").read_text())
        runs.append((r.returncode, doc["report_sha256"], (out / "stabilizer.csv").read_bytes()))
    same = runs[0][1:] == runs[1][1:] and runs[0][0] == runs[1][0] == 0

    text = cfg.read_text()
    bad_parse = tmp_path / "parse.yaml"
    bad_parse.write_text("algebra: {dim: 2\n")
    bad_valid = tmp_path / "valid.yaml"
    bad_valid.write_text(text.replace("p: 0, direction: expand", "p: 4, direction: expand"))
    bad_bound = tmp_path / "bound.yaml"
    bad_bound.write_text(text.replace("bound: 1.000000001", "bound: 0"))
    codes = {name: _cli(["full", "--config", str(p), "--out-dir", str(tmp_path / name)]).returncode
             for name, p in [("parse", bad_parse), ("validation", bad_valid), ("bound", bad_bound)]}
    ok = same and codes == {"parse": 2, "validation": 3, "bound": 1}
    verdict(10, ok, f"hashed region sha256 {runs[0][1][:12]}... identical across runs; "
                    f"exit codes under faults {codes}")


def test_shipped_configs_parse():
    for path in sorted(CONFIGS.glob("*.yaml")):
        cfg = parse_config(path.read_text())
        assert parse_config(json.dumps(cfg.to_dict())) == cfg
