#!/usr/bin/env python3
"""Smoke test for the xlmimo_py extension module.

Builds the module if needed (cargo must be on PATH), imports it, and checks a
handful of end-to-end values: distance criteria, the worst-case phase-error
bound, steering-vector norms, NMSE identities, and a tiny deterministic sweep.
"""

import json
import math
import os
import shutil
import subprocess
import sys

ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


def build_module():
    candidates = [
        os.path.join(ROOT, "target", profile, "libxlmimo_py.so")
        for profile in ("release", "debug")
    ]
    so = next((c for c in candidates if os.path.exists(c)), None)
    if so is None:
        subprocess.check_call(
            [
                "cargo",
                "build",
                "--release",
                "-p",
                "xlmimo-py",
                "--features",
                "extension-module",
            ],
            cwd=ROOT,
        )
        so = candidates[0]
    dest_dir = os.path.join(ROOT, "target", "pymod")
    os.makedirs(dest_dir, exist_ok=True)
    shutil.copy2(so, os.path.join(dest_dir, "xlmimo_py.so"))
    sys.path.insert(0, dest_dir)


def check(name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"smoke {name}: {status} {detail}".rstrip())
    if not ok:
        sys.exit(1)


def main():
    build_module()
    import xlmimo_py as xl

    # Config plumbing.
    cfg = json.loads(xl.default_config())
    check("default-config", cfg["array"]["n_rx"] == 64)
    paper = json.loads(xl.default_config(paper_scale=True))
    check("paper-config", paper["array"]["n_rx"] == 128)

    # Distance criteria at the headline scale.
    rows = dict(
        line.split(",")
        for line in xl.criteria(json.dumps(paper)).strip().splitlines()[1:]
    )
    check(
        "criteria-ard",
        abs(float(rows["mimo_ard"]) - 80.645) < 1e-3,
        f"mimo_ard={rows['mimo_ard']}",
    )
    check(
        "criteria-sopd",
        abs(float(rows["sopd"]) - 9.765) < 1e-3,
        f"sopd={rows['sopd']}",
    )
    check(
        "criteria-parabolic",
        abs(float(rows["parabolic_distance"]) - 4.5) < 0.7,
        f"parabolic={rows['parabolic_distance']}",
    )

    # Worst-case phase error vs the closed-form bound.
    bound, brute, structure_ok = xl.verify_lemma1(json.dumps(paper), 100.0, 48)
    check(
        "lemma1",
        abs(brute / bound - 1.0) < 0.05 and structure_ok,
        f"ratio={brute / bound:.4f}",
    )

    # Steering vectors have unit-modulus entries.
    vec = xl.steering_vector("", "rx", 0.35, 0.01)
    norm = math.sqrt(sum(abs(z) ** 2 for z in vec))
    check("steering-norm", abs(norm - 8.0) < 1e-9, f"norm={norm:.6f}")

    # Channel synthesis and the NMSE identities.
    h = xl.los_channel("", "parabolic", 50.0, 0.4, -0.2, 0.1)
    zero = [[0j] * len(h[0]) for _ in h]
    check("nmse-zero", abs(xl.nmse(zero, h) - 1.0) < 1e-12)
    check("nmse-self", xl.nmse(h, h) == 0.0)

    # A tiny deterministic sweep: identical CSV modulo the timestamp line.
    small = json.loads(xl.default_config())
    small["array"].update({"n_rx": 16, "n_tx": 16})
    small["frontend"].update({"m_rx": 8, "m_tx": 8})
    small["asagm"].update({"q_xi": 33, "q_alpha": 3, "t_iter": 2})
    small["nlos"].update({"q_angle": 16, "q_curv": 2})
    small["pe"].update({"q_theta": 8, "q_range": 8, "neighborhood": 3})
    small["sweep"].update({"points": [10.0], "trials": 2})
    small["estimators"] = ["asagm_smr", "genie_ls"]
    small["record_timing"] = False
    small["threads"] = 1
    text = json.dumps(small)
    strip = lambda csv: "\n".join(
        l for l in csv.splitlines() if not l.startswith("#")
    )
    a, b = strip(xl.run_sweep(text)), strip(xl.run_sweep(text))
    check("sweep-deterministic", a == b)
    check("sweep-shape", len(a.splitlines()) == 3, f"{len(a.splitlines())} lines")

    record = json.loads(xl.run_trial(text, 10.0, 0))
    check(
        "trial-record",
        {o["estimator"] for o in record["outcomes"]} == {"asagm_smr", "genie_ls"},
    )

    print("smoke test complete: all checks passed")


if __name__ == "__main__":
    main()
