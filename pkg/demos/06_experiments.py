"""
Configured experiments
======================

Every experiment is a JSON config.  The harness runs it, evaluates its
checks and writes artifacts; the ``heleshaw`` command does the same from the
shell, e.g. ``heleshaw compare --config checkerboard_interior.json``.
"""

import tempfile

from heleshaw.cli import bundled_config
from heleshaw.harness import load_config, run_experiment

cfg = load_config(bundled_config("checkerboard_interior.json"))
with tempfile.TemporaryDirectory() as out:
    report = run_experiment(cfg, out)
    for check in report.checks:
        print(check.line())
    print("mean sup error by eps:", dict(zip(cfg.eps_list, report.summary["mean_sup_error"])))
