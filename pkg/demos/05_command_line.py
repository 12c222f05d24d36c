"""
The command line
================

``dlqg check|solve|simulate PROBLEM.json`` prints a JSON report and exits
with a documented code. The problem files used here live in ``problems/``.
"""

# %%
import subprocess
import sys
from pathlib import Path

here = Path(__file__).resolve().parent


def dlqg(*args):
    res = subprocess.run([sys.executable, "-m", "dlqg", *args], capture_output=True, text=True)
    print("$ dlqg", " ".join(args), f"  -> exit {res.returncode}")
    print(res.stdout.strip() or res.stderr.strip())


# %%
dlqg("check", str(here / "problems" / "noise_illposed.json"))
dlqg("solve", str(here / "problems" / "scalar.json"))
dlqg("simulate", str(here / "problems" / "descriptor.json"), "--paths", "500", "--seed", "1")
