"""Regenerate the bundled scenario files from closed-form rate profiles."""

from pathlib import Path

import numpy as np
import yaml

OUT = Path(__file__).resolve().parents[1] / "src" / "agesirs" / "scenarios"


def nodal(values):
    return [float(f"{v:.12g}") for v in values]


def reference(J=100, omega=10.0):
    a = np.linspace(0.0, omega, J + 1)
    bump = np.exp(-(((a - 4.0) / 1.5) ** 2))
    contact = np.sqrt(0.8) * np.exp(-(((a - 4.0) / 4.0) ** 2))
    taper = 1.0 - a / omega
    return {
        "grid": {"omega": omega, "J": J},
        "horizon": 4.0,
        "seed": 0,
        "output": "out",
        "rates": {
            "beta": nodal(0.05 + 0.35 * bump),
            "gamma": nodal(0.5 + 0.05 * a),
            "delta": nodal(1.0 + 0.5 * np.exp(-a / 3.0)),
            "mu": nodal(0.02 + 0.002 * a**2),
            "theta": 2.0,
            "p": 0.3,
            "q": 0.2,
        },
        "kernel": {"type": "separable", "left": nodal(contact), "right": nodal(contact)},
        "force": {"family": "identity"},
        "initial": {
            "s": nodal(0.15 * np.exp(-0.25 * a) * taper),
            "i": nodal(0.04 * np.exp(-(((a - 3.0) / 1.5) ** 2)) * taper),
            "r": nodal(0.02 * np.exp(-0.25 * a) * taper),
        },
        "solver": {"tol": 1.0e-8, "max_iter": 200},
    }


def saturating():
    doc = reference()
    a = np.linspace(0.0, 10.0, 101)
    doc["force"] = {"family": "saturating", "sigma": nodal(0.5 + 0.1 * a), "amplitude": 0.3, "period": 1.0}
    return doc


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    for name, doc in (("reference", reference()), ("saturating", saturating())):
        with open(OUT / f"{name}.yaml", "w") as fh:
            yaml.safe_dump(doc, fh, default_flow_style=None, sort_keys=False, width=100)
